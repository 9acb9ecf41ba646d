# This file is part of halfline.
#
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

import json
import os
import tempfile
import unittest

import numpy as np

import lsst.utils.tests

from halfline.potentialModel import (SampledFunction, readOperatorSpec, readSampledFunction,
                                     writeOperatorSpec, writeSampledFunction)
from halfline.directSolver import DirectSolverTask
from halfline.halfLineScattering import (EXAMPLE_NAMES, HalfLineScatteringConfig, HalfLineScatteringTask,
                                         exampleOperatorSpec, rootSolveExample63A)


class ExampleTestCase(lsst.utils.tests.TestCase):

    def testDepth(self):
        a = rootSolveExample63A()
        self.assertFloatsAlmostEqual(a, 0.857247, rtol=None, atol=5e-6)
        self.assertFloatsAlmostEqual(np.sqrt(a)*np.tan(0.5*np.sqrt(a)), np.tanh(0.5), rtol=None, atol=1e-12)

    def testOperators(self):
        for name in EXAMPLE_NAMES:
            spec = exampleOperatorSpec(name)
            self.assertEqual(spec.b, 1.0)
            self.assertEqual(spec.nCells, 8)
        spec = exampleOperatorSpec("ex63", nCells=4)
        self.assertFloatsAlmostEqual(spec.potential.values, np.array([1.0, 1.0, -0.857247, -0.857247]),
                                     rtol=None, atol=5e-6)
        self.assertTrue(spec.isDirichlet)
        self.assertEqual(exampleOperatorSpec("ex62b").boundary.cotTheta, 6.0)
        with self.assertRaises(ValueError):
            exampleOperatorSpec("ex64")


class CommandLineTestCase(lsst.utils.tests.TestCase):

    def setUp(self):
        self.tempDir = tempfile.TemporaryDirectory()
        self.root = self.tempDir.name

    def tearDown(self):
        self.tempDir.cleanup()

    def writeSpec(self, name):
        path = os.path.join(self.root, "%s.json" % name)
        writeOperatorSpec(exampleOperatorSpec(name), path)
        return path

    def testDirect(self):
        outDir = os.path.join(self.root, "direct")
        status = HalfLineScatteringTask.parseAndRun(["direct", self.writeSpec("ex62b"), "--out", outDir,
                                                     "--kmax", "5", "--dk", "0.5"])
        self.assertEqual(status, 0)
        for name in ("jost.csv", "scattering.csv", "absJost.csv", "boundStates.json"):
            self.assertTrue(os.path.exists(os.path.join(outDir, name)))
        scattering = readSampledFunction(os.path.join(outDir, "scattering.csv"))
        self.assertEqual(len(scattering), 11)
        self.assertLess(np.max(np.abs(scattering.modulus - 1.0)), 1e-10)
        with open(os.path.join(outDir, "boundStates.json")) as inFile:
            states = json.load(inFile)
        self.assertEqual(len(states), 1)
        self.assertFloatsAlmostEqual(states[0]["gamma"], 6.01664, rtol=None, atol=5e-4)

    def testResonances(self):
        outDir = os.path.join(self.root, "resonances")
        status = HalfLineScatteringTask.parseAndRun(["resonances", self.writeSpec("ex62b"), "--out", outDir,
                                                     "--beta-max", "8", "--h-csv"])
        self.assertEqual(status, 0)
        with open(os.path.join(outDir, "resonances.json")) as inFile:
            report = json.load(inFile)
        self.assertEqual(report["M"], 2)
        self.assertEqual(report["beta_max"], 8.0)
        self.assertTrue(os.path.exists(os.path.join(outDir, "hFunction.csv")))

    def testDarbouxAdd(self):
        outPath = os.path.join(self.root, "added", "spec.json")
        args = ["-c", "darboux.minCells=64", "-c", "darboux.maxCells=128",
                "darboux", "add", self.writeSpec("ex61"), "--gamma", "1", "--out", outPath, "--verify"]
        status = HalfLineScatteringTask.parseAndRun(args)
        self.assertEqual(status, 0)
        spec = readOperatorSpec(outPath)
        self.assertEqual(spec.nCells, 64)
        self.assertFloatsAlmostEqual(spec.boundary.cotTheta, 1.0, rtol=None, atol=1e-8)
        self.assertLess(np.max(np.abs(spec.potential.values)), 1e-8)

    def testPerturbedScatteringFailsVerification(self):
        # A unimodular factor with a double zero at k = 2i keeps S(0) and |S|
        # but no operator supported on [0, 1] has the product as its S.
        S = DirectSolverTask().run(exampleOperatorSpec("ex62b")).scattering
        factor = ((S.grid - 2j)/(S.grid + 2j))**2
        path = os.path.join(self.root, "perturbed.csv")
        writeSampledFunction(SampledFunction(S.grid, S.values*factor), path)
        outDir = os.path.join(self.root, "perturbed")
        status = HalfLineScatteringTask.parseAndRun(["invert-s", path, "--out", outDir, "--cells", "64",
                                                     "--verify"])
        self.assertEqual(status, 3)

    def testInvalidInput(self):
        outPath = os.path.join(self.root, "removed.json")
        specPath = self.writeSpec("ex61")
        status = HalfLineScatteringTask.parseAndRun(["darboux", "remove", specPath, "--gamma", "1",
                                                     "--out", outPath])
        self.assertEqual(status, 1)
        status = HalfLineScatteringTask.parseAndRun(["darboux", "add", specPath, "--gamma", "2",
                                                     "--out", outPath])
        self.assertEqual(status, 1)
        self.assertFalse(os.path.exists(outPath))

        badPath = os.path.join(self.root, "bad.json")
        with open(badPath, "w") as outFile:
            outFile.write('{"b": 1.0, "cells": [0.0]}')
        status = HalfLineScatteringTask.parseAndRun(["direct", badPath, "--out", self.root])
        self.assertEqual(status, 1)
        status = HalfLineScatteringTask.parseAndRun(["direct", os.path.join(self.root, "missing.json"),
                                                     "--out", self.root])
        self.assertEqual(status, 1)

    def testBadOverrides(self):
        specPath = self.writeSpec("ex61")
        for override in ("significantDigits=0", "exampleCells=3", "noSuchField=1", "direct.dk"):
            status = HalfLineScatteringTask.parseAndRun(["-c", override, "direct", specPath,
                                                         "--out", self.root])
            self.assertEqual(status, 1)

    def testUnknownExample(self):
        with self.assertRaises(SystemExit):
            HalfLineScatteringTask.parseAndRun(["demo", "ex64", "--out", self.root])

    def testDemo(self):
        outDir = os.path.join(self.root, "demo")
        status = HalfLineScatteringTask.parseAndRun(["-c", "direct.kMax=10.0", "-c", "direct.dk=0.1",
                                                     "-c", "darboux.minCells=64", "demo", "ex61",
                                                     "--out", outDir])
        self.assertEqual(status, 0)
        with open(os.path.join(outDir, "report.json")) as inFile:
            report = json.load(inFile)
        self.assertEqual(report["example"], "ex61")
        self.assertFloatsAlmostEqual(report["darboux_add"]["g_squared"], 2.0, rtol=1e-8, atol=None)
        self.assertFloatsAlmostEqual(report["darboux_add"]["cot_theta"], 1.0, rtol=1e-8, atol=None)
        self.assertEqual(report["resonances"]["M"], 1)
        for name in ("spec.json", "added.json", "scattering.csv", "hFunction.csv"):
            self.assertTrue(os.path.exists(os.path.join(outDir, name)))

    def testDemoNearDoubleZero(self):
        outDir = os.path.join(self.root, "demo62c")
        status = HalfLineScatteringTask.parseAndRun(["-c", "direct.kMax=10.0", "-c", "direct.dk=0.1",
                                                     "-c", "resonance.betaMax=5.0", "demo", "ex62c",
                                                     "--out", outDir])
        self.assertEqual(status, 0)
        with open(os.path.join(outDir, "report.json")) as inFile:
            report = json.load(inFile)
        resonances = report["resonances"]["resonances"]
        self.assertEqual(len(resonances), 1)
        self.assertFalse(resonances[0]["simple"])
        self.assertFalse(resonances[0]["eligible"])
        self.assertFloatsAlmostEqual(resonances[0]["gamma"], 3.6205, rtol=None, atol=2e-3)
        self.assertEqual(report["resonances"]["M"], 0)


class ConfigTestCase(lsst.utils.tests.TestCase):

    def testDefaults(self):
        config = HalfLineScatteringConfig()
        config.validate()
        self.assertEqual(config.direct.kMax, 100.0)
        self.assertEqual(config.direct.dk, 0.01)
        self.assertEqual(config.marchenko.nCells, 512)
        self.assertEqual(config.resonance.nearDoubleTolerance, 1e-9)
        self.assertEqual(config.resonance.doubleSlopeTolerance, 1e-6)
        self.assertEqual(config.resonance.mergeSeparation, 0.0)

    def testValidation(self):
        config = HalfLineScatteringConfig()
        config.exampleCells = 7
        with self.assertRaises(ValueError):
            config.validate()
        config = HalfLineScatteringConfig()
        config.marchenko.nCells = 2
        with self.assertRaises(ValueError):
            config.validate()


class MemoryTester(lsst.utils.tests.MemoryTestCase):
    pass


def setup_module(module):
    lsst.utils.tests.init()


if __name__ == "__main__":
    lsst.utils.tests.init()
    unittest.main()
