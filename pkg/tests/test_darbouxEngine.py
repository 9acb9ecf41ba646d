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

import unittest

import numpy as np

import lsst.utils.tests

from halfline.potentialModel import SampledFunction
from halfline.directSolver import boundStateGammas, jostFunction, scatteringMatrix
from halfline.resonanceAnalyzer import imaginaryResonances
from halfline.darbouxEngine import (DarbouxConfig, DarbouxDirection, DarbouxTask, IneligibleResonanceError,
                                    addBoundState, darbouxCorrection, outputCellCount, projectCells,
                                    removeBoundState, transformJost, transformRegularSolution,
                                    transformScattering, verifyJostConsistency)
from halfline.halfLineScattering import exampleOperatorSpec


class FreeOperatorTestCase(lsst.utils.tests.TestCase):
    """Adding the eligible resonance at i of (V = 0, cot(theta) = -1)."""

    def setUp(self):
        self.spec = exampleOperatorSpec("ex61")

    def testAdd(self):
        step = addBoundState(self.spec, 1.0)
        self.assertIs(step.direction, DarbouxDirection.ADD)
        self.assertFloatsAlmostEqual(step.gSquared, 2.0, rtol=1e-8, atol=None)
        self.assertFloatsAlmostEqual(step.boundary.cotTheta, 1.0, rtol=1e-8, atol=None)
        self.assertLess(np.max(np.abs(step.spec.potential.values)), 1e-8)
        self.assertEqual(step.nCells, 64)
        self.assertLess(step.projectionError, 1e-10)
        self.assertFloatsAlmostEqual(step.boundState.gamma, 1.0, rtol=1e-14, atol=None)
        self.assertFloatsAlmostEqual(step.boundState.g, np.sqrt(2.0), rtol=1e-8, atol=None)
        x = np.linspace(0.0, 2.0, 81)
        self.assertLess(np.max(np.abs(darbouxCorrection(self.spec, 1.0, step.gSquared, x))), 1e-6)

    def testRemove(self):
        added = addBoundState(self.spec, 1.0).spec
        step = removeBoundState(added, 1.0, np.sqrt(2.0))
        self.assertIsNone(step.boundState)
        self.assertFloatsAlmostEqual(step.boundary.cotTheta, -1.0, rtol=1e-8, atol=None)
        self.assertLess(np.max(np.abs(step.spec.potential.values)), 1e-8)

    def testJostAndScatteringUpdates(self):
        k = np.linspace(0.0, 10.0, 101)
        jost = transformJost(SampledFunction(k, jostFunction(self.spec, k)), 1.0)
        self.assertLess(np.max(np.abs(jost.values - (k - 1j))), 1e-12)
        scattering = transformScattering(SampledFunction(k, scatteringMatrix(self.spec, k)), 1.0)
        self.assertLess(np.max(np.abs(scattering.values - (k + 1j)/(k - 1j))), 1e-12)
        back = transformJost(jost, 1.0, DarbouxDirection.REMOVE)
        self.assertLess(np.max(np.abs(back.values - (k + 1j))), 1e-12)

    def testRegularSolution(self):
        x = np.linspace(0.0, 2.0, 41)
        k = 1.7
        phi = transformRegularSolution(self.spec, 1.0, 2.0, k, x)
        expected = np.cos(k*x) - np.sin(k*x)/k
        self.assertLess(np.max(np.abs(phi.values - expected)), 1e-6)
        with self.assertRaises(ValueError):
            transformRegularSolution(self.spec, 1.0, 2.0, k, np.array([0.0, 0.1, 0.3]))

    def testNotAResonance(self):
        with self.assertRaises(ValueError):
            addBoundState(self.spec, 2.0)
        with self.assertRaises(ValueError):
            removeBoundState(self.spec, 1.0, 1.0)


class ExampleTestCase(lsst.utils.tests.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.spec = exampleOperatorSpec("ex62b")
        cls.gamma = imaginaryResonances(cls.spec, 8.0)[0].gamma
        cls.step = addBoundState(cls.spec, cls.gamma)

    def testAddKeepsSupport(self):
        self.assertFloatsAlmostEqual(self.step.gSquared, 1.93209, rtol=1e-3, atol=None)
        self.assertFloatsAlmostEqual(self.step.boundary.cotTheta, 6.0 + self.step.gSquared, rtol=1e-12,
                                     atol=None)
        self.assertEqual(self.step.spec.b, 1.0)
        self.assertLess(self.step.supportResidual, 1e-6*(1.0 + 0.2))
        beyond = np.linspace(1.0, 2.0, 33)[1:]
        self.assertLess(np.max(np.abs(darbouxCorrection(self.spec, self.gamma, self.step.gSquared, beyond))),
                        1e-6)

    def testAddCreatesBoundState(self):
        gammas = boundStateGammas(self.step.spec, 20.0)
        self.assertFloatsAlmostEqual(gammas, np.array([self.gamma, 6.01664]), rtol=None, atol=1e-4)

    def testJostConsistency(self):
        k = np.linspace(0.0, 10.0, 50)
        self.assertLess(verifyJostConsistency(self.spec, self.step.spec, self.gamma, k), 1e-6)

    def testAbsJostInvariance(self):
        k = np.linspace(0.0, 20.0, 101)
        before = np.abs(jostFunction(self.spec, k))
        after = np.abs(jostFunction(self.step.spec, k))
        self.assertLess(np.max(np.abs(after - before)/(1.0 + before)), 1e-6)

    def testRoundTrip(self):
        step = removeBoundState(self.step.spec, self.gamma, self.step.boundState.g)
        self.assertFloatsAlmostEqual(step.boundary.cotTheta, 6.0, rtol=1e-12, atol=None)
        cells = step.spec.potential.cellAverages(self.spec.nCells).values
        self.assertLess(np.max(np.abs(cells - self.spec.potential.values)), 1e-6)

    def testRefinement(self):
        self.assertGreater(self.step.nCells, 64)
        self.assertLessEqual(self.step.nCells, 16384)
        self.assertEqual(self.step.nCells % 16, 0)
        self.assertLess(self.step.projectionError, 1e-8)
        coarse = addBoundState(self.spec, self.gamma, maxCells=128, projectionTolerance=0.0)
        self.assertEqual(coarse.nCells, 128)
        self.assertGreater(coarse.projectionError, self.step.projectionError)
        self.assertFloatsAlmostEqual(coarse.gSquared, self.step.gSquared, rtol=1e-12, atol=None)

    def testIneligible(self):
        spec = exampleOperatorSpec("ex62a")
        gamma = imaginaryResonances(spec, 5.0)[0].gamma
        with self.assertRaises(IneligibleResonanceError) as context:
            addBoundState(spec, gamma)
        self.assertLess(context.exception.gSquared, 0.0)
        with self.assertRaises(IneligibleResonanceError):
            addBoundState(self.spec, self.gamma, gSquared=-1.0)


class DarbouxTaskTestCase(lsst.utils.tests.TestCase):

    def testVerifiedAdd(self):
        config = DarbouxConfig()
        config.doVerify = True
        config.minCells = 2048
        config.maxCells = 4096
        task = DarbouxTask(config=config)
        step = task.add(exampleOperatorSpec("ex61"), 1.0)
        self.assertEqual(step.nCells, 2048)
        self.assertLess(task.verify(exampleOperatorSpec("ex61"), step), 1e-8)
        data = step.toDict()
        self.assertEqual(data["direction"], "add")
        self.assertEqual(data["spec"]["boundary"]["kind"], "non_dirichlet")

    def testOutputCellCount(self):
        self.assertEqual(outputCellCount(8), 64)
        self.assertEqual(outputCellCount(8, minCells=8192), 8192)
        self.assertEqual(outputCellCount(3, refineFactor=5), 12)
        self.assertEqual(outputCellCount(3000), 12000)
        self.assertEqual(outputCellCount(8192), 16384)
        self.assertEqual(outputCellCount(20000), 40000)

    def testProjectCells(self):
        cells = projectCells(np.array([1.0, 3.0, 5.0, 7.0]))
        self.assertFloatsAlmostEqual(cells, np.array([2.0/3.0, 10.0/3.0, 14.0/3.0, 22.0/3.0]), rtol=1e-14,
                                     atol=None)
        self.assertFloatsAlmostEqual(cells.reshape(-1, 2).mean(axis=1), np.array([2.0, 6.0]), rtol=1e-14,
                                     atol=None)
        with self.assertRaises(ValueError):
            projectCells(np.ones(3))

    def testConfigValidation(self):
        config = DarbouxConfig()
        config.minCells = 100
        config.maxCells = 10
        with self.assertRaises(ValueError):
            config.validate()


class MemoryTester(lsst.utils.tests.MemoryTestCase):
    pass


def setup_module(module):
    lsst.utils.tests.init()


if __name__ == "__main__":
    lsst.utils.tests.init()
    unittest.main()
