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

from halfline.potentialModel import BoundaryParameter, integralOfPotential, makeOperatorSpec
from halfline.directSolver import (DirectSolverConfig, DirectSolverTask, boundStateGammas, boundStates,
                                   fullLineCoefficients, hFunction, isExceptional, jostBoundaryTrace,
                                   jostFunction, jostSolution, jostWronskianDefect, normingConstants,
                                   regularSolution, scatteringMatrix)
from halfline.halfLineScattering import exampleOperatorSpec


def wellTrace(v, k):
    """Closed-form Jost solution and derivative at x = 0 for a constant
    well ``v`` on (0, 1).
    """
    k = np.asarray(k, dtype=complex)
    eta = np.sqrt(v - k*k)
    f0 = np.exp(1j*k)*(np.cosh(eta) - 1j*k*np.sinh(eta)/eta)
    fp0 = np.exp(1j*k)*(-eta*np.sinh(eta) + 1j*k*np.cosh(eta))
    return f0, fp0


class JostFunctionTestCase(lsst.utils.tests.TestCase):

    def setUp(self):
        self.spec = exampleOperatorSpec("ex62a")
        self.k = np.array([0.3, 2.0, 7.5, 2j, 1.0 + 1j, -3.0 - 0.5j, 0.5j])

    def testClosedFormTrace(self):
        for v, name in ((-10.0, "ex62a"), (-0.2, "ex62b"), (0.003521, "ex62c")):
            trace = jostBoundaryTrace(exampleOperatorSpec(name), self.k)
            f0, fp0 = wellTrace(v, self.k)
            self.assertLess(np.max(np.abs(trace.f0 - f0)/np.abs(f0)), 1e-10)
            self.assertLess(np.max(np.abs(trace.fprime0 - fp0)/(1.0 + np.abs(fp0))), 1e-10)

    def testJostFunction(self):
        f0, fp0 = wellTrace(-10.0, self.k)
        expected = -1j*(fp0 + 1.0*f0)
        self.assertLess(np.max(np.abs(jostFunction(self.spec, self.k) - expected)/(1.0 + np.abs(expected))),
                        1e-10)
        dirichlet = self.spec.withBoundary(BoundaryParameter.dirichlet())
        self.assertLess(np.max(np.abs(jostFunction(dirichlet, self.k) - f0)), 1e-10*np.max(np.abs(f0)))

    def testFreeJostFunction(self):
        spec = exampleOperatorSpec("ex61")
        k = np.linspace(-5.0, 5.0, 41)
        self.assertLess(np.max(np.abs(jostFunction(spec, k) - (k + 1j))), 1e-12)

    def testSymmetry(self):
        # F(-k*) = conj(F(k)) with a Dirichlet boundary, -conj(F(k)) otherwise.
        for spec in (self.spec, exampleOperatorSpec("ex63")):
            sign = 1.0 if spec.isDirichlet else -1.0
            F = jostFunction(spec, self.k)
            mirrored = jostFunction(spec, -np.conj(self.k))
            self.assertLess(np.max(np.abs(mirrored - sign*np.conj(F))/(1.0 + np.abs(F))), 1e-12)

    def testWronskian(self):
        k = np.linspace(0.1, 20.0, 50)
        for name in ("ex62a", "ex63"):
            defect = jostWronskianDefect(exampleOperatorSpec(name), k)
            self.assertLess(np.max(defect/(1.0 + k*k)), 1e-10)

    def testComplexClosedForm(self):
        rng = np.random.default_rng(7)
        k = rng.uniform(-10.0, 10.0, 100) + 1j*rng.uniform(-3.0, 3.0, 100)
        f0, fp0 = wellTrace(-10.0, k)
        expected = -1j*(fp0 + 1.0*f0)
        F = jostFunction(self.spec, k)
        self.assertLess(np.max(np.abs(F - expected)/(1.0 + np.abs(expected))), 1e-8)
        self.assertLess(np.max(np.abs(jostFunction(exampleOperatorSpec("ex61"), k) - (k + 1j))), 1e-8)

    def testEntire(self):
        # The mean of F over a circle equals F at its center.
        theta = np.linspace(0.0, 2.0*np.pi, 256, endpoint=False)
        for name in ("ex62a", "ex63"):
            spec = exampleOperatorSpec(name)
            for center, radius in ((1.0 + 0.5j, 2.0), (-3.0 - 1.0j, 1.5), (0.0, 4.0)):
                values = jostFunction(spec, center + radius*np.exp(1j*theta))
                mean = np.mean(values)
                self.assertLess(abs(mean - jostFunction(spec, center))/np.max(np.abs(values)), 1e-6)

    def testLargeK(self):
        # F(k) = k + i(int(V)/2 - cot(theta)) + O(1/k), or
        # f(k, 0) = 1 + i int(V)/(2k) + O(1/k^2) for a Dirichlet boundary.
        for k in (1e3, 1e4):
            for name in ("ex62a", "ex62b"):
                spec = exampleOperatorSpec(name)
                constant = 0.5*integralOfPotential(spec) - spec.boundary.cotTheta
                F = jostFunction(spec, np.array([k]))[0]
                self.assertLess(k*abs(F - k - 1j*constant), 100.0)
            spec = exampleOperatorSpec("ex63")
            F = jostFunction(spec, np.array([k]))[0]
            self.assertLess(k*k*abs(F - 1.0 - 0.5j*integralOfPotential(spec)/k), 100.0)


class SolutionTestCase(lsst.utils.tests.TestCase):

    def testRegularSolution(self):
        spec = exampleOperatorSpec("ex62a")
        x = np.linspace(0.0, 1.0, 41)
        k = 1.3
        eta = np.sqrt(-10.0 - k*k + 0j)
        expected = np.cosh(eta*x) - 1.0*np.sinh(eta*x)/eta
        phi = regularSolution(spec, k, x)
        self.assertLess(np.max(np.abs(phi.values - expected)), 1e-10)

    def testRegularSolutionDirichlet(self):
        spec = exampleOperatorSpec("ex62a").withBoundary(BoundaryParameter.dirichlet())
        x = np.linspace(0.0, 1.0, 21)
        k = 2.0
        eta = np.sqrt(-10.0 - k*k + 0j)
        phi = regularSolution(spec, k, x)
        self.assertLess(np.max(np.abs(phi.values - np.sinh(eta*x)/eta)), 1e-10)

    def testJostSolutionBeyondSupport(self):
        spec = exampleOperatorSpec("ex62b")
        x = np.linspace(1.0, 3.0, 11)
        k = 0.7 + 0.2j
        f = jostSolution(spec, k, x)
        self.assertLess(np.max(np.abs(f.values - np.exp(1j*k*x))), 1e-12)

    def testJostSolutionAtOrigin(self):
        spec = exampleOperatorSpec("ex62b")
        k = 2.5
        f = jostSolution(spec, k, np.array([0.0, 0.5]))
        f0, _ = wellTrace(-0.2, k)
        self.assertLess(abs(f.values[0] - f0), 1e-10)


class ScatteringTestCase(lsst.utils.tests.TestCase):

    def testUnitarity(self):
        k = np.linspace(0.0, 50.0, 501)
        for name in ("ex62a", "ex62b", "ex62c", "ex63"):
            S = scatteringMatrix(exampleOperatorSpec(name), k)
            self.assertLess(np.max(np.abs(np.abs(S) - 1.0)), 1e-10)

    def testUnitarityRandom(self):
        k = np.random.default_rng(11).uniform(-50.0, 50.0, 200)
        for name in ("ex62a", "ex62b", "ex63"):
            S = scatteringMatrix(exampleOperatorSpec(name), k)
            self.assertLess(np.max(np.abs(np.abs(S) - 1.0)), 1e-8)

    def testZeroEnergyLimit(self):
        self.assertFalse(isExceptional(exampleOperatorSpec("ex62a")))
        self.assertEqual(scatteringMatrix(exampleOperatorSpec("ex62a"), np.array([0.0]))[0], -1.0)
        self.assertFalse(isExceptional(exampleOperatorSpec("ex63")))
        self.assertEqual(scatteringMatrix(exampleOperatorSpec("ex63"), np.array([0.0]))[0], 1.0)
        spec = makeOperatorSpec(1.0, np.full(4, -0.25*np.pi**2), BoundaryParameter.dirichlet())
        self.assertTrue(isExceptional(spec))
        self.assertEqual(scatteringMatrix(spec, np.array([0.0]))[0], -1.0)

    def testFreeDirichletScattering(self):
        k = np.linspace(0.0, 50.0, 501)
        spec = makeOperatorSpec(1.0, np.zeros(4), BoundaryParameter.dirichlet())
        self.assertLess(np.max(np.abs(scatteringMatrix(spec, k) - 1.0)), 1e-12)
        # S(k) = 1 - i int(V)/k + O(1/k^2) for a Dirichlet boundary.
        S = scatteringMatrix(exampleOperatorSpec("ex63"), np.array([2000.0]))
        self.assertFloatsAlmostEqual(2000.0*(1.0 - S).imag, np.array([0.0713765]), rtol=2e-2, atol=None)

    def testFreeScattering(self):
        k = np.linspace(0.1, 10.0, 100)
        S = scatteringMatrix(exampleOperatorSpec("ex61"), k)
        self.assertLess(np.max(np.abs(S - (k - 1j)/(k + 1j))), 1e-12)

    def testFullLineExample(self):
        coefficients = fullLineCoefficients(exampleOperatorSpec("ex63"), 0.0)
        self.assertFloatsAlmostEqual(complex(coefficients.T).real, 0.973827, rtol=None, atol=5e-4)
        self.assertFloatsAlmostEqual(complex(coefficients.L).real, -0.2273, rtol=None, atol=5e-4)
        self.assertFloatsAlmostEqual(complex(coefficients.R).real, 0.2273, rtol=None, atol=5e-4)

    def testFullLineUnitarity(self):
        k = np.linspace(0.2, 20.0, 40)
        coefficients = fullLineCoefficients(exampleOperatorSpec("ex62a"), k)
        self.assertLess(np.max(np.abs(np.abs(coefficients.T)**2 + np.abs(coefficients.R)**2 - 1.0)), 1e-10)
        self.assertLess(np.max(np.abs(np.abs(coefficients.L) - np.abs(coefficients.R))), 1e-10)


class BoundStateTestCase(lsst.utils.tests.TestCase):

    def testExampleBoundStates(self):
        gammas = boundStateGammas(exampleOperatorSpec("ex62a"), 20.0)
        self.assertFloatsAlmostEqual(gammas, np.array([0.760409, 3.25273]), rtol=None, atol=5e-4)
        gammas = boundStateGammas(exampleOperatorSpec("ex62b"), 20.0)
        self.assertFloatsAlmostEqual(gammas, np.array([6.01664]), rtol=None, atol=5e-4)
        self.assertEqual(boundStateGammas(exampleOperatorSpec("ex62c"), 20.0).size, 0)
        self.assertEqual(boundStateGammas(exampleOperatorSpec("ex63"), 20.0).size, 0)

    def testZerosOfH(self):
        spec = exampleOperatorSpec("ex62a")
        for gamma in boundStateGammas(spec, 20.0):
            self.assertLess(abs(hFunction(spec, gamma)), 1e-9)

    def testNormingConstantRelation(self):
        # phi(i gamma, x) = f(i gamma, x)/f(i gamma, 0), so g = m |f(i gamma, 0)|.
        for name in ("ex62a", "ex62b"):
            spec = exampleOperatorSpec(name)
            for state in boundStates(spec, 20.0):
                f0 = abs(complex(jostBoundaryTrace(spec, 1j*state.gamma).f0))
                self.assertFloatsAlmostEqual(state.g, state.m*f0, rtol=1e-6, atol=None)

    def testNormingConstantDirichlet(self):
        spec = makeOperatorSpec(1.0, np.full(8, -20.0), BoundaryParameter.dirichlet())
        gammas = boundStateGammas(spec, 20.0)
        self.assertGreater(gammas.size, 0)
        state = normingConstants(spec, gammas[0])
        fp0 = abs(complex(jostBoundaryTrace(spec, 1j*state.gamma).fprime0))
        self.assertFloatsAlmostEqual(state.g, state.m*fp0, rtol=1e-6, atol=None)

    def testNotAZero(self):
        with self.assertRaises(ValueError):
            normingConstants(exampleOperatorSpec("ex62a"), 1.5)


class DirectSolverTaskTestCase(lsst.utils.tests.TestCase):

    def testRun(self):
        config = DirectSolverConfig()
        config.kMax = 10.0
        config.dk = 0.1
        task = DirectSolverTask(config=config)
        result = task.run(exampleOperatorSpec("ex62b"))
        self.assertEqual(len(result.jost), 101)
        self.assertFloatsAlmostEqual(result.jost.grid[-1], 10.0, rtol=1e-14, atol=None)
        self.assertFloatsAlmostEqual(result.absJost.real, np.abs(result.jost.values), rtol=1e-15, atol=None)
        self.assertLess(np.max(np.abs(result.scattering.modulus - 1.0)), 1e-10)
        self.assertEqual(result.boundStates.count, 1)

    def testConfigValidation(self):
        config = DirectSolverConfig()
        config.dk = 0.0
        with self.assertRaises(ValueError):
            config.validate()
        config = DirectSolverConfig()
        config.kMax = -1.0
        with self.assertRaises(ValueError):
            config.validate()


class MemoryTester(lsst.utils.tests.MemoryTestCase):
    pass


def setup_module(module):
    lsst.utils.tests.init()


if __name__ == "__main__":
    lsst.utils.tests.init()
    unittest.main()
