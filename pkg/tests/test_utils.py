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

import logging
import unittest

import numpy as np

import lsst.utils.tests

from halfline.potentialModel import ThetaClass
from halfline.utils import (AaaApproximant, ToleranceEnforcer, VerificationError, cellTransfer,
                            centeredDerivative, cosineTransformEven, cumulativeIntegral, differentiate5Point,
                            fourierTransformHermitian, raisedCosineTaper, roundFloats, signChangeRoots,
                            trapezoidWeights)


class QuadratureTestCase(lsst.utils.tests.TestCase):

    def testCellTransfer(self):
        cosh, sinhOverEta, etaSinh = cellTransfer(0.0, 0.3)
        self.assertFloatsAlmostEqual(cosh.real, 1.0, rtol=1e-15, atol=None)
        self.assertFloatsAlmostEqual(sinhOverEta.real, 0.3, rtol=1e-15, atol=None)
        self.assertFloatsAlmostEqual(etaSinh.real, 0.0, rtol=None, atol=1e-15)
        # Oscillatory cell: eta = 2i over half a unit.
        cosh, sinhOverEta, etaSinh = cellTransfer(-4.0, 0.5)
        self.assertFloatsAlmostEqual(cosh.real, np.cos(1.0), rtol=1e-14, atol=None)
        self.assertFloatsAlmostEqual(sinhOverEta.real, 0.5*np.sin(1.0), rtol=1e-14, atol=None)
        self.assertFloatsAlmostEqual(etaSinh.real, -2.0*np.sin(1.0), rtol=1e-14, atol=None)
        # Small-argument series against the closed form.
        cosh, sinhOverEta, _ = cellTransfer(1e-4, 1.0)
        self.assertFloatsAlmostEqual(sinhOverEta.real, np.sinh(1e-2)/1e-2, rtol=1e-14, atol=None)

    def testTrapezoidWeights(self):
        grid = np.array([0.0, 0.5, 2.0, 2.25])
        weights = trapezoidWeights(grid)
        self.assertFloatsAlmostEqual(weights, np.array([0.25, 1.0, 0.875, 0.125]), rtol=1e-15, atol=None)
        self.assertFloatsEqual(trapezoidWeights([1.0]), np.zeros(1))

    def testCumulativeIntegral(self):
        x = np.linspace(0.0, np.pi, 201)
        h = x[1] - x[0]
        corrected = cumulativeIntegral(np.sin(x), np.cos(x), h)
        self.assertFloatsAlmostEqual(corrected, 1.0 - np.cos(x), rtol=None, atol=1e-9)
        plain = cumulativeIntegral(np.sin(x), None, h)
        self.assertGreater(np.max(np.abs(plain - 1.0 + np.cos(x))), 1e-6)

    def testDifferentiate5Point(self):
        x = np.linspace(-1.0, 2.0, 31)
        values = x**4 - 2.0*x**3 + x
        self.assertFloatsAlmostEqual(differentiate5Point(values, x[1] - x[0]), 4.0*x**3 - 6.0*x**2 + 1.0,
                                     rtol=None, atol=1e-9)

    def testTaper(self):
        grid = np.linspace(0.0, 10.0, 101)
        taper = raisedCosineTaper(grid, 0.1)
        self.assertFloatsEqual(taper[grid < 8.95], np.ones(90))
        self.assertFloatsAlmostEqual(taper[-1], 0.0, rtol=None, atol=1e-15)
        self.assertTrue(np.all(np.diff(taper) <= 0))


class TransformTestCase(lsst.utils.tests.TestCase):

    def testCosineTransformLorentzian(self):
        k = np.linspace(0.0, 50.0, 5001)
        u = np.linspace(0.0, 3.0, 31)
        result = cosineTransformEven(k, 1.0/(k*k + 1.0), u, tailOrder=1)
        self.assertFloatsAlmostEqual(result.tailCoefficients, np.array([1.0]), rtol=None, atol=1e-10)
        self.assertFloatsAlmostEqual(result.values, np.exp(-u), rtol=None, atol=1e-9)
        self.assertLess(result.tailEnergy, 1e-10)

    def testCosineTransformGaussian(self):
        k = np.linspace(0.0, 12.0, 1201)
        u = np.linspace(0.0, 4.0, 21)
        result = cosineTransformEven(k, np.exp(-k*k), u, tailOrder=0)
        expected = np.exp(-0.25*u*u)/np.sqrt(np.pi)
        self.assertFloatsAlmostEqual(result.values, expected, rtol=None, atol=1e-10)
        with self.assertRaises(ValueError):
            cosineTransformEven(k, np.exp(-k*k), u, tailOrder=3)

    def testHermitianTransformGaussian(self):
        k = np.linspace(0.0, 12.0, 1201)
        y = np.linspace(0.0, 4.0, 21)
        result = fourierTransformHermitian(k, np.exp(-k*k), y, tailOrder=0)
        expected = np.exp(-0.25*y*y)/(2.0*np.sqrt(np.pi))
        self.assertFloatsAlmostEqual(result.values, expected, rtol=None, atol=1e-10)

    def testHermitianTailIsRemoved(self):
        k = np.linspace(0.0, 100.0, 10001)
        y = np.linspace(0.05, 1.0, 20)
        result = fourierTransformHermitian(k, 1j/(k + 1j), y, tailOrder=3)
        self.assertFloatsAlmostEqual(result.tailCoefficients, np.array([1.0, 0.0, 0.0]),
                                     rtol=None, atol=1e-6)
        self.assertFloatsAlmostEqual(result.values, np.zeros(y.size), rtol=None, atol=1e-6)
        with self.assertRaises(ValueError):
            fourierTransformHermitian(k, 1j/(k + 1j), np.array([-1.0]))

    def testGridMustStartAtZero(self):
        k = np.linspace(1.0, 10.0, 100)
        with self.assertRaises(ValueError):
            cosineTransformEven(k, 1.0/(k*k + 1.0), np.zeros(1))


class RationalApproximantTestCase(lsst.utils.tests.TestCase):

    def setUp(self):
        self.poles = np.array([0.5 + 2j, -1.5j])
        self.z = np.linspace(-10.0, 10.0, 401) + 0j
        self.f = 1.0/(self.z - self.poles[0]) + 1.0/(self.z - self.poles[1])

    def testFit(self):
        approximant = AaaApproximant.fit(self.z, self.f, tolerance=1e-10)
        self.assertTrue(approximant.converged)
        self.assertLessEqual(approximant.degree, 3)
        test = np.array([0.3 + 0.1j, -4.0 + 0.5j, 7.0])
        exact = 1.0/(test - self.poles[0]) + 1.0/(test - self.poles[1])
        self.assertLess(np.max(np.abs(approximant(test) - exact)), 1e-8)

    def testPolesZerosResidues(self):
        approximant = AaaApproximant.fit(self.z, self.f, tolerance=1e-10)
        poles = approximant.poles()
        poles = poles[np.abs(poles) < 100]
        self.assertEqual(poles.size, 2)
        for pole in self.poles:
            self.assertLess(np.min(np.abs(poles - pole)), 1e-7)
        residues = approximant.residues(self.poles)
        self.assertLess(np.max(np.abs(residues - 1.0)), 1e-6)
        zeros = approximant.zeros()
        self.assertLess(np.min(np.abs(zeros - (0.25 + 0.25j))), 1e-7)

    def testConstant(self):
        approximant = AaaApproximant.fit(self.z, np.full(self.z.size, 2.0 + 0j))
        self.assertEqual(approximant.degree, 0)
        self.assertLess(abs(approximant(3.0 + 1j) - 2.0), 1e-14)


class RootTestCase(lsst.utils.tests.TestCase):

    def testCenteredDerivative(self):
        self.assertFloatsAlmostEqual(centeredDerivative(np.sin, 1.0), np.cos(1.0), rtol=None, atol=1e-8)

    def testSignChangeRoots(self):
        grid = np.linspace(0.0, 8.0, 81)
        roots = signChangeRoots(np.cos, grid, np.cos(grid))
        self.assertFloatsAlmostEqual(roots, np.array([0.5, 1.5, 2.5])*np.pi, rtol=None, atol=1e-10)


class RoundFloatsTestCase(lsst.utils.tests.TestCase):

    def testRounding(self):
        data = {"a": 1.23456789012345, "b": np.nan, "c": 1.0 + 2.0j, "d": ThetaClass.DIRICHLET,
                "e": np.arange(2), "f": (np.float64(2.5), True), 3: None}
        rounded = roundFloats(data, digits=4)
        self.assertEqual(rounded, {"a": 1.235, "b": None, "c": {"re": 1.0, "im": 2.0}, "d": "dirichlet",
                                   "e": [0, 1], "f": [2.5, True], "3": None})
        self.assertIsInstance(rounded["f"][1], bool)


class ToleranceEnforcerTestCase(lsst.utils.tests.TestCase):

    def setUp(self):
        self.log = logging.getLogger("halfline.tests")

    def testPass(self):
        enforcer = ToleranceEnforcer(requireLess={"a": 1e-3, "b": 1.0}, doRaise=True)
        self.assertTrue(enforcer({"a": 1e-4, "b": None}, self.log, "check"))

    def testWarn(self):
        enforcer = ToleranceEnforcer(requireLess={"a": 1e-3})
        with self.assertLogs("halfline.tests", level="WARNING"):
            self.assertFalse(enforcer({"a": 1e-2}, self.log, "check"))

    def testRaise(self):
        enforcer = ToleranceEnforcer(requireLess={"a": 1e-3}, doRaise=True)
        with self.assertRaises(VerificationError) as context:
            enforcer({"a": 1e-2}, self.log, "check")
        self.assertEqual(context.exception.residuals, {"a": 1e-2})


class MemoryTester(lsst.utils.tests.MemoryTestCase):
    pass


def setup_module(module):
    lsst.utils.tests.init()


if __name__ == "__main__":
    lsst.utils.tests.init()
    unittest.main()
