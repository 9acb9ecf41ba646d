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

"""Imaginary resonances, i.e. zeros of H(beta) on beta < 0, and their
eligibility for becoming bound states under a support-preserving Darboux
transformation.
"""

import dataclasses
import enum
import logging

import numpy as np
import scipy.optimize as scipyOptimize

from lsst.pex.config import Config, Field
from lsst.pipe.base import Task, Struct

from .potentialModel import BoundStateSet, SampledFunction
from .directSolver import boundStates, hFunction, hDerivative
from .darbouxEngine import supportPreservingNormingConstant
from .utils import centeredDerivative, polishRoot, signChangeRoots

__all__ = ["Eligibility", "ImaginaryZero", "ResonanceEntry", "ResonanceReport", "imaginaryResonances",
           "classifyEligibility", "strippedH", "classifyViaStripped", "maximalEligibleCount", "hSamples",
           "ResonanceAnalysisConfig", "ResonanceAnalysisTask"]

log = logging.getLogger(__name__)


class Eligibility(enum.Enum):
    ELIGIBLE = "eligible"
    INELIGIBLE = "ineligible"


@dataclasses.dataclass(frozen=True)
class ImaginaryZero:
    """Zero of H at ``beta = -gamma``.

    ``partnerGamma`` is set when two sign changes closer than the merge
    separation were reported as one near-double zero.
    """
    gamma: float
    simple: bool = True
    partnerGamma: float = None


@dataclasses.dataclass(frozen=True)
class ResonanceEntry:
    gamma: float
    eligibility: Eligibility
    simple: bool
    gSquared: float = None
    partnerGamma: float = None

    @property
    def eligible(self):
        return self.eligibility is Eligibility.ELIGIBLE

    def toDict(self):
        return {"gamma": self.gamma, "eligible": self.eligible, "simple": self.simple,
                "g_squared": self.gSquared, "partner_gamma": self.partnerGamma}


@dataclasses.dataclass(frozen=True)
class ResonanceReport:
    resonances: tuple
    betaMax: float
    boundStates: BoundStateSet

    @property
    def eligibleGammas(self):
        return np.array([entry.gamma for entry in self.resonances if entry.eligible], dtype=float)

    @property
    def ineligibleGammas(self):
        return np.array([entry.gamma for entry in self.resonances if not entry.eligible], dtype=float)

    @property
    def M(self):
        return len(self.eligibleGammas) + self.boundStates.count

    def alternates(self):
        """Whether every two consecutive eligible resonances have an
        ineligible one between them.
        """
        labels = [entry.eligible for entry in self.resonances]
        return not any(a and b for a, b in zip(labels[:-1], labels[1:]))

    def toDict(self):
        return {"resonances": [entry.toDict() for entry in self.resonances], "M": self.M,
                "beta_max": self.betaMax, "bound_states": self.boundStates.toList()}


def _refineExtremum(func, lower, upper):
    result = scipyOptimize.minimize_scalar(lambda b: abs(func(b)), bounds=(lower, upper), method="bounded",
                                           options={"xatol": 1e-12})
    return float(result.x)


def imaginaryResonances(spec, betaMax, scanStep=None, mergeSeparation=0.0, nearDoubleTolerance=1e-9,
                        doubleSlopeTolerance=1e-6):
    """Zeros of H on ``[-betaMax, 0)``.

    Sign changes on the scan grid give simple zeros (Brent plus a Newton
    polish).  A local minimum of ``|H|`` without a sign change is refined;
    it is a double zero when ``|H| < nearDoubleTolerance*(1 + |beta|)`` and
    ``|H'| < doubleSlopeTolerance`` there, or a pair of simple zeros when
    the refined value flips sign.
    Two simple zeros closer than ``mergeSeparation`` whose intermediate
    extremum obeys the same bounds are merged into one near-double zero,
    reported at the member nearer the origin.

    Parameters
    ----------
    spec : `halfline.OperatorSpec`
        Operator.
    betaMax : `float`
        Search window.
    scanStep : `float`, optional
        Scan step; defaults to ``min(0.01, betaMax/1e4)``.
    mergeSeparation : `float`, optional
        Largest gap between two sign changes reported as one zero; zero
        disables merging.
    nearDoubleTolerance : `float`, optional
        Relative bound on ``|H|`` at the extremum of a double zero.
    doubleSlopeTolerance : `float`, optional
        Bound on ``|H'|`` at the extremum of a double zero.

    Returns
    -------
    zeros : `list` of `ImaginaryZero`
        Sorted by increasing ``gamma``.
    """
    if betaMax <= 0:
        raise ValueError("betaMax must be positive, got %r" % (betaMax,))
    step = min(0.01, betaMax/1e4) if scanStep is None else scanStep
    nSteps = int(np.ceil(betaMax/step))
    grid = np.linspace(-betaMax, 0.0, nSteps + 1)[:-1]
    values = hFunction(spec, grid)

    def func(b):
        return float(hFunction(spec, b))

    def isDouble(b):
        return (abs(func(b)) < nearDoubleTolerance*(1.0 + abs(b))
                and abs(float(hDerivative(spec, b))) < doubleSlopeTolerance)

    simple = [polishRoot(func, root) for root in signChangeRoots(func, grid, values)]
    doubles = []
    magnitude = np.abs(values)
    interior = np.arange(1, grid.size - 1)
    dips = interior[(magnitude[interior] < magnitude[interior - 1])
                    & (magnitude[interior] <= magnitude[interior + 1])
                    & (values[interior - 1]*values[interior] > 0)
                    & (values[interior]*values[interior + 1] > 0)]
    for i in dips:
        beta = _refineExtremum(func, grid[i - 1], grid[i + 1])
        value = func(beta)
        if value*values[i] < 0:
            simple.append(scipyOptimize.brentq(func, grid[i - 1], beta, xtol=1e-12))
            simple.append(scipyOptimize.brentq(func, beta, grid[i + 1], xtol=1e-12))
        elif isDouble(beta):
            log.debug("Double zero of H at beta = %.8g (|H| = %.3g)", beta, abs(value))
            doubles.append(ImaginaryZero(-beta, simple=False))

    zeros = []
    simple = sorted(root for root in simple if root < 0)
    i = 0
    while i < len(simple):
        if i + 1 < len(simple) and simple[i + 1] - simple[i] < mergeSeparation:
            lower, upper = simple[i], simple[i + 1]
            peak = scipyOptimize.minimize_scalar(lambda b: -abs(func(b)), bounds=(lower, upper),
                                                 method="bounded", options={"xatol": 1e-12})
            middle = float(peak.x)
            if isDouble(middle):
                log.debug("Merged zeros at beta = %.8g and %.8g into a near-double zero", lower, upper)
                zeros.append(ImaginaryZero(-upper, simple=False, partnerGamma=-lower))
                i += 2
                continue
        zeros.append(ImaginaryZero(-simple[i]))
        i += 1
    zeros.extend(doubles)
    return sorted(zeros, key=lambda zero: zero.gamma)


def classifyEligibility(spec, gamma, simple=True, zeroTolerance=1e-6, tieTolerance=1e-6):
    """Eligibility of the resonance at ``beta = -gamma``.

    Eligible iff ``H'(-gamma)/H(gamma) > 0``.  Double zeros and marginal
    slopes (``|H'(-gamma)| < tieTolerance``) are ineligible.

    Raises
    ------
    ValueError
        If ``-gamma`` is not a zero of H, or ``H(gamma) = 0``.
    """
    if not simple:
        return Eligibility.INELIGIBLE
    value = float(hFunction(spec, -gamma))
    slope = float(hDerivative(spec, -gamma))
    if abs(value) > zeroTolerance*max(1.0, abs(slope)):
        raise ValueError("beta = -%.10g is not an imaginary resonance (H = %.3g)" % (gamma, value))
    mirror = float(hFunction(spec, gamma))
    if mirror == 0:
        raise ValueError("H vanishes at both beta = +-%.10g" % (gamma,))
    if abs(slope) < tieTolerance:
        log.info("Marginal slope H'(-%.8g) = %.3g; treated as ineligible", gamma, slope)
        return Eligibility.INELIGIBLE
    return Eligibility.ELIGIBLE if slope/mirror > 0 else Eligibility.INELIGIBLE


def strippedH(spec, beta, gammas):
    """H with its zeros at the bound states ``gammas`` divided out:
    ``H(beta) prod (beta + gamma_s)/(beta - gamma_s)``.
    """
    beta = np.asarray(beta, dtype=float)
    value = hFunction(spec, beta)
    for gamma in np.atleast_1d(gammas):
        value = value*(beta + gamma)/(beta - gamma)
    return value


def classifyViaStripped(spec, gamma, gammas, simple=True, tieTolerance=1e-6):
    """Eligible iff the stripped H increases through ``beta = -gamma``."""
    if not simple:
        return Eligibility.INELIGIBLE
    slope = float(centeredDerivative(lambda b: strippedH(spec, b, gammas), -gamma))
    if abs(slope) < tieTolerance:
        return Eligibility.INELIGIBLE
    return Eligibility.ELIGIBLE if slope > 0 else Eligibility.INELIGIBLE


def maximalEligibleCount(spec, betaMax, scanStep=None, boundStateScanStep=1e-3):
    """Number of eligible resonances in the window plus the number of
    bound states.
    """
    zeros = imaginaryResonances(spec, betaMax, scanStep)
    eligible = sum(classifyEligibility(spec, zero.gamma, zero.simple) is Eligibility.ELIGIBLE
                   for zero in zeros)
    return eligible + len(boundStates(spec, betaMax, boundStateScanStep))


def hSamples(spec, betaGrid):
    betaGrid = np.asarray(betaGrid, dtype=float)
    return SampledFunction(betaGrid, hFunction(spec, betaGrid))


class ResonanceAnalysisConfig(Config):
    betaMax = Field(dtype=float, default=20.0, doc="Search window for zeros of H on both half axes")
    scanStep = Field(dtype=float, default=None, optional=True,
                     doc="Scan step on beta < 0; default min(0.01, betaMax/1e4)")
    boundStateScanStep = Field(dtype=float, default=1e-3, doc="Scan step on beta > 0")
    mergeSeparation = Field(dtype=float, default=0.0,
                            doc="Largest separation of two sign changes merged into a near-double zero")
    nearDoubleTolerance = Field(dtype=float, default=1e-9,
                                doc="Relative bound on |H| at the extremum of a double zero")
    doubleSlopeTolerance = Field(dtype=float, default=1e-6,
                                 doc="Bound on |H'| at the extremum of a double zero")
    tieTolerance = Field(dtype=float, default=1e-6, doc="Slopes |H'| below this are ineligible ties")
    hSampleStep = Field(dtype=float, default=0.01, doc="Step of the tabulated H(beta)")

    def validate(self):
        Config.validate(self)
        if not self.betaMax > 0:
            raise ValueError("betaMax must be positive, got %r" % (self.betaMax,))
        if self.scanStep is not None and not self.scanStep > 0:
            raise ValueError("scanStep must be positive, got %r" % (self.scanStep,))
        if self.mergeSeparation < 0:
            raise ValueError("mergeSeparation must be non-negative, got %r" % (self.mergeSeparation,))
        if not (self.nearDoubleTolerance > 0 and self.doubleSlopeTolerance > 0):
            raise ValueError("Double-zero tolerances must be positive, got %r, %r"
                             % (self.nearDoubleTolerance, self.doubleSlopeTolerance))
        if not self.hSampleStep > 0:
            raise ValueError("hSampleStep must be positive, got %r" % (self.hSampleStep,))


class ResonanceAnalysisTask(Task):
    """Locate and classify the imaginary resonances of an operator.
    """
    _DefaultName = "resonanceAnalysis"
    ConfigClass = ResonanceAnalysisConfig

    def analyze(self, spec, betaMax=None):
        betaMax = self.config.betaMax if betaMax is None else betaMax
        found = boundStates(spec, betaMax, self.config.boundStateScanStep)
        zeros = imaginaryResonances(spec, betaMax, self.config.scanStep, self.config.mergeSeparation,
                                    self.config.nearDoubleTolerance, self.config.doubleSlopeTolerance)
        entries = []
        for zero in zeros:
            eligibility = classifyEligibility(spec, zero.gamma, zero.simple,
                                              tieTolerance=self.config.tieTolerance)
            stripped = classifyViaStripped(spec, zero.gamma, found.gammas, zero.simple,
                                           tieTolerance=self.config.tieTolerance)
            if stripped is not eligibility:
                self.log.warning("Eligibility criteria disagree at gamma = %.8g: %s vs %s",
                                 zero.gamma, eligibility.value, stripped.value)
            gSquared = supportPreservingNormingConstant(spec, zero.gamma) if zero.simple else None
            entries.append(ResonanceEntry(zero.gamma, eligibility, zero.simple, gSquared, zero.partnerGamma))
        report = ResonanceReport(tuple(entries), betaMax, found)
        if not report.alternates():
            self.log.warning("Eligible resonances do not alternate with ineligible ones")
        return report

    def run(self, spec):
        """Analyze the imaginary axis of an operator.

        Returns
        -------
        result : `lsst.pipe.base.Struct`
            Result struct with components:

            - ``report`` : resonances, bound states and ``M``
              (`ResonanceReport`).
            - ``hSamples`` : H on ``[-betaMax, betaMax]``
              (`halfline.SampledFunction`).
        """
        report = self.analyze(spec)
        nSteps = int(round(2.0*self.config.betaMax/self.config.hSampleStep))
        betaGrid = np.linspace(-self.config.betaMax, self.config.betaMax, nSteps + 1)
        self.log.info("Found %d imaginary resonance(s), %d eligible; %d bound state(s); M = %d",
                      len(report.resonances), len(report.eligibleGammas), report.boundStates.count,
                      report.M)
        return Struct(report=report, hSamples=hSamples(spec, betaGrid))
