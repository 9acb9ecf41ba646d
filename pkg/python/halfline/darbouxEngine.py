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

"""Darboux transformations that add or remove one bound state while
keeping the potential supported in [0, b].
"""

import dataclasses
import enum
import functools
import logging

import numpy as np

from lsst.pex.config import Config, Field
from lsst.pipe.base import Task, Struct

from .potentialModel import BoundState, SampledFunction, makeOperatorSpec
from .directSolver import (hFunction, hDerivative, jostFunction, normingConstants,
                           regularSolutionWithDerivative)
from .utils import ToleranceEnforcer, VerificationError, cumulativeIntegral

__all__ = ["DarbouxDirection", "DarbouxStep", "IneligibleResonanceError", "outputCellCount",
           "supportPreservingNormingConstant", "addBoundState", "removeBoundState", "transformJost",
           "transformScattering", "transformRegularSolution", "darbouxCorrection", "projectCells",
           "verifyJostConsistency", "DarbouxConfig", "DarbouxTask"]

log = logging.getLogger(__name__)

np.seterr(all="ignore")


class DarbouxDirection(enum.Enum):
    ADD = "add"
    REMOVE = "remove"

    @property
    def sign(self):
        return 1.0 if self is DarbouxDirection.ADD else -1.0


class IneligibleResonanceError(ValueError):
    """The support-preserving norming constant of a resonance is not
    positive, so it cannot become a bound state.
    """
    def __init__(self, gamma, gSquared):
        ValueError.__init__(self, "Resonance at beta = -%.10g is ineligible: g^2 = %.6g <= 0" %
                            (gamma, gSquared))
        self.gamma = gamma
        self.gSquared = gSquared


@dataclasses.dataclass(frozen=True, eq=False)
class DarbouxStep:
    """Outcome of one Darboux transformation.

    ``boundary`` is the boundary condition of the new operator; on an add
    ``boundState`` carries the new bound state, on a remove it is `None`.
    ``supportResidual`` is the largest correction found on (b, 2b] and
    ``projectionError`` the relative gap between ``phi(i gamma, x)`` of the
    new piecewise constant operator and its exact closed form.
    """
    direction: DarbouxDirection
    gamma: float
    gSquared: float
    boundary: object
    spec: object
    boundState: BoundState = None
    supportResidual: float = 0.0
    nCells: int = 0
    projectionError: float = 0.0

    def toDict(self):
        return {"direction": self.direction.value, "gamma": self.gamma, "g_squared": self.gSquared,
                "spec": self.spec.toDict(),
                "bound_state": None if self.boundState is None else self.boundState.toDict(),
                "support_residual": self.supportResidual, "n_cells": self.nCells,
                "projection_error": self.projectionError}


# Cells on which phi(i gamma, x) and its integral are tabulated, whatever
# the output resolution.
PROFILE_CELLS = 8192


def outputCellCount(nCells, refineFactor=8, minCells=0, maxCells=16384):
    """Number of output cells: ``refineFactor*nCells``, raised to
    ``minCells`` and lowered to ``maxCells``.

    The count is always an even multiple of ``nCells``, with at least two
    output cells per input cell even when that exceeds ``maxCells``.
    """
    factor = max(refineFactor, -(-minCells//nCells))
    factor = min(factor, maxCells//nCells)
    return nCells*max(2, factor - factor % 2)


@functools.lru_cache(maxsize=32)
def _gammaProfile(spec, gamma, nOut):
    """phi(i gamma, x), phi' and int_0^x phi^2 at the nodes of ``nOut``
    uniform cells.
    """
    sub = max(1, -(-PROFILE_CELLS//nOut))
    fine = np.linspace(0.0, spec.b, sub*nOut + 1)
    phi, phiPrime = (a.real for a in regularSolutionWithDerivative(spec, 1j*gamma, fine))
    integral = cumulativeIntegral(phi**2, 2.0*phi*phiPrime, spec.b/(sub*nOut))
    return Struct(x=fine[::sub], h=spec.b/nOut, phi=phi[::sub], phiPrime=phiPrime[::sub],
                  integral=integral[::sub])


def _profileBeyond(spec, profile, gamma, x):
    """phi, phi' and int_0^x phi^2 for x >= b, where phi'' = gamma^2 phi."""
    p = profile.phi[-1]
    q = profile.phiPrime[-1]/gamma
    t = np.asarray(x, dtype=float) - spec.b
    ch, sh = np.cosh(gamma*t), np.sinh(gamma*t)
    sh2, ch2 = np.sinh(2.0*gamma*t), np.cosh(2.0*gamma*t)
    phi = p*ch + q*sh
    phiPrime = gamma*(p*sh + q*ch)
    integral = (profile.integral[-1] + p*p*(0.5*t + sh2/(4.0*gamma)) + p*q*(ch2 - 1.0)/(2.0*gamma)
                + q*q*(-0.5*t + sh2/(4.0*gamma)))
    return phi, phiPrime, integral


def _profileAt(spec, profile, gamma, x):
    x = np.asarray(x, dtype=float)
    inside = x <= spec.b
    phi, phiPrime, integral = _profileBeyond(spec, profile, gamma, np.maximum(x, spec.b))
    phi = np.where(inside, np.interp(x, profile.x, profile.phi), phi)
    phiPrime = np.where(inside, np.interp(x, profile.x, profile.phiPrime), phiPrime)
    integral = np.where(inside, np.interp(x, profile.x, profile.integral), integral)
    return phi, phiPrime, integral


def _correction(phi, phiPrime, integral, gSquared, direction):
    s = direction.sign
    denominator = 1.0 + s*gSquared*integral
    return -s*2.0*gSquared*(2.0*phi*phiPrime/denominator - s*gSquared*phi**4/denominator**2)


def _checkZero(spec, beta, zeroTolerance, what):
    value = float(hFunction(spec, beta))
    slope = float(hDerivative(spec, beta))
    if abs(value) > zeroTolerance*max(1.0, abs(slope)):
        raise ValueError("beta = %.10g is not %s: H = %.3g" % (beta, what, value))
    return slope


def supportPreservingNormingConstant(spec, gamma, nOut=None, checkZero=True, zeroTolerance=1e-6):
    """Norming constant ``g^2`` that keeps the support of the potential
    when the resonance at ``beta = -gamma`` is turned into a bound state.

    ``g^2 = 2 gamma/(phi(b)^2 - 2 gamma int_0^b phi^2)`` with
    ``phi = phi(i gamma, x)``.  The value is returned even when it is not
    positive (ineligible resonance).

    Raises
    ------
    ValueError
        If ``checkZero`` and ``H(-gamma)`` does not vanish.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive, got %r" % (gamma,))
    if checkZero:
        _checkZero(spec, -gamma, zeroTolerance, "an imaginary resonance")
    nOut = outputCellCount(spec.nCells) if nOut is None else nOut
    profile = _gammaProfile(spec, float(gamma), nOut)
    return float(2.0*gamma/(profile.phi[-1]**2 - 2.0*gamma*profile.integral[-1]))


def _supportResidual(spec, profile, gamma, gSquared, direction, nSamples):
    xs = spec.b*(1.0 + np.arange(1, nSamples + 1)/nSamples)
    phi, phiPrime, integral = _profileBeyond(spec, profile, gamma, xs)
    denominator = 1.0 + direction.sign*gSquared*integral
    if np.any(denominator <= 0):
        raise VerificationError("Darboux denominator vanishes on (b, 2b]",
                                {"minDenominator": float(np.min(denominator))})
    return float(np.max(np.abs(_correction(phi, phiPrime, integral, gSquared, direction))))


def projectCells(averages):
    """Cell values of a piecewise constant operator that follows a smooth
    potential with the given exact cell averages.

    Cells are taken in pairs; each pair keeps its mean while its two values
    are pushed apart by a sixth of their difference, so that the transfer
    matrix over the pair agrees with that of the smooth potential through
    fourth order in the cell width.  ``averages`` must have an even length
    and the potential must be smooth inside each pair.
    """
    pairs = np.asarray(averages, dtype=float).reshape(-1, 2)
    shift = (pairs[:, 1] - pairs[:, 0])/6.0
    return np.column_stack((pairs[:, 0] - shift, pairs[:, 1] + shift)).ravel()


def _projectionError(newSpec, profile, gamma, denominator):
    """Relative sup-norm gap between phi(i gamma, x) of ``newSpec`` and the
    exact ``phi/(1 +- g^2 int_0^x phi^2)`` at the profile nodes.
    """
    exact = profile.phi/denominator
    actual = regularSolutionWithDerivative(newSpec, 1j*gamma, profile.x)[0].real
    return float(np.max(np.abs(actual - exact))/np.max(np.abs(exact)))


def _transform(spec, gamma, gSquared, direction, nOut, maxCells, projectionTolerance, supportSamples,
               supportTolerance):
    """Apply the transformation on ``nOut`` cells, doubling them while the
    projection error exceeds ``projectionTolerance`` and ``maxCells``
    allows.
    """
    s = direction.sign
    boundary = spec.boundary.shifted(s*gSquared)
    while True:
        profile = _gammaProfile(spec, float(gamma), nOut)
        denominator = 1.0 + s*gSquared*profile.integral
        if np.any(denominator <= 0):
            raise VerificationError("Darboux denominator is not positive on [0, b]",
                                    {"minDenominator": float(np.min(denominator))})
        bracket = 2.0*gSquared*profile.phi**2/denominator
        averages = np.repeat(spec.potential.values, nOut//spec.nCells) - s*np.diff(bracket)/profile.h
        newSpec = makeOperatorSpec(spec.b, projectCells(averages), boundary)
        error = _projectionError(newSpec, profile, gamma, denominator)
        if error <= projectionTolerance or 2*nOut > maxCells:
            break
        log.debug("Projection error %.3g on %d cells; refining", error, nOut)
        nOut *= 2
    if error > projectionTolerance:
        log.warning("Projection error %.3g on %d cells exceeds %.3g", error, nOut, projectionTolerance)
    residual = _supportResidual(spec, profile, gamma, gSquared, direction, supportSamples)
    limit = supportTolerance*(1.0 + np.max(np.abs(spec.potential.values)))
    if residual >= limit:
        raise VerificationError("Darboux correction does not vanish beyond b: %.3g >= %.3g" %
                                (residual, limit), {"supportResidual": residual})
    return Struct(spec=newSpec, supportResidual=residual, nCells=nOut, projectionError=error)


def addBoundState(spec, gamma, gSquared=None, refineFactor=8, minCells=0, maxCells=16384,
                  projectionTolerance=1e-10, supportSamples=64, supportTolerance=1e-6,
                  normingTolerance=1e-4):
    """Turn the resonance at ``beta = -gamma`` into a bound state at
    ``k = i gamma``.

    Parameters
    ----------
    spec : `halfline.OperatorSpec`
        Operator with ``H(-gamma) = 0``.
    gamma : `float`
        Resonance location (> 0).
    gSquared : `float`, optional
        Norming constant to impose; defaults to the support-preserving
        value.
    refineFactor, minCells, maxCells : `int`, optional
        Starting resolution of the output grid (see `outputCellCount`);
        ``maxCells`` also bounds the refinement.
    projectionTolerance : `float`, optional
        Relative projection error at which refinement stops.
    supportSamples : `int`, optional
        Number of points on (b, 2b] where the correction is checked.
    supportTolerance : `float`, optional
        Relative bound on the correction beyond ``b``.
    normingTolerance : `float`, optional
        Relative agreement expected between the imposed norming constants
        and those recomputed on the new operator; a mismatch is logged.

    Returns
    -------
    step : `DarbouxStep`

    Raises
    ------
    IneligibleResonanceError
        If ``gSquared`` is not positive.
    VerificationError
        If the correction does not vanish beyond ``b``.
    """
    nOut = outputCellCount(spec.nCells, refineFactor, minCells, maxCells)
    slope = _checkZero(spec, -gamma, 1e-6, "an imaginary resonance")
    if gSquared is None:
        gSquared = supportPreservingNormingConstant(spec, gamma, nOut, checkZero=False)
    if not gSquared > 0:
        raise IneligibleResonanceError(gamma, gSquared)
    result = _transform(spec, gamma, gSquared, DarbouxDirection.ADD, nOut, maxCells, projectionTolerance,
                        supportSamples, supportTolerance)
    g = float(np.sqrt(gSquared))
    boundState = BoundState(float(gamma), g, g*abs(slope))
    try:
        check = normingConstants(result.spec, gamma)
        mismatch = max(abs(check.g**2 - gSquared)/gSquared, abs(check.m - boundState.m)/boundState.m)
        if mismatch > normingTolerance:
            log.warning("Norming constants of the new bound state at %.6g disagree by %.3g", gamma, mismatch)
    except ValueError as e:
        log.warning("Could not recompute norming constants after the add: %s", e)
    log.debug("Added bound state at %.8g with g^2 = %.8g on %d cells", gamma, gSquared, result.nCells)
    return DarbouxStep(DarbouxDirection.ADD, float(gamma), float(gSquared), result.spec.boundary,
                       result.spec, boundState, result.supportResidual, result.nCells,
                       result.projectionError)


def removeBoundState(spec, gamma, g, refineFactor=8, minCells=0, maxCells=16384, projectionTolerance=1e-10,
                     supportSamples=64, supportTolerance=1e-6):
    """Remove the bound state at ``k = i gamma`` with norming constant ``g``.

    Raises
    ------
    ValueError
        If ``gamma`` is not a bound state of ``spec``.
    VerificationError
        If ``1 - g^2 int phi^2`` is not positive on [0, 2b] or the
        correction does not vanish beyond ``b``.
    """
    if not g > 0:
        raise ValueError("Norming constant g must be positive, got %r" % (g,))
    _checkZero(spec, gamma, 1e-6, "a bound state")
    nOut = outputCellCount(spec.nCells, refineFactor, minCells, maxCells)
    gSquared = float(g)**2
    result = _transform(spec, gamma, gSquared, DarbouxDirection.REMOVE, nOut, maxCells, projectionTolerance,
                        supportSamples, supportTolerance)
    log.debug("Removed bound state at %.8g on %d cells", gamma, result.nCells)
    return DarbouxStep(DarbouxDirection.REMOVE, float(gamma), gSquared, result.spec.boundary, result.spec,
                       None, result.supportResidual, result.nCells, result.projectionError)


def _jostFactor(k, gamma, direction):
    factor = (k - 1j*gamma)/(k + 1j*gamma)
    return factor if direction is DarbouxDirection.ADD else 1.0/factor


def transformJost(samples, gamma, direction=DarbouxDirection.ADD):
    """Rational update of sampled Jost function values."""
    return SampledFunction(samples.grid, samples.values*_jostFactor(samples.grid, gamma, direction))


def transformScattering(samples, gamma, direction=DarbouxDirection.ADD):
    factor = ((samples.grid + 1j*gamma)/(samples.grid - 1j*gamma))**2
    if direction is DarbouxDirection.REMOVE:
        factor = 1.0/factor
    return SampledFunction(samples.grid, samples.values*factor)


def transformRegularSolution(spec, gamma, gSquared, k, xGrid):
    """Regular solution of the operator obtained by adding the bound state
    at ``i gamma`` with norming constant ``gSquared``, built from the old
    operator:

    ``phi(k,x) - g^2 phi(i gamma,x) int_0^x phi(k,y) phi(i gamma,y) dy /
    (1 + g^2 int_0^x phi(i gamma,y)^2 dy)``

    ``xGrid`` must be uniform and start at 0.
    """
    xGrid = np.asarray(xGrid, dtype=float)
    steps = np.diff(xGrid)
    if xGrid.size < 2 or xGrid[0] != 0 or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        raise ValueError("transformRegularSolution needs a uniform grid starting at x = 0")
    refine = max(1, int(np.ceil(steps[0]/(spec.potential.cellWidth/8.0))))
    fine = np.linspace(0.0, xGrid[-1], refine*(xGrid.size - 1) + 1)
    h = fine[1] - fine[0]
    phiK, phiKPrime = regularSolutionWithDerivative(spec, complex(k), fine)
    phiG, phiGPrime = (a.real for a in regularSolutionWithDerivative(spec, 1j*gamma, fine))
    overlap = cumulativeIntegral(phiK*phiG, phiKPrime*phiG + phiK*phiGPrime, h)
    norm = cumulativeIntegral(phiG**2, 2.0*phiG*phiGPrime, h)
    result = phiK - gSquared*phiG*overlap/(1.0 + gSquared*norm)
    return SampledFunction(xGrid, result[::refine])


def darbouxCorrection(spec, gamma, gSquared, x, direction=DarbouxDirection.ADD, nOut=None):
    """Pointwise change ``V_new - V_old`` of a Darboux transformation at any
    ``x >= 0``, including beyond ``b``.
    """
    nOut = outputCellCount(spec.nCells, minCells=PROFILE_CELLS) if nOut is None else nOut
    profile = _gammaProfile(spec, float(gamma), nOut)
    phi, phiPrime, integral = _profileAt(spec, profile, gamma, x)
    return _correction(phi, phiPrime, integral, gSquared, direction)


def verifyJostConsistency(oldSpec, newSpec, gamma, kGrid, direction=DarbouxDirection.ADD):
    """Largest relative gap between the Jost function of ``newSpec`` solved
    directly and the rational update of that of ``oldSpec``.
    """
    kGrid = np.asarray(kGrid, dtype=float)
    direct = jostFunction(newSpec, kGrid)
    updated = jostFunction(oldSpec, kGrid)*_jostFactor(kGrid, gamma, direction)
    return float(np.max(np.abs(direct - updated)/(1.0 + np.abs(direct))))


class DarbouxConfig(Config):
    refineFactor = Field(dtype=int, default=8, doc="Output cells per input cell before clamping")
    minCells = Field(dtype=int, default=0, doc="Minimum number of output cells")
    maxCells = Field(dtype=int, default=16384, doc="Maximum number of output cells, also after refinement")
    projectionTolerance = Field(dtype=float, default=1e-10,
                                doc="Relative error of phi(i gamma, x) at which refinement stops")
    supportSamples = Field(dtype=int, default=64, doc="Points on (b, 2b] where the support is checked")
    supportTolerance = Field(dtype=float, default=1e-6,
                             doc="Relative bound on the correction beyond b (relative to 1 + max|V|)")
    normingTolerance = Field(dtype=float, default=1e-4,
                             doc="Relative mismatch of recomputed norming constants that is logged")
    doVerify = Field(dtype=bool, default=False, doc="Check the Jost function of every result?")
    verifyKMax = Field(dtype=float, default=10.0, doc="Largest wavenumber of the Jost check")
    verifyNk = Field(dtype=int, default=50, doc="Number of wavenumbers in the Jost check")
    jostTolerance = Field(dtype=float, default=1e-6, doc="Tolerance of the Jost check")

    def validate(self):
        Config.validate(self)
        if self.refineFactor < 1:
            raise ValueError("refineFactor must be at least 1")
        if not 0 <= self.minCells <= self.maxCells or self.maxCells < 2:
            raise ValueError("Need 0 <= minCells <= maxCells and maxCells >= 2, got %d, %d" %
                             (self.minCells, self.maxCells))
        if self.supportSamples < 1 or self.verifyNk < 1:
            raise ValueError("supportSamples and verifyNk must be positive")


class DarbouxTask(Task):
    """Add and remove bound states with support-preserving Darboux
    transformations.
    """
    _DefaultName = "darboux"
    ConfigClass = DarbouxConfig

    def _gridKwargs(self):
        return dict(refineFactor=self.config.refineFactor, minCells=self.config.minCells,
                    maxCells=self.config.maxCells, projectionTolerance=self.config.projectionTolerance,
                    supportSamples=self.config.supportSamples,
                    supportTolerance=self.config.supportTolerance)

    def add(self, spec, gamma, gSquared=None):
        step = addBoundState(spec, gamma, gSquared, normingTolerance=self.config.normingTolerance,
                             **self._gridKwargs())
        self.log.info("Added bound state at gamma = %.8g with g^2 = %.8g; cot(theta) -> %s",
                      step.gamma, step.gSquared, step.boundary.cotTheta)
        if self.config.doVerify:
            self.verify(spec, step)
        return step

    def remove(self, spec, gamma, g):
        step = removeBoundState(spec, gamma, g, **self._gridKwargs())
        self.log.info("Removed bound state at gamma = %.8g; cot(theta) -> %s",
                      step.gamma, step.boundary.cotTheta)
        if self.config.doVerify:
            self.verify(spec, step)
        return step

    def verify(self, spec, step):
        """Compare the direct Jost function of ``step.spec`` with the rational
        update of that of ``spec``.

        Raises
        ------
        VerificationError
            If the relative gap exceeds ``jostTolerance``.
        """
        kGrid = np.linspace(0.0, self.config.verifyKMax, self.config.verifyNk)
        residual = verifyJostConsistency(spec, step.spec, step.gamma, kGrid, step.direction)
        enforcer = ToleranceEnforcer(requireLess={"jostConsistency": self.config.jostTolerance},
                                     doRaise=True)
        enforcer({"jostConsistency": residual}, self.log, "Darboux %s" % step.direction.value)
        return residual
