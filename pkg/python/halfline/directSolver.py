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

"""Direct scattering for piecewise-constant potentials: Jost and regular
solutions by exact cell propagation, the Jost function, the scattering
matrix, bound states with their norming constants and the full-line
coefficients.
"""

import dataclasses
import logging

import numpy as np

from lsst.pex.config import Config, Field
from lsst.pipe.base import Task, Struct

from .potentialModel import BoundState, BoundStateSet, SampledFunction
from .utils import (NumericalError, cellTransfer, cumulativeIntegral, centeredDerivative, polishRoot,
                    signChangeRoots)

__all__ = ["BoundaryTrace", "FullLineCoefficients", "jostBoundaryTrace", "jostFunction",
           "jostSolutionWithDerivative", "jostSolution", "regularSolutionWithDerivative",
           "regularSolution", "scatteringMatrix", "hFunction", "hDerivative", "isExceptional",
           "boundStateGammas", "normingConstants", "boundStates", "fullLineCoefficients",
           "jostWronskianDefect", "DirectSolverConfig", "DirectSolverTask"]

log = logging.getLogger(__name__)

np.seterr(all="ignore")


@dataclasses.dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """Values ``f(k, 0)`` and ``f'(k, 0)`` of the Jost solution."""
    k: np.ndarray
    f0: np.ndarray
    fprime0: np.ndarray


@dataclasses.dataclass(frozen=True, eq=False)
class FullLineCoefficients:
    """Transmission ``T`` and left/right reflection ``L``, ``R`` of the
    potential extended by zero to the whole line.
    """
    k: np.ndarray
    T: np.ndarray
    L: np.ndarray
    R: np.ndarray


def _runs(potential):
    """Merge equal neighbouring cells.

    Returns
    -------
    edges : `numpy.ndarray`
        Left edge of each run followed by ``b``.
    values : `numpy.ndarray`
        Potential on each run.
    """
    values = potential.values
    breaks = np.flatnonzero(np.diff(values) != 0) + 1
    starts = np.concatenate(([0], breaks))
    edges = np.append(starts*potential.cellWidth, potential.b)
    return edges, values[starts]


def jostBoundaryTrace(spec, k):
    """Jost solution and its derivative at x = 0.

    The data ``(exp(ikb), ik exp(ikb))`` at x = b are carried down to
    x = 0 with the exact transfer matrix of every constant run.

    Parameters
    ----------
    spec : `halfline.OperatorSpec`
        Operator; only its potential matters here.
    k : `complex` or `numpy.ndarray`
        Wavenumbers anywhere in the complex plane.

    Returns
    -------
    trace : `BoundaryTrace`
    """
    k = np.asarray(k, dtype=complex)
    edges, values = _runs(spec.potential)
    phase = np.exp(1j*k*spec.b)
    f = phase
    fp = 1j*k*phase
    for j in reversed(range(values.size)):
        c, sn, es = cellTransfer(values[j] - k*k, edges[j + 1] - edges[j])
        f, fp = c*f - sn*fp, -es*f + c*fp
    return BoundaryTrace(k, f, fp)


def jostFunction(spec, k):
    """Jost function ``-i(f'(k,0) + cot(theta) f(k,0))``, or ``f(k,0)``
    for a Dirichlet boundary.
    """
    trace = jostBoundaryTrace(spec, k)
    if spec.isDirichlet:
        return trace.f0
    return -1j*(trace.fprime0 + spec.boundary.cotTheta*trace.f0)


def _locate(edges, x):
    return np.searchsorted(edges, x, side="right") - 1


def regularSolutionWithDerivative(spec, k, x):
    """Regular solution ``phi(k, x)`` and ``phi'(k, x)``.

    Parameters
    ----------
    spec : `halfline.OperatorSpec`
        Operator; the boundary fixes the data at x = 0.
    k : `complex` or `numpy.ndarray`
        Wavenumbers.
    x : `float` or `numpy.ndarray`
        Non-negative positions (1-d); positions beyond ``b`` are allowed.

    Returns
    -------
    phi, phiPrime : `numpy.ndarray` of `complex`
        Arrays of shape ``k.shape + x.shape``.
    """
    k = np.asarray(k, dtype=complex)
    x = np.asarray(x, dtype=float)
    scalarX = x.ndim == 0
    x = np.atleast_1d(x).ravel()
    if np.any(x < 0):
        raise ValueError("Solutions are defined for x >= 0 only")
    edges, values = _runs(spec.potential)
    if spec.isDirichlet:
        p, q = np.zeros_like(k), np.ones_like(k)
    else:
        p, q = np.ones_like(k), -spec.boundary.cotTheta*np.ones_like(k)
    states = [(p, q)]
    for j in range(values.size):
        c, sn, es = cellTransfer(values[j] - k*k, edges[j + 1] - edges[j])
        p, q = c*p + sn*q, es*p + c*q
        states.append((p, q))
    startP = np.array([state[0] for state in states])
    startQ = np.array([state[1] for state in states])

    index = np.clip(_locate(edges, x), 0, values.size)
    local = np.append(values, 0.0)[index]
    t = x - edges[index]
    kk = k[..., None]
    c, sn, es = cellTransfer(local - kk*kk, t)
    p0 = np.moveaxis(startP[index], 0, -1)
    q0 = np.moveaxis(startQ[index], 0, -1)
    phi = c*p0 + sn*q0
    phiPrime = es*p0 + c*q0
    if scalarX:
        return phi[..., 0], phiPrime[..., 0]
    return phi, phiPrime


def jostSolutionWithDerivative(spec, k, x):
    """Jost solution ``f(k, x)`` and ``f'(k, x)``; ``exp(ikx)`` for x >= b.

    Shapes follow `regularSolutionWithDerivative`.
    """
    k = np.asarray(k, dtype=complex)
    x = np.asarray(x, dtype=float)
    scalarX = x.ndim == 0
    x = np.atleast_1d(x).ravel()
    if np.any(x < 0):
        raise ValueError("Solutions are defined for x >= 0 only")
    edges, values = _runs(spec.potential)
    phase = np.exp(1j*k*spec.b)
    f, fp = phase, 1j*k*phase
    states = [(f, fp)]
    for j in reversed(range(values.size)):
        c, sn, es = cellTransfer(values[j] - k*k, edges[j + 1] - edges[j])
        f, fp = c*f - sn*fp, -es*f + c*fp
        states.append((f, fp))
    # states[i] now holds the data at edges[i]
    states = states[::-1]
    endF = np.array([state[0] for state in states])
    endFp = np.array([state[1] for state in states])

    index = np.clip(_locate(edges, x), 0, values.size - 1)
    t = edges[index + 1] - x
    kk = k[..., None]
    c, sn, es = cellTransfer(values[index] - kk*kk, t)
    f1 = np.moveaxis(endF[index + 1], 0, -1)
    fp1 = np.moveaxis(endFp[index + 1], 0, -1)
    inner = c*f1 - sn*fp1
    innerPrime = -es*f1 + c*fp1
    outer = np.exp(1j*kk*x)
    beyond = x >= spec.b
    f = np.where(beyond, outer, inner)
    fPrime = np.where(beyond, 1j*kk*outer, innerPrime)
    if scalarX:
        return f[..., 0], fPrime[..., 0]
    return f, fPrime


def regularSolution(spec, k, xGrid):
    """Regular solution at a single ``k`` as a `SampledFunction` on ``xGrid``.
    """
    phi, _ = regularSolutionWithDerivative(spec, complex(k), xGrid)
    return SampledFunction(xGrid, phi)


def jostSolution(spec, k, xGrid):
    f, _ = jostSolutionWithDerivative(spec, complex(k), xGrid)
    return SampledFunction(xGrid, f)


def isExceptional(spec, tolerance=1e-9):
    """Whether the Jost function vanishes at k = 0."""
    scale = 1.0 + abs(spec.boundary.cotTheta or 0.0) + spec.potential.absIntegral()
    return bool(abs(jostFunction(spec, 0.0)) < tolerance*scale)


def scatteringMatrix(spec, k, exceptionalTolerance=1e-9):
    """Scattering matrix ``S(k) = -F(-k)/F(k)``, or ``F(-k)/F(k)`` for a
    Dirichlet boundary, on real ``k``.

    At k = 0 the limit is +-1, fixed by whether F(0) vanishes.

    Raises
    ------
    NumericalError
        If ``|F(k)|`` underflows or overflows at a non-zero real ``k``.
    """
    k = np.asarray(k, dtype=float)
    sign = 1.0 if spec.isDirichlet else -1.0
    forward = jostFunction(spec, k)
    backward = jostFunction(spec, -k)
    zero = k == 0
    bad = (~np.isfinite(forward) | (np.abs(forward) < 1e-300)) & ~zero
    if np.any(bad):
        raise NumericalError("Jost function underflows on the real axis at k = %s" %
                             (np.atleast_1d(k[bad])[:5],))
    S = np.where(zero, 1.0 + 0j, sign*backward/np.where(zero, 1.0, forward))
    if np.any(zero):
        exceptional = isExceptional(spec, exceptionalTolerance)
        S = np.where(zero, -sign if exceptional else sign, S)
    return S


def hFunction(spec, beta):
    """Jost function on the imaginary axis as a real function of ``beta``:
    ``-i F(i beta)``, or ``F(i beta)`` for a Dirichlet boundary.

    Raises
    ------
    NumericalError
        If the imaginary part is not negligible.
    """
    beta = np.asarray(beta, dtype=float)
    F = jostFunction(spec, 1j*beta)
    H = F if spec.isDirichlet else -1j*F
    if np.any(np.abs(H.imag) >= 1e-9*(1.0 + np.abs(H.real))):
        worst = np.max(np.abs(H.imag)/(1.0 + np.abs(H.real)))
        raise NumericalError("H(beta) has a relative imaginary residual of %.3g" % worst)
    return H.real


def hDerivative(spec, beta):
    return centeredDerivative(lambda b: hFunction(spec, b), beta)


def boundStateGammas(spec, betaMax, scanStep=1e-3):
    """Zeros of ``H`` on ``(0, betaMax]``: sign scan, Brent refinement and
    a Newton polish.
    """
    if betaMax <= 0:
        raise ValueError("betaMax must be positive, got %r" % (betaMax,))
    nSteps = max(64, int(np.ceil(betaMax/scanStep)))
    grid = np.linspace(0.0, betaMax, nSteps + 1)[1:]

    def func(b):
        return float(hFunction(spec, b))

    roots = signChangeRoots(func, grid, hFunction(spec, grid))
    return np.array([polishRoot(func, root) for root in roots if root > 0], dtype=float)


def normingConstants(spec, gamma, refinement=8, minPoints=4096, zeroTolerance=1e-6):
    """Norming constants of the bound state at ``k = i gamma``.

    ``g = 1/||phi(i gamma, .)||`` and ``m = 1/||f(i gamma, .)||``; the
    integrals over [0, b] use the corrected trapezoid on a refinement of
    the cell grid and the exponential tails beyond ``b`` are exact.

    Parameters
    ----------
    spec : `halfline.OperatorSpec`
        Operator.
    gamma : `float`
        Bound-state wavenumber (> 0).
    refinement : `int`, optional
        Minimum number of quadrature intervals per cell.
    minPoints : `int`, optional
        Minimum number of quadrature intervals on [0, b].
    zeroTolerance : `float`, optional
        Relative tolerance of the check that ``H(gamma) = 0``.

    Returns
    -------
    boundState : `halfline.BoundState`

    Raises
    ------
    ValueError
        If ``gamma`` is not a zero of ``H``.
    """
    if gamma <= 0:
        raise ValueError("Bound-state wavenumbers are positive, got %r" % (gamma,))
    H = float(hFunction(spec, gamma))
    slope = float(hDerivative(spec, gamma))
    if abs(H) > zeroTolerance*max(1.0, abs(slope)):
        raise ValueError("beta = %.10g is not a zero of H (H = %.3g)" % (gamma, H))
    nIntervals = spec.nCells*max(refinement, int(np.ceil(minPoints/spec.nCells)))
    x = np.linspace(0.0, spec.b, nIntervals + 1)
    h = spec.b/nIntervals
    k = 1j*gamma
    phi, phiPrime = (a.real for a in regularSolutionWithDerivative(spec, k, x))
    f, fPrime = (a.real for a in jostSolutionWithDerivative(spec, k, x))
    phiNorm = cumulativeIntegral(phi**2, 2.0*phi*phiPrime, h)[-1] + phi[-1]**2/(2.0*gamma)
    fNorm = cumulativeIntegral(f**2, 2.0*f*fPrime, h)[-1] + np.exp(-2.0*gamma*spec.b)/(2.0*gamma)
    return BoundState(float(gamma), float(1.0/np.sqrt(phiNorm)), float(1.0/np.sqrt(fNorm)))


def boundStates(spec, betaMax, scanStep=1e-3, refinement=8, minPoints=4096):
    gammas = boundStateGammas(spec, betaMax, scanStep)
    entries = [normingConstants(spec, gamma, refinement, minPoints) for gamma in gammas]
    log.debug("Found %d bound states below beta = %g", len(entries), betaMax)
    return BoundStateSet(tuple(entries))


def jostWronskianDefect(spec, k):
    """``|f(-k,0)f'(k,0) - f'(-k,0)f(k,0) - 2ik|`` for real ``k``."""
    k = np.asarray(k, dtype=float)
    plus = jostBoundaryTrace(spec, k)
    minus = jostBoundaryTrace(spec, -k)
    return np.abs(minus.f0*plus.fprime0 - minus.fprime0*plus.f0 - 2j*k)


def fullLineCoefficients(spec, k, exceptionalTolerance=1e-6, delta=1e-5):
    """Full-line transmission and reflection coefficients.

    Parameters
    ----------
    spec : `halfline.OperatorSpec`
        Operator; the boundary is ignored.
    k : `float`, `complex` or `numpy.ndarray`
        Wavenumbers; real or in the upper half plane.
    exceptionalTolerance : `float`, optional
        Relative threshold below which ``f'(0, 0)`` counts as zero.
    delta : `float`, optional
        Step of the centred k-derivative used in the exceptional case.

    Returns
    -------
    coefficients : `FullLineCoefficients`
    """
    k = np.asarray(k, dtype=complex)
    plus = jostBoundaryTrace(spec, k)
    minus = jostBoundaryTrace(spec, -k)
    denominator = plus.fprime0 + 1j*k*plus.f0
    tiny = (np.abs(denominator) < 1e-12*(1.0 + np.abs(k))) & (k != 0)
    if np.any(tiny):
        log.warning("Full-line bound state at k = %s; coefficients set to inf", np.atleast_1d(k[tiny])[:5])
    T = 2j*k/denominator
    L = (1j*k*plus.f0 - plus.fprime0)/denominator
    R = -(minus.fprime0 + 1j*k*minus.f0)/denominator
    T = np.where(tiny, np.inf, T)
    L = np.where(tiny, np.inf, L)
    R = np.where(tiny, np.inf, R)
    zero = k == 0
    if np.any(zero):
        origin = jostBoundaryTrace(spec, 0.0)
        f0 = origin.f0
        fp0 = origin.fprime0
        scale = 1.0 + abs(f0) + spec.potential.absIntegral()
        if abs(fp0) < exceptionalTolerance*scale:
            dfp = ((jostBoundaryTrace(spec, delta).fprime0 - jostBoundaryTrace(spec, -delta).fprime0)
                   /(2.0*delta))
            T0 = 2j/(dfp + 1j*f0)
            L0 = (1j*f0 - dfp)/(1j*f0 + dfp)
            R0 = (dfp - 1j*f0)/(dfp + 1j*f0)
        else:
            T0, L0, R0 = 0.0, -1.0, -1.0
        T = np.where(zero, T0, T)
        L = np.where(zero, L0, L)
        R = np.where(zero, R0, R)
    return FullLineCoefficients(k, T, L, R)


class DirectSolverConfig(Config):
    kMax = Field(dtype=float, default=100.0, doc="Largest wavenumber of the output k-grid")
    dk = Field(dtype=float, default=0.01, doc="Spacing of the output k-grid")
    betaMax = Field(dtype=float, default=20.0,
                    doc="Upper end of the bound-state search on the imaginary axis")
    scanStep = Field(dtype=float, default=1e-3, doc="Step of the sign scan of H(beta) for bound states")
    quadratureRefinement = Field(dtype=int, default=8,
                                 doc="Minimum quadrature intervals per cell for the norming constants")
    minQuadraturePoints = Field(dtype=int, default=4096,
                                doc="Minimum quadrature intervals on [0, b] for the norming constants")
    exceptionalTolerance = Field(dtype=float, default=1e-9,
                                 doc="Relative threshold of |F(0)| for the exceptional case")

    def validate(self):
        Config.validate(self)
        if not self.kMax > 0:
            raise ValueError("kMax must be positive, got %r" % (self.kMax,))
        if not 0 < self.dk < self.kMax:
            raise ValueError("dk must lie in (0, kMax), got %r" % (self.dk,))
        if not self.betaMax > 0:
            raise ValueError("betaMax must be positive, got %r" % (self.betaMax,))
        if not self.scanStep > 0:
            raise ValueError("scanStep must be positive, got %r" % (self.scanStep,))
        if self.quadratureRefinement < 1 or self.minQuadraturePoints < 1:
            raise ValueError("Quadrature resolutions must be positive")


class DirectSolverTask(Task):
    """Tabulate the direct scattering data of an operator.
    """
    _DefaultName = "directSolver"
    ConfigClass = DirectSolverConfig

    def makeKGrid(self):
        nSteps = int(round(self.config.kMax/self.config.dk))
        return np.linspace(0.0, nSteps*self.config.dk, nSteps + 1)

    def findBoundStates(self, spec, betaMax=None):
        betaMax = self.config.betaMax if betaMax is None else betaMax
        return boundStates(spec, betaMax, self.config.scanStep, self.config.quadratureRefinement,
                           self.config.minQuadraturePoints)

    def run(self, spec, kGrid=None):
        """Solve the direct problem.

        Parameters
        ----------
        spec : `halfline.OperatorSpec`
            Operator.
        kGrid : `numpy.ndarray`, optional
            Real wavenumbers; defaults to ``[0, kMax]`` with step ``dk``.

        Returns
        -------
        result : `lsst.pipe.base.Struct`
            Result struct with components:

            - ``jost`` : F(k) on ``kGrid`` (`halfline.SampledFunction`).
            - ``scattering`` : S(k) on ``kGrid`` (`halfline.SampledFunction`).
            - ``absJost`` : |F(k)| on ``kGrid`` (`halfline.SampledFunction`).
            - ``boundStates`` : bound states below ``betaMax``
              (`halfline.BoundStateSet`).
        """
        kGrid = self.makeKGrid() if kGrid is None else np.asarray(kGrid, dtype=float)
        jost = jostFunction(spec, kGrid)
        scattering = scatteringMatrix(spec, kGrid, self.config.exceptionalTolerance)
        found = self.findBoundStates(spec)
        self.log.info("Solved direct problem on %d wavenumbers; %d bound state(s) at gamma = %s",
                      kGrid.size, found.count, np.array2string(found.gammas, precision=6))
        if isExceptional(spec, self.config.exceptionalTolerance):
            self.log.info("Operator is exceptional: F(0) = 0")
        return Struct(jost=SampledFunction(kGrid, jost), scattering=SampledFunction(kGrid, scattering),
                      absJost=SampledFunction(kGrid, np.abs(jost)), boundStates=found)
