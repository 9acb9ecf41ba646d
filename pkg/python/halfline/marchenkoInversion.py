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

"""Recovery of the potential and the boundary condition from the
scattering matrix with the Marchenko method.

Three cases are distinguished by the data: bound-state poles of S in the
upper half plane (case I), no poles and S(0) = -1 (case II), no poles and
S(0) = +1 (case III, where exactly two operators share S).
"""

import dataclasses
import enum
import logging

import numpy as np
import scipy.linalg as scipyLinalg

from lsst.pex.config import Config, Field
from lsst.pipe.base import Task, Struct

from .potentialModel import (BoundaryParameter, BoundState, BoundStateSet, Potential, SampledFunction,
                             ThetaClass, OperatorSpec)
from .directSolver import fullLineCoefficients, jostBoundaryTrace, jostFunction, scatteringMatrix
from .utils import (AaaApproximant, NumericalError, ToleranceEnforcer, VerificationError,
                    differentiate5Point, fourierTransformHermitian, trapezoidWeights)

__all__ = ["InversionCase", "MarchenkoData", "MarchenkoKernelSolution", "InversionSolution",
           "InversionResult", "detectCase", "thetaClassFromResidue", "marchenkoKernel", "solveMarchenko",
           "solveMarchenkoGrid", "extractPotential", "jostFromKernel", "recoverTheta", "invertCaseIii",
           "fullLineMarchenko", "verifyReproducesS", "MarchenkoInversionConfig", "MarchenkoInversionTask"]

log = logging.getLogger(__name__)

np.seterr(all="ignore")


class InversionCase(enum.Enum):
    I = "I"
    II = "II"
    III = "III"


@dataclasses.dataclass(frozen=True, eq=False)
class MarchenkoData:
    """Scattering matrix on the real axis plus the bound-state poles
    ``(gamma, m)`` and the boundary class read off their residues.
    """
    S: SampledFunction
    poles: tuple
    thetaClass: ThetaClass
    caseTag: InversionCase
    fitResidual: float = 0.0
    fitDegree: int = 0

    def toDict(self):
        return {"case": self.caseTag.value, "theta_class": self.thetaClass.value,
                "poles": [{"gamma": gamma, "m": m} for gamma, m in self.poles],
                "fit_residual": self.fitResidual, "fit_degree": self.fitDegree}


@dataclasses.dataclass(frozen=True, eq=False)
class MarchenkoKernelSolution:
    """Solution ``K(x, y)`` of the Marchenko equation on ``x = i h``.

    ``diagonal`` holds ``K(x, x)``; ``rows[i]`` holds ``K(ih, y)`` for
    ``y = ih, ..., 2b - ih`` (``i = 0, 1, 2``).
    """
    b: float
    h: float
    diagonal: np.ndarray
    rows: tuple
    residual: float

    @property
    def nCells(self):
        return self.diagonal.size - 1

    @property
    def x(self):
        return self.h*np.arange(self.nCells + 1)

    @property
    def y(self):
        """Nodes of ``rows[0]``, covering [0, 2b]."""
        return self.h*np.arange(2*self.nCells + 1)

    def rowDerivative(self):
        """``K_x(0, y)`` on `y` from one-sided 3-point differences."""
        r0, r1, r2 = self.rows
        n2 = r0.size - 1
        d = np.empty(r0.size)
        d[2:n2 - 1] = (-3.0*r0[2:n2 - 1] + 4.0*r1[1:n2 - 2] - r2[:n2 - 3])/(2.0*self.h)
        d[1] = 2.0*d[2] - d[3]
        d[0] = 2.0*d[1] - d[2]
        d[n2 - 1] = 2.0*d[n2 - 2] - d[n2 - 3]
        d[n2] = 2.0*d[n2 - 1] - d[n2 - 2]
        return d


@dataclasses.dataclass(frozen=True, eq=False)
class InversionSolution:
    spec: OperatorSpec
    boundStates: BoundStateSet
    kernel: MarchenkoKernelSolution = None

    def toDict(self):
        result = self.spec.toDict()
        result["bound_states"] = self.boundStates.toList()
        return result


@dataclasses.dataclass(frozen=True, eq=False)
class InversionResult:
    solutions: tuple
    caseTag: InversionCase
    residuals: dict = dataclasses.field(default_factory=dict)

    def toDict(self):
        return {"case": self.caseTag.value, "n_solutions": len(self.solutions),
                "solutions": [solution.toDict() for solution in self.solutions],
                "residuals": dict(self.residuals)}


def thetaClassFromResidue(residue, floor=1e-6):
    """Boundary class from the residue of S at a bound-state pole: the
    residue is ``-i m^2`` for a Dirichlet boundary and ``+i m^2``
    otherwise.
    """
    value = (1j*residue).real
    if abs(value) < floor:
        return ThetaClass.UNDETERMINED
    return ThetaClass.DIRICHLET if value > 0 else ThetaClass.NON_DIRICHLET


def detectCase(S, fitKMax=20.0, stride=2, tolerance=1e-8, maxDegree=150, residueFloor=1e-6,
               zeroEnergyTolerance=1e-3):
    """Classify scattering data and harvest its bound-state poles.

    A rational approximant of S on ``|k| <= fitKMax`` supplies the poles in
    the upper half plane; those close to the imaginary axis with a
    residue above ``residueFloor`` are bound states, with
    ``gamma = Im p`` and ``m^2 = |residue|``.

    Parameters
    ----------
    S : `halfline.SampledFunction`
        Scattering matrix on a real grid containing k = 0 (negative k are
        filled in by symmetry).
    fitKMax : `float`, optional
        Half-width of the fitted window.
    stride : `int`, optional
        Subsampling of the grid for the fit.
    tolerance : `float`, optional
        Relative residual the rational fit must reach.
    maxDegree : `int`, optional
        Largest degree of the rational fit.
    residueFloor : `float`, optional
        Residues below this are spurious.
    zeroEnergyTolerance : `float`, optional
        Allowed distance of S(0) from +-1.

    Returns
    -------
    data : `MarchenkoData`

    Raises
    ------
    NumericalError
        If the fit does not converge or the residue signs are inconsistent.
    ValueError
        If S(0) is not +-1.
    """
    mirrored = S.mirrored()
    window = np.abs(mirrored.grid) <= fitKMax
    approximant = AaaApproximant.fit(mirrored.grid[window][::stride], mirrored.values[window][::stride],
                                     tolerance, maxDegree)
    if not approximant.converged:
        raise NumericalError("Rational fit of S stalled at degree %d with residual %.3g; case undetermined" %
                             (approximant.degree, approximant.residual))
    log.debug("Rational fit of S: degree %d, residual %.3g", approximant.degree, approximant.residual)
    candidates = approximant.poles()
    keep = ((candidates.imag > 1e-8) & (candidates.imag < fitKMax)
            & (np.abs(candidates.real) < 1e-3*(1.0 + np.abs(candidates))))
    candidates = candidates[keep]
    residues = approximant.residues(candidates) if candidates.size else np.array([], dtype=complex)
    significant = np.abs(residues) > residueFloor
    candidates, residues = candidates[significant], residues[significant]
    order = np.argsort(candidates.imag)
    poles = tuple((float(p.imag), float(np.sqrt(abs(r)))) for p, r in zip(candidates[order], residues[order]))

    classes = {thetaClassFromResidue(r, residueFloor) for r in residues}
    if not poles:
        thetaClass = ThetaClass.UNDETERMINED
    elif len(classes) == 1 and ThetaClass.UNDETERMINED not in classes:
        thetaClass = classes.pop()
    else:
        raise NumericalError("Residue signs of S do not fix the boundary class: %s" % (residues,))

    zeroValue = S.valueNear(0.0)
    if abs(zeroValue - 1.0) < zeroEnergyTolerance:
        zeroSign = 1
    elif abs(zeroValue + 1.0) < zeroEnergyTolerance:
        zeroSign = -1
    else:
        raise ValueError("S(0) = %s is not +-1 within %g" % (zeroValue, zeroEnergyTolerance))

    if poles:
        caseTag = InversionCase.I
    elif zeroSign < 0:
        caseTag = InversionCase.II
    else:
        caseTag = InversionCase.III
    return MarchenkoData(S, poles, thetaClass, caseTag, approximant.residual, approximant.degree)


def marchenkoKernel(S, poles, thetaClass, yGrid, taperFraction=0.05, tailOrder=3, tailScale=1.0,
                    tailEnergyThreshold=1e-4):
    """Marchenko kernel ``M(y)`` for y >= 0.

    ``(1/2 pi) int (S - 1) exp(iky) dk`` for a non-Dirichlet boundary and
    its negative for a Dirichlet one, plus ``sum m^2 exp(-gamma y)``.

    Returns
    -------
    result : `lsst.pipe.base.Struct`
        Result struct with components:

        - ``kernel`` : M on ``yGrid`` (`halfline.SampledFunction`).
        - ``tailEnergy`` : relative size of the data left at the top of
          the k-grid after the tail fit (`float`).
    """
    if thetaClass is ThetaClass.UNDETERMINED:
        raise ValueError("The kernel branch needs a determined boundary class")
    half = S.nonNegative()
    sign = -1.0 if thetaClass is ThetaClass.DIRICHLET else 1.0
    transform = fourierTransformHermitian(half.grid, sign*(half.values - 1.0), yGrid, taperFraction,
                                          tailOrder, tailScale)
    if transform.tailEnergy > tailEnergyThreshold:
        log.warning("Scattering data are truncated at k = %g with tail energy %.3g; raise kMax",
                    half.grid[-1], transform.tailEnergy)
    values = transform.values
    yGrid = np.asarray(yGrid, dtype=float)
    for gamma, m in poles:
        values = values + m*m*np.exp(-gamma*yGrid)
    return Struct(kernel=SampledFunction(yGrid, values), tailEnergy=transform.tailEnergy)


def _kernelSamples(kernel, h, nCells):
    grid = kernel.grid
    if grid.size < 4*nCells + 1 or abs(grid[1] - grid[0] - h) > 1e-9*h or grid[0] != 0:
        raise ValueError("Kernel must be tabulated on y = 0, h, ..., 4b with h = b/nCells")
    return kernel.real[:4*nCells + 1]


def _solveRow(values, i, nCells, h, tolerance):
    size = 2*(nCells - i) + 1
    j = np.arange(size)
    weights = trapezoidWeights(h*j)
    matrix = np.eye(size) + values[2*i + j[:, None] + j[None, :]]*weights[None, :]
    rhs = -values[2*i + j]
    try:
        solution = scipyLinalg.solve(matrix, rhs)
    except scipyLinalg.LinAlgError as e:
        raise NumericalError("Marchenko system is singular at x = %g: %s" % (i*h, e)) from e
    residual = float(np.max(np.abs(matrix @ solution - rhs))/(1.0 + np.max(np.abs(rhs))))
    if not residual < tolerance:
        raise NumericalError("Marchenko solve at x = %g has residual %.3g" % (i*h, residual))
    return solution, residual


def solveMarchenko(kernel, x, bEstimate, nCells, tolerance=1e-8):
    """K(x, y) on ``y = x, x + h, ..., 2 bEstimate - x`` for one node ``x``.

    Raises
    ------
    NumericalError
        If the Nystrom system is singular or its residual is too large.
    """
    h = bEstimate/nCells
    i = int(round(x/h))
    if abs(i*h - x) > 1e-9*(1.0 + abs(x)) or not 0 <= i <= nCells:
        raise ValueError("x = %g is not a node of the %d-cell grid on [0, %g]" % (x, nCells, bEstimate))
    values = _kernelSamples(kernel, h, nCells)
    solution, _ = _solveRow(values, i, nCells, h, tolerance)
    return SampledFunction(h*(i + np.arange(solution.size)), solution)


def solveMarchenkoGrid(kernel, bEstimate, nCells, tolerance=1e-8):
    """Solve the Marchenko equation at every node ``x = ih`` of [0, b].

    K is taken to vanish for y > 2b - x.

    Returns
    -------
    solution : `MarchenkoKernelSolution`
    """
    if nCells < 4:
        raise ValueError("Need at least 4 cells, got %d" % (nCells,))
    h = bEstimate/nCells
    values = _kernelSamples(kernel, h, nCells)
    diagonal = np.empty(nCells + 1)
    rows = []
    worst = 0.0
    for i in range(nCells + 1):
        solution, residual = _solveRow(values, i, nCells, h, tolerance)
        diagonal[i] = solution[0]
        if i < 3:
            rows.append(solution)
        worst = max(worst, residual)
    log.debug("Solved %d Marchenko systems; worst residual %.3g", nCells + 1, worst)
    return MarchenkoKernelSolution(bEstimate, h, diagonal, tuple(rows), worst)


def extractPotential(solution):
    """Potential ``-2 dK(x,x)/dx``.

    Returns
    -------
    result : `lsst.pipe.base.Struct`
        Result struct with components:

        - ``potential`` : cell averages from exact difference quotients
          of K(x, x) (`halfline.Potential`).
        - ``nodal`` : nodal values from 5-point stencils
          (`halfline.SampledFunction`).
    """
    cells = -2.0*np.diff(solution.diagonal)/solution.h
    nodal = -2.0*differentiate5Point(solution.diagonal, solution.h)
    return Struct(potential=Potential(solution.b, cells), nodal=SampledFunction(solution.x, nodal))


def _rowTransform(row, y, h, k):
    """``int_0^{2b} row(y) exp(iky) dy`` by the trapezoid rule with the
    endpoint-derivative correction.
    """
    phase = np.exp(1j*np.multiply.outer(k, y))
    total = phase @ (trapezoidWeights(y)*row)
    slope = differentiate5Point(row, h)
    start = slope[0] + 1j*k*row[0]
    end = (slope[-1] + 1j*k*row[-1])*phase[..., -1]
    return total - h*h/12.0*(end - start)


def jostFromKernel(solution, k):
    """``f(k, 0)`` and ``f'(k, 0)`` from ``K(0, y)`` and ``K_x(0, y)``."""
    k = np.asarray(k, dtype=float)
    y = solution.y
    f0 = 1.0 + _rowTransform(solution.rows[0], y, solution.h, k)
    fp0 = 1j*k - solution.rows[0][0] + _rowTransform(solution.rowDerivative(), y, solution.h, k)
    return f0, fp0


def _gridSelection(grid, targets):
    return np.unique(np.argmin(np.abs(grid[None, :] - np.asarray(targets)[:, None]), axis=1))


def recoverTheta(solution, S, thetaClass=ThetaClass.UNDETERMINED, dirichletBand=(0.5, 20.0),
                 dirichletTolerance=1e-2, thetaBand=(0.5, 10.0), thetaSamples=20, spreadTolerance=1e-2):
    """Boundary condition consistent with a kernel and S.

    The Dirichlet test compares S with ``conj(f(k,0))/f(k,0)`` over
    ``dirichletBand``.  Otherwise ``cot(theta)`` is the median of
    ``(-f'(-k,0) - S f'(k,0))/(f(-k,0) + S f(k,0))`` at ``thetaSamples``
    points of ``thetaBand``.

    Parameters
    ----------
    solution : `MarchenkoKernelSolution`
        Kernel from the branch under test.
    S : `halfline.SampledFunction`
        Scattering matrix.
    thetaClass : `halfline.ThetaClass`, optional
        ``DIRICHLET`` demands the Dirichlet test pass, ``NON_DIRICHLET``
        skips it, ``UNDETERMINED`` lets it decide.

    Returns
    -------
    result : `lsst.pipe.base.Struct`
        Result struct with components:

        - ``boundary`` : recovered boundary (`halfline.BoundaryParameter`).
        - ``dirichletDeviation`` : sup-deviation of the Dirichlet test
          (`float`, `None` if skipped).
        - ``spread`` : spread of the cot(theta) samples (`float`).

    Raises
    ------
    VerificationError
        If the Dirichlet test fails under ``DIRICHLET`` or the cot(theta)
        samples disagree.
    """
    half = S.nonNegative()
    deviation = None
    if thetaClass is not ThetaClass.NON_DIRICHLET:
        band = np.flatnonzero((half.grid >= dirichletBand[0]) & (half.grid <= dirichletBand[1]))
        band = band[::max(1, band.size//400)]
        f0, _ = jostFromKernel(solution, half.grid[band])
        deviation = float(np.max(np.abs(half.values[band] - np.conj(f0)/f0)))
        log.debug("Dirichlet test deviation %.3g", deviation)
        if deviation < dirichletTolerance:
            return Struct(boundary=BoundaryParameter.dirichlet(), dirichletDeviation=deviation, spread=0.0)
        if thetaClass is ThetaClass.DIRICHLET:
            raise VerificationError("Kernel does not reproduce S with a Dirichlet boundary: deviation %.3g" %
                                    deviation, {"dirichletDeviation": deviation})
    index = _gridSelection(half.grid, np.linspace(thetaBand[0], thetaBand[1], thetaSamples))
    k = half.grid[index]
    s = half.values[index]
    f0, fp0 = jostFromKernel(solution, k)
    samples = ((-np.conj(fp0) - s*fp0)/(np.conj(f0) + s*f0)).real
    cot = float(np.median(samples))
    spread = float(np.max(samples) - np.min(samples))
    if spread > spreadTolerance*(1.0 + abs(cot)):
        raise VerificationError("cot(theta) samples spread by %.3g around %.6g" % (spread, cot),
                                {"thetaSpread": spread, "dirichletDeviation": deviation})
    return Struct(boundary=BoundaryParameter.nonDirichlet(cot), dirichletDeviation=deviation, spread=spread)


def _branchKernel(S, poles, thetaClass, bEstimate, nCells, **kwargs):
    yGrid = (bEstimate/nCells)*np.arange(4*nCells + 1)
    return marchenkoKernel(S, poles, thetaClass, yGrid, **kwargs)


def invertCaseIii(S, bEstimate, nCells, kernelKwargs=None, nystromTolerance=1e-8, checkKMax=10.0,
                  checkSamples=50, doVerify=False, tolerance=1e-4):
    """The two operators sharing case-III data.

    Solution 1 takes the Dirichlet branch of the kernel; solution 2 uses
    the negated kernel with ``cot(theta) = 0``.  The identity
    ``F_2(k) = k f_1(k, 0)``, the equality of the potential integrals and
    ``R_2 = -R_1``, ``T_2 = T_1`` are checked on the results.

    Returns
    -------
    result : `InversionResult`

    Raises
    ------
    VerificationError
        If ``doVerify`` and a check exceeds ``tolerance``.
    """
    kernelKwargs = kernelKwargs or {}
    built = _branchKernel(S, (), ThetaClass.DIRICHLET, bEstimate, nCells, **kernelKwargs)
    first = solveMarchenkoGrid(built.kernel, bEstimate, nCells, nystromTolerance)
    negated = SampledFunction(built.kernel.grid, -built.kernel.values)
    second = solveMarchenkoGrid(negated, bEstimate, nCells, nystromTolerance)
    spec1 = OperatorSpec(extractPotential(first).potential, BoundaryParameter.dirichlet())
    spec2 = OperatorSpec(extractPotential(second).potential, BoundaryParameter.nonDirichlet(0.0))

    k = np.linspace(0.0, checkKMax, checkSamples)
    jost2 = jostFunction(spec2, k)
    identity = float(np.max(np.abs(jost2 - k*jostBoundaryTrace(spec1, k).f0)/(1.0 + np.abs(jost2))))
    kFull = np.linspace(0.5, checkKMax, 20)
    full1 = fullLineCoefficients(spec1, kFull)
    full2 = fullLineCoefficients(spec2, kFull)
    reflection = float(max(np.max(np.abs(full2.R + full1.R)), np.max(np.abs(full2.T - full1.T))))
    residuals = {"jostIdentity": identity,
                 "integralDifference": abs(spec1.potential.integral() - spec2.potential.integral()),
                 "fullLineSymmetry": reflection,
                 "tailEnergy": built.tailEnergy,
                 "nystromResidual": max(first.residual, second.residual)}
    enforcer = ToleranceEnforcer(requireLess={"jostIdentity": tolerance, "integralDifference": 1e-2,
                                              "fullLineSymmetry": tolerance}, doRaise=doVerify)
    enforcer(residuals, log, "Case III")
    solutions = (InversionSolution(spec1, BoundStateSet(), first),
                 InversionSolution(spec2, BoundStateSet(), second))
    return InversionResult(solutions, InversionCase.III, residuals)


def fullLineMarchenko(R, bEstimate, nCells, kernelKwargs=None, nystromTolerance=1e-8):
    """Potential on [0, b] from the right reflection coefficient of the
    full-line problem without bound states.
    """
    kernelKwargs = kernelKwargs or {}
    half = R.nonNegative()
    yGrid = (bEstimate/nCells)*np.arange(4*nCells + 1)
    transform = fourierTransformHermitian(half.grid, half.values, yGrid,
                                          kernelKwargs.get("taperFraction", 0.05),
                                          kernelKwargs.get("tailOrder", 3),
                                          kernelKwargs.get("tailScale", 1.0))
    kernel = SampledFunction(yGrid, transform.values)
    solution = solveMarchenkoGrid(kernel, bEstimate, nCells, nystromTolerance)
    return extractPotential(solution).potential


def verifyReproducesS(solutions, S, stride=10, exceptionalTolerance=1e-9):
    """Largest deviation between S and the scattering matrices of the
    solutions re-solved directly, on every ``stride``-th grid point with
    k > 0.
    """
    half = S.nonNegative()
    keep = np.flatnonzero(half.grid > 0)[::stride]
    k = half.grid[keep]
    worst = 0.0
    for solution in solutions:
        direct = scatteringMatrix(solution.spec, k, exceptionalTolerance)
        worst = max(worst, float(np.max(np.abs(direct - half.values[keep]))))
    return worst


class MarchenkoInversionConfig(Config):
    bMax = Field(dtype=float, default=1.0, doc="Support estimate b of the recovered potential")
    nCells = Field(dtype=int, default=512, doc="Cells of the recovered potential on [0, bMax]")
    taperFraction = Field(dtype=float, default=0.05, doc="Raised-cosine taper over the top of the k-grid")
    tailOrder = Field(dtype=int, default=3, doc="Number of fitted 1/k-type tail terms")
    tailScale = Field(dtype=float, default=1.0, doc="Scale lambda of the tail terms (i/(k + i lambda))^j")
    tailEnergyThreshold = Field(dtype=float, default=1e-4, doc="Tail energy above which kMax is too small")
    unitarityTolerance = Field(dtype=float, default=1e-6, doc="Allowed deviation of |S| from 1")
    fitKMax = Field(dtype=float, default=20.0, doc="Half-width of the window of the rational fit")
    fitStride = Field(dtype=int, default=2, doc="Subsampling of the k-grid in the rational fit")
    fitTolerance = Field(dtype=float, default=1e-8, doc="Relative residual of the rational fit")
    maxRationalDegree = Field(dtype=int, default=150, doc="Largest degree of the rational fit")
    residueFloor = Field(dtype=float, default=1e-6, doc="Residues below this are spurious poles")
    zeroEnergyTolerance = Field(dtype=float, default=1e-3, doc="Allowed distance of S(0) from +-1")
    nystromTolerance = Field(dtype=float, default=1e-8, doc="Residual bound of every Nystrom solve")
    dirichletKMin = Field(dtype=float, default=0.5, doc="Lower end of the Dirichlet test band")
    dirichletKMax = Field(dtype=float, default=20.0, doc="Upper end of the Dirichlet test band")
    dirichletTolerance = Field(dtype=float, default=1e-2, doc="Sup-deviation accepted by the Dirichlet test")
    thetaKMin = Field(dtype=float, default=0.5, doc="Lower end of the cot(theta) sample band")
    thetaKMax = Field(dtype=float, default=10.0, doc="Upper end of the cot(theta) sample band")
    thetaSamples = Field(dtype=int, default=20, doc="Number of cot(theta) samples")
    thetaSpreadTolerance = Field(dtype=float, default=1e-2,
                                 doc="Relative spread of cot(theta) samples (relative to 1 + |cot|)")
    caseIiiTolerance = Field(dtype=float, default=1e-4, doc="Tolerance of the case III identities")
    verifyTolerance = Field(dtype=float, default=1e-3, doc="Tolerance of the re-solve of S")
    verifyStride = Field(dtype=int, default=10, doc="Subsampling of the k-grid in the re-solve of S")
    doVerify = Field(dtype=bool, default=False, doc="Raise when a verification fails?")

    def validate(self):
        Config.validate(self)
        if not self.bMax > 0:
            raise ValueError("bMax must be positive, got %r" % (self.bMax,))
        if self.nCells < 8:
            raise ValueError("nCells must be at least 8, got %d" % (self.nCells,))
        if not 0 < self.taperFraction < 0.5:
            raise ValueError("taperFraction must lie in (0, 0.5), got %r" % (self.taperFraction,))
        if self.tailOrder < 0:
            raise ValueError("tailOrder must not be negative")
        if self.fitStride < 1 or self.verifyStride < 1:
            raise ValueError("Strides must be positive")


class MarchenkoInversionTask(Task):
    """Recover operators from their scattering matrix.
    """
    _DefaultName = "marchenkoInversion"
    ConfigClass = MarchenkoInversionConfig

    def _kernelKwargs(self):
        return dict(taperFraction=self.config.taperFraction, tailOrder=self.config.tailOrder,
                    tailScale=self.config.tailScale, tailEnergyThreshold=self.config.tailEnergyThreshold)

    def _thetaKwargs(self):
        return dict(dirichletBand=(self.config.dirichletKMin, self.config.dirichletKMax),
                    dirichletTolerance=self.config.dirichletTolerance,
                    thetaBand=(self.config.thetaKMin, self.config.thetaKMax),
                    thetaSamples=self.config.thetaSamples, spreadTolerance=self.config.thetaSpreadTolerance)

    def detect(self, S):
        deviation = float(np.max(np.abs(np.abs(S.values) - 1.0)))
        if deviation > self.config.unitarityTolerance:
            raise ValueError("|S| deviates from 1 by %.3g" % (deviation,))
        data = detectCase(S, self.config.fitKMax, self.config.fitStride, self.config.fitTolerance,
                          self.config.maxRationalDegree, self.config.residueFloor,
                          self.config.zeroEnergyTolerance)
        self.log.info("Scattering data are case %s with %d bound-state pole(s), boundary class %s",
                      data.caseTag.value, len(data.poles), data.thetaClass.value)
        return data

    def invertBranch(self, S, poles, thetaClass, bEstimate):
        """Solve one kernel branch and recover the boundary.

        Returns
        -------
        result : `lsst.pipe.base.Struct`
            Result struct with components:

            - ``solution`` : operator and bound states
              (`InversionSolution`).
            - ``residuals`` : tail energy, Nystrom residual and theta
              diagnostics (`dict`).
        """
        nCells = self.config.nCells
        built = _branchKernel(S, poles, thetaClass, bEstimate, nCells, **self._kernelKwargs())
        kernelSolution = solveMarchenkoGrid(built.kernel, bEstimate, nCells, self.config.nystromTolerance)
        theta = recoverTheta(kernelSolution, S, thetaClass, **self._thetaKwargs())
        spec = OperatorSpec(extractPotential(kernelSolution).potential, theta.boundary)
        entries = []
        for gamma, m in poles:
            jost = abs(complex(jostFunction(spec, -1j*gamma)))
            entries.append(BoundState(gamma, 2.0*gamma*m/jost, m))
        residuals = {"tailEnergy": built.tailEnergy, "nystromResidual": kernelSolution.residual,
                     "dirichletDeviation": theta.dirichletDeviation, "thetaSpread": theta.spread}
        return Struct(solution=InversionSolution(spec, BoundStateSet(tuple(entries)), kernelSolution),
                      residuals=residuals)

    def invertCaseIi(self, S, bEstimate):
        try:
            branch = self.invertBranch(S, (), ThetaClass.DIRICHLET, bEstimate)
            self.log.info("Case II data accepted by the Dirichlet branch")
        except (VerificationError, NumericalError) as e:
            self.log.info("Dirichlet branch rejected (%s); using the non-Dirichlet branch", e)
            branch = self.invertBranch(S, (), ThetaClass.NON_DIRICHLET, bEstimate)
        return InversionResult((branch.solution,), InversionCase.II, branch.residuals)

    def run(self, S, bMax=None):
        """Invert a sampled scattering matrix.

        Parameters
        ----------
        S : `halfline.SampledFunction`
            S(k) on a real grid from 0 to kMax.
        bMax : `float`, optional
            Support estimate; defaults to ``config.bMax``.

        Returns
        -------
        result : `lsst.pipe.base.Struct`
            Result struct with components:

            - ``result`` : the recovered operator(s) (`InversionResult`).
            - ``data`` : the classified scattering data (`MarchenkoData`).

        Raises
        ------
        NumericalError
            If the case cannot be determined or a Nystrom solve fails.
        VerificationError
            If ``doVerify`` and a verification fails, or the boundary
            cannot be recovered consistently.
        """
        bEstimate = self.config.bMax if bMax is None else bMax
        data = self.detect(S)
        if data.caseTag is InversionCase.I:
            branch = self.invertBranch(S, data.poles, data.thetaClass, bEstimate)
            result = InversionResult((branch.solution,), InversionCase.I, branch.residuals)
        elif data.caseTag is InversionCase.II:
            result = self.invertCaseIi(S, bEstimate)
        else:
            result = invertCaseIii(S, bEstimate, self.config.nCells, self._kernelKwargs(),
                                   self.config.nystromTolerance, doVerify=self.config.doVerify,
                                   tolerance=self.config.caseIiiTolerance)
        reproduction = verifyReproducesS(result.solutions, S, self.config.verifyStride)
        result.residuals["reproduceS"] = reproduction
        enforcer = ToleranceEnforcer(requireLess={"reproduceS": self.config.verifyTolerance},
                                     doRaise=self.config.doVerify)
        enforcer(result.residuals, self.log, "Marchenko inversion")
        self.log.info("Recovered %d operator(s); S reproduced within %.3g",
                      len(result.solutions), reproduction)
        return Struct(result=result, data=data)
