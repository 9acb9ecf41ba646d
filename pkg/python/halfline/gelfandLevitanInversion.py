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

"""Recovery of every operator compatible with the modulus of the Jost
function: a Gel'fand-Levitan solve gives the member without bound states,
and support-preserving Darboux adds over all subsets of its eligible
resonances give the rest of the family.
"""

import dataclasses
import itertools
import logging

import numpy as np
import scipy.linalg as scipyLinalg

from lsst.pex.config import Config, ConfigurableField, Field
from lsst.pipe.base import Task, Struct

from .potentialModel import (BoundaryParameter, BoundStateSet, OperatorSpec, Potential, SampledFunction,
                             ThetaClass)
from .directSolver import boundStateGammas, jostFunction
from .resonanceAnalyzer import ResonanceAnalysisTask
from .darbouxEngine import DarbouxTask
from .utils import (NumericalError, ToleranceEnforcer, cosineTransformEven, differentiate5Point,
                    trapezoidWeights)

__all__ = ["FamilyMember", "SolutionFamily", "GlKernelSolution", "detectThetaClass", "outerJost",
           "spectralWeight", "glKernel", "glKernelMatrix", "solveGl", "extractPotentialAndTheta",
           "regularSolutionFromKernel", "verifyOrderIndependence", "enumerateSolutions",
           "GelfandLevitanInversionConfig", "GelfandLevitanInversionTask"]

log = logging.getLogger(__name__)

np.seterr(all="ignore")


@dataclasses.dataclass(frozen=True, eq=False)
class FamilyMember:
    """One operator of a family; ``mask[i]`` tells whether the i-th
    eligible resonance was turned into a bound state.
    """
    spec: OperatorSpec
    boundStates: BoundStateSet
    mask: tuple

    @property
    def label(self):
        return "".join("1" if bit else "0" for bit in self.mask) or "base"

    def toDict(self):
        result = {"mask": self.label, "gammas": [entry.gamma for entry in self.boundStates],
                  "gs": [entry.g for entry in self.boundStates]}
        if self.spec.isDirichlet:
            result["dirichlet"] = True
        else:
            result["cot_theta"] = self.spec.boundary.cotTheta
        return result


@dataclasses.dataclass(frozen=True, eq=False)
class SolutionFamily:
    members: tuple
    M: int
    eligibleGammas: np.ndarray
    base: FamilyMember
    thetaClass: ThetaClass
    residuals: dict = dataclasses.field(default_factory=dict)

    def __len__(self):
        return len(self.members)

    def toDict(self):
        return {"M": self.M, "eligible_betas": [-float(gamma) for gamma in self.eligibleGammas],
                "theta_class": self.thetaClass.value,
                "members": [member.toDict() for member in self.members],
                "residuals": dict(self.residuals)}


@dataclasses.dataclass(frozen=True, eq=False)
class GlKernelSolution:
    """Lower-triangular ``A(x_i, y_j)``, j <= i, on ``x = i h``."""
    b: float
    h: float
    A: np.ndarray
    residual: float
    thetaClass: ThetaClass

    @property
    def x(self):
        return self.h*np.arange(self.A.shape[0])

    @property
    def diagonal(self):
        return np.diag(self.A).copy()


def _positiveHalf(absF):
    half = absF.nonNegative()
    modulus = half.modulus
    if half.grid.size < 8 or half.grid[0] != 0:
        raise ValueError("|F| must be sampled on a grid starting at k = 0")
    if np.any(modulus[1:] <= 0):
        raise ValueError("|F| must be positive for k > 0")
    return half.grid, modulus


def detectThetaClass(absF, margin=0.9):
    """Dirichlet or not, from the growth of |F| over the top decade of the
    grid: ``c k`` for a non-Dirichlet boundary, ``c`` for a Dirichlet one.

    Raises
    ------
    ValueError
        If the two fits are within ``margin`` of each other.
    """
    k, modulus = _positiveHalf(absF)
    top = k >= 0.1*k[-1]
    if np.count_nonzero(top) < 4:
        raise ValueError("Too few samples in the top decade of the k-grid")
    kt, at = k[top], modulus[top]
    norm = np.linalg.norm(at)
    linear = np.linalg.norm(at - (kt @ at)/(kt @ kt)*kt)/norm
    constant = np.linalg.norm(at - np.mean(at))/norm
    if min(linear, constant) >= margin*max(linear, constant):
        raise ValueError("Cannot tell the boundary class from |F|: residuals %.3g (linear) and %.3g "
                         "(constant)" % (linear, constant))
    return ThetaClass.NON_DIRICHLET if linear < constant else ThetaClass.DIRICHLET


def _logModulus(k, modulus, thetaClass):
    with np.errstate(divide="ignore"):
        U = np.log(modulus)
    if thetaClass is ThetaClass.NON_DIRICHLET:
        U = U - 0.5*np.log(k*k + 1.0)
    if not np.isfinite(U[0]):
        U[0] = 2.0*U[1] - U[2]
    return U


def _tail(c, k, top):
    k = np.asarray(k, dtype=complex)
    u = k/top
    small = np.abs(u) < 1e-2
    with np.errstate(all="ignore"):
        exact = (2.0*c/k)*(np.log((top + k)/(top - k))/(2.0*k) - 1.0/top)
    series = 2.0*c*(k/(3.0*top**3) + k**3/(5.0*top**5) + k**5/(7.0*top**7))
    return np.where(small, series, exact)


def outerJost(absF, k, thetaClass, chunkSize=256, tailTolerance=1e-2):
    """Jost function of the member without bound states, from |F| alone.

    With ``U = log(|F|/|k + i|)`` (non-Dirichlet) or ``U = log|F|``
    (Dirichlet), the result is ``(k + i) exp(G)`` or ``exp(G)`` where
    ``G = -(i/pi) int_0^inf U(t) 2k/(t^2 - k^2) dt`` for Im k > 0 and
    ``U(k) - (i/pi) PV int ...`` on the real axis.  Beyond the grid
    ``U`` is continued as ``U(T) T^2/t^2``.

    Parameters
    ----------
    absF : `halfline.SampledFunction`
        |F| on a grid starting at k = 0.
    k : `float`, `complex` or `numpy.ndarray`
        Real points inside the grid, or points with Im k > 0.
    thetaClass : `halfline.ThetaClass`
        Boundary class.

    Returns
    -------
    F : `numpy.ndarray` of `complex`

    Raises
    ------
    ValueError
        If ``U`` does not decay at the top of the grid.
    """
    if thetaClass is ThetaClass.UNDETERMINED:
        raise ValueError("outerJost needs a determined boundary class")
    t, modulus = _positiveHalf(absF)
    U = _logModulus(t, modulus, thetaClass)
    top = t[-1]
    if abs(U[-1]) > tailTolerance:
        raise ValueError("log|F| is not normalised at k = %g (U = %.3g); wrong boundary class?" %
                         (top, U[-1]))
    c = U[-1]*top*top
    Uprime = np.gradient(U, t)
    weights = trapezoidWeights(t)

    k = np.asarray(k, dtype=complex)
    flat = k.ravel()
    result = np.empty(flat.size, dtype=complex)
    for start in range(0, flat.size, chunkSize):
        chunk = flat[start:start + chunkSize]
        onAxis = np.abs(chunk.imag) <= 1e-14*(1.0 + np.abs(chunk.real))
        values = np.empty(chunk.size, dtype=complex)
        if np.any(onAxis):
            kr = np.abs(chunk.real[onAxis])
            if np.any(kr >= top):
                raise ValueError("Real k must lie inside the |F| grid")
            Uk = np.interp(kr, t, U)
            Upk = np.interp(kr, t, Uprime)
            diff = t[None, :] - kr[:, None]
            factor = 2.0*kr[:, None]/(t[None, :] + kr[:, None])
            with np.errstate(all="ignore"):
                integrand = (U[None, :] - Uk[:, None])/diff*factor
            singular = np.abs(diff) < 1e-12*(1.0 + kr[:, None])
            integrand = np.where(singular, Upk[:, None]*(kr[:, None] > 0), integrand)
            integrand = np.where(np.isfinite(integrand), integrand, 0.0)
            principal = (integrand @ weights + Uk*np.log(np.abs((top - kr)/(top + kr)))
                         + _tail(c, kr, top).real)
            logF = Uk - 1j/np.pi*principal
            logF = np.where(chunk.real[onAxis] < 0, np.conj(logF), logF)
            values[onAxis] = np.exp(logF)
        if np.any(~onAxis):
            kc = chunk[~onAxis]
            if np.any(kc.imag < 0):
                raise ValueError("outerJost is evaluated on the closed upper half plane only")
            kernel = 2.0*kc[:, None]/(t[None, :]**2 - kc[:, None]**2)
            values[~onAxis] = np.exp(-1j/np.pi*((kernel*U[None, :]) @ weights + _tail(c, kc, top)))
        if thetaClass is ThetaClass.NON_DIRICHLET:
            values = values*(chunk + 1j)
        result[start:start + chunkSize] = values
    return result.reshape(k.shape)


def spectralWeight(absF, thetaClass):
    """``k^2/|F|^2 - 1`` (non-Dirichlet) or ``1/|F|^2 - 1`` (Dirichlet)."""
    k, modulus = _positiveHalf(absF)
    with np.errstate(all="ignore"):
        if thetaClass is ThetaClass.NON_DIRICHLET:
            w = k*k/modulus**2 - 1.0
        else:
            w = 1.0/modulus**2 - 1.0
    if not np.isfinite(w[0]):
        if thetaClass is ThetaClass.DIRICHLET:
            raise ValueError("|F(0)| = 0 with a Dirichlet boundary is not supported")
        w[0] = 2.0*w[1] - w[2]
    return SampledFunction(k, w)


def _boundTerms(boundStates, thetaClass, x, y):
    total = 0.0
    for entry in boundStates:
        gamma, gSquared = entry.gamma, entry.g**2
        if thetaClass is ThetaClass.NON_DIRICHLET:
            total = total + gSquared*np.cosh(gamma*x)*np.cosh(gamma*y)
        else:
            total = total + gSquared/gamma**2*np.sinh(gamma*x)*np.sinh(gamma*y)
    return total


def glKernel(absF, boundStates, thetaClass, x, y, taperFraction=0.05, tailOrder=2, tailScale=1.0):
    """Gel'fand-Levitan kernel ``G(x, y)`` at arbitrary points."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    weight = spectralWeight(absF, thetaClass)
    u = np.concatenate((np.abs(x - y).ravel(), (x + y).ravel()))
    transform = cosineTransformEven(weight.grid, weight.real, u, taperFraction, tailOrder, tailScale).values
    minus, plus = transform[:x.size].reshape(x.shape), transform[x.size:].reshape(x.shape)
    sign = 1.0 if thetaClass is ThetaClass.NON_DIRICHLET else -1.0
    return 0.5*(minus + sign*plus) + _boundTerms(boundStates, thetaClass, x, y)


def glKernelMatrix(absF, boundStates, thetaClass, bEstimate, nCells, taperFraction=0.05, tailOrder=2,
                   tailScale=1.0, tailEnergyThreshold=1e-3):
    """``G(x_i, x_j)`` on ``x = i h``, h = bEstimate/nCells.

    Returns
    -------
    result : `lsst.pipe.base.Struct`
        Result struct with components:

        - ``matrix`` : symmetric kernel matrix (`numpy.ndarray`).
        - ``h`` : grid spacing (`float`).
        - ``tailEnergy`` : relative size of the weight left at the top of
          the k-grid (`float`).
    """
    h = bEstimate/nCells
    weight = spectralWeight(absF, thetaClass)
    transform = cosineTransformEven(weight.grid, weight.real, h*np.arange(2*nCells + 1), taperFraction,
                                    tailOrder, tailScale)
    if transform.tailEnergy > tailEnergyThreshold:
        log.warning("|F| data are truncated at k = %g with tail energy %.3g; raise kMax",
                    weight.grid[-1], transform.tailEnergy)
    index = np.arange(nCells + 1)
    sign = 1.0 if thetaClass is ThetaClass.NON_DIRICHLET else -1.0
    C = transform.values
    matrix = 0.5*(C[np.abs(index[:, None] - index[None, :])] + sign*C[index[:, None] + index[None, :]])
    x = h*index
    matrix = matrix + _boundTerms(boundStates, thetaClass, x[:, None], x[None, :])
    return Struct(matrix=matrix, h=h, tailEnergy=transform.tailEnergy)


def solveGl(G, h, thetaClass, tolerance=1e-8):
    """Solve ``A(x,y) + G(x,y) + int_0^x A(x,z) G(z,y) dz = 0`` for
    ``0 <= y <= x`` at every node ``x = i h``.

    Raises
    ------
    NumericalError
        If a Nystrom system is singular or its residual is too large.
    """
    size = G.shape[0]
    A = np.zeros_like(G)
    worst = 0.0
    for i in range(size):
        nodes = np.arange(i + 1)
        weights = trapezoidWeights(h*nodes)
        block = G[:i + 1, :i + 1]
        matrix = np.eye(i + 1) + block*weights[None, :]
        rhs = -G[i, :i + 1]
        try:
            solution = scipyLinalg.solve(matrix, rhs)
        except scipyLinalg.LinAlgError as e:
            raise NumericalError("Gel'fand-Levitan system is singular at x = %g: %s" % (i*h, e)) from e
        residual = float(np.max(np.abs(matrix @ solution - rhs))/(1.0 + np.max(np.abs(rhs))))
        if not residual < tolerance:
            raise NumericalError("Gel'fand-Levitan solve at x = %g has residual %.3g" % (i*h, residual))
        A[i, :i + 1] = solution
        worst = max(worst, residual)
    log.debug("Solved %d Gel'fand-Levitan systems; worst residual %.3g", size, worst)
    return GlKernelSolution(h*(size - 1), h, A, worst, thetaClass)


def extractPotentialAndTheta(solution):
    """Potential ``2 dA(x,x)/dx`` and the boundary, ``cot(theta) = -A(0,0)``.

    Returns
    -------
    result : `lsst.pipe.base.Struct`
        Result struct with components:

        - ``spec`` : recovered operator (`halfline.OperatorSpec`).
        - ``nodal`` : 5-point nodal values of the potential
          (`halfline.SampledFunction`).
    """
    diagonal = solution.diagonal
    cells = 2.0*np.diff(diagonal)/solution.h
    if solution.thetaClass is ThetaClass.DIRICHLET:
        boundary = BoundaryParameter.dirichlet()
    else:
        boundary = BoundaryParameter.nonDirichlet(-diagonal[0])
    nodal = 2.0*differentiate5Point(diagonal, solution.h)
    return Struct(spec=OperatorSpec(Potential(solution.b, cells), boundary),
                  nodal=SampledFunction(solution.x, nodal))


def regularSolutionFromKernel(solution, k):
    """``phi(k, x) = phi0(k, x) + int_0^x A(x, y) phi0(k, y) dy`` on the
    kernel grid, with ``phi0 = cos(kx)`` or ``sin(kx)/k``.
    """
    x = solution.x
    k = complex(k)
    if solution.thetaClass is ThetaClass.DIRICHLET:
        free = x.astype(complex) if k == 0 else np.sin(k*x)/k
    else:
        free = np.cos(k*x)
    weights = np.tril(np.full(solution.A.shape, solution.h))
    weights[np.diag_indices_from(weights)] *= 0.5
    weights[:, 0] *= 0.5
    weights[0, 0] = 0.0
    return SampledFunction(x, free + (solution.A*weights) @ free)


def verifyOrderIndependence(base, gammas, darboux):
    """Build the member with two bound states in both orders.

    Parameters
    ----------
    base : `halfline.OperatorSpec`
        Operator with eligible resonances at ``gammas``.
    gammas : sequence of `float`
        Two resonance locations.
    darboux : `halfline.DarbouxTask`
        Task performing the adds.

    Returns
    -------
    difference : `float`
        Largest gap between the two potentials (cell-wise) or the two
        cot(theta) values.
    """
    first, second = gammas
    forward = darboux.add(darboux.add(base, first).spec, second).spec
    backward = darboux.add(darboux.add(base, second).spec, first).spec
    if forward.nCells != backward.nCells:
        common = np.gcd(forward.nCells, backward.nCells)
        forwardCells = forward.potential.cellAverages(common).values
        backwardCells = backward.potential.cellAverages(common).values
    else:
        forwardCells, backwardCells = forward.potential.values, backward.potential.values
    difference = float(np.max(np.abs(forwardCells - backwardCells)))
    if not forward.isDirichlet:
        difference = max(difference, abs(forward.boundary.cotTheta - backward.boundary.cotTheta))
    return difference


class GelfandLevitanInversionConfig(Config):
    bMax = Field(dtype=float, default=1.0, doc="Support estimate b of the recovered potentials")
    nCells = Field(dtype=int, default=512, doc="Cells of the base member on [0, bMax]")
    betaMax = Field(dtype=float, default=20.0, doc="Window for the resonances of the base member")
    taperFraction = Field(dtype=float, default=0.05, doc="Raised-cosine taper over the top of the k-grid")
    tailOrder = Field(dtype=int, default=2, doc="Number of fitted 1/(k^2 + lambda^2)^j tail terms")
    tailScale = Field(dtype=float, default=1.0, doc="Scale lambda of the tail terms")
    tailEnergyThreshold = Field(dtype=float, default=1e-3, doc="Tail energy above which kMax is too small")
    thetaMargin = Field(dtype=float, default=0.9,
                        doc="Boundary-class fits closer than this ratio are ambiguous")
    nystromTolerance = Field(dtype=float, default=1e-8, doc="Residual bound of every Nystrom solve")
    outerKMax = Field(dtype=float, default=10.0, doc="Largest k of the outer-function check of the base")
    outerTolerance = Field(dtype=float, default=1e-3, doc="Relative tolerance of the outer-function check")
    modulusTolerance = Field(dtype=float, default=1e-3, doc="Relative |F| mismatch allowed for a member")
    modulusStride = Field(dtype=int, default=10, doc="Subsampling of the k-grid in the |F| check")
    orderTolerance = Field(dtype=float, default=1e-3,
                           doc="Gap allowed between the two add orders")
    doOrderCheck = Field(dtype=bool, default=True, doc="Compare both add orders on the first eligible pair?")
    doVerify = Field(dtype=bool, default=False, doc="Raise when the |F| or add-order check fails?")
    resonance = ConfigurableField(target=ResonanceAnalysisTask, doc="Resonances of the base member")
    darboux = ConfigurableField(target=DarbouxTask, doc="Darboux adds building the family")

    def validate(self):
        Config.validate(self)
        if not self.bMax > 0:
            raise ValueError("bMax must be positive, got %r" % (self.bMax,))
        if self.nCells < 8:
            raise ValueError("nCells must be at least 8, got %d" % (self.nCells,))
        if not 0 < self.taperFraction < 0.5:
            raise ValueError("taperFraction must lie in (0, 0.5), got %r" % (self.taperFraction,))
        if self.tailOrder not in (0, 1, 2):
            raise ValueError("tailOrder must be 0, 1 or 2, got %d" % (self.tailOrder,))
        if self.modulusStride < 1:
            raise ValueError("modulusStride must be positive")


class GelfandLevitanInversionTask(Task):
    """Recover the family of operators sharing a Jost-function modulus.
    """
    _DefaultName = "gelfandLevitanInversion"
    ConfigClass = GelfandLevitanInversionConfig

    def __init__(self, *args, **kwargs):
        Task.__init__(self, *args, **kwargs)
        self.makeSubtask("resonance")
        self.makeSubtask("darboux")

    def solveBase(self, absF, thetaClass, bEstimate):
        kernel = glKernelMatrix(absF, BoundStateSet(), thetaClass, bEstimate, self.config.nCells,
                                self.config.taperFraction, self.config.tailOrder, self.config.tailScale,
                                self.config.tailEnergyThreshold)
        solution = solveGl(kernel.matrix, kernel.h, thetaClass, self.config.nystromTolerance)
        spec = extractPotentialAndTheta(solution).spec
        return Struct(spec=spec, kernel=solution, tailEnergy=kernel.tailEnergy)

    def checkOuter(self, absF, spec, thetaClass):
        grid = absF.nonNegative().grid
        k = grid[(grid > 0) & (grid <= self.config.outerKMax)]
        k = k[::max(1, k.size//200)]
        outer = outerJost(absF, k, thetaClass)
        direct = jostFunction(spec, k)
        residual = float(np.max(np.abs(outer - direct)/(1.0 + np.abs(direct))))
        if residual > self.config.outerTolerance:
            self.log.warning("Outer Jost function and the base member differ by %.3g", residual)
        return residual

    def checkModulus(self, absF, member):
        half = absF.nonNegative()
        index = np.arange(0, half.grid.size, self.config.modulusStride)
        modulus = np.abs(jostFunction(member.spec, half.grid[index]))
        reference = half.modulus[index]
        return float(np.max(np.abs(modulus - reference)/(1.0 + reference)))

    def buildMember(self, base, gammas, mask):
        spec = base
        entries = []
        for gamma, chosen in zip(gammas, mask):
            if chosen:
                step = self.darboux.add(spec, gamma)
                spec = step.spec
                entries.append(step.boundState)
        return FamilyMember(spec, BoundStateSet(tuple(entries)), tuple(int(bit) for bit in mask))

    def run(self, absF, betaMax=None, bMax=None):
        """Enumerate every operator compatible with |F|.

        Parameters
        ----------
        absF : `halfline.SampledFunction`
            |F(k)| on a grid from 0 to kMax.
        betaMax : `float`, optional
            Resonance window; defaults to ``config.betaMax``.
        bMax : `float`, optional
            Support estimate; defaults to ``config.bMax``.

        Returns
        -------
        result : `lsst.pipe.base.Struct`
            Result struct with components:

            - ``family`` : all ``2^M`` members (`SolutionFamily`).

        Raises
        ------
        VerificationError
            If ``doVerify`` and a member does not reproduce |F| or the two
            add orders disagree.
        """
        betaMax = self.config.betaMax if betaMax is None else betaMax
        bEstimate = self.config.bMax if bMax is None else bMax
        thetaClass = detectThetaClass(absF, self.config.thetaMargin)
        self.log.info("Boundary class from |F|: %s", thetaClass.value)
        base = self.solveBase(absF, thetaClass, bEstimate)
        residuals = {"tailEnergy": base.tailEnergy, "nystromResidual": base.kernel.residual,
                     "outerJost": self.checkOuter(absF, base.spec, thetaClass)}
        spurious = boundStateGammas(base.spec, betaMax)
        if spurious.size:
            self.log.warning("Base member has zeros of H on beta > 0 at %s", spurious)
        report = self.resonance.analyze(base.spec, betaMax)
        gammas = tuple(float(gamma) for gamma in np.sort(report.eligibleGammas))
        M = len(gammas)
        self.log.info("Base member: cot(theta) = %s; %d eligible resonance(s) at %s",
                      base.spec.boundary.cotTheta, M, gammas)

        members = []
        worst = 0.0
        for mask in itertools.product((0, 1), repeat=M):
            member = self.buildMember(base.spec, gammas, mask)
            worst = max(worst, self.checkModulus(absF, member))
            members.append(member)
        residuals["modulus"] = worst
        requireLess = {"modulus": self.config.modulusTolerance}
        if self.config.doOrderCheck and M >= 2:
            residuals["orderIndependence"] = verifyOrderIndependence(base.spec, gammas[:2], self.darboux)
            requireLess["orderIndependence"] = self.config.orderTolerance
        ToleranceEnforcer(requireLess=requireLess, doRaise=self.config.doVerify)(residuals, self.log,
                                                                                 "|F| family")
        family = SolutionFamily(tuple(members), M, np.array(gammas), members[0], thetaClass, residuals)
        self.log.info("Family of %d operator(s); worst |F| residual %.3g", len(members), worst)
        return Struct(family=family)


def enumerateSolutions(absF, betaMax=20.0, bEstimate=1.0, nCells=512):
    """Convenience wrapper running `GelfandLevitanInversionTask` with
    default settings.
    """
    config = GelfandLevitanInversionConfig()
    config.betaMax = betaMax
    config.bMax = bEstimate
    config.nCells = nCells
    return GelfandLevitanInversionTask(config=config).run(absF).family
