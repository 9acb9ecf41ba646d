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

import enum
import logging

import numpy as np
import scipy.integrate as scipyIntegrate
import scipy.linalg as scipyLinalg
import scipy.optimize as scipyOptimize

from lsst.pipe.base import Struct, TaskError

__all__ = ["NumericalError", "VerificationError", "ToleranceEnforcer", "cellTransfer", "trapezoidWeights",
           "cumulativeIntegral", "differentiate5Point", "raisedCosineTaper", "fourierTransformHermitian",
           "cosineTransformEven", "AaaApproximant", "signChangeRoots", "polishRoot", "centeredDerivative",
           "roundFloats"]

log = logging.getLogger(__name__)


class NumericalError(TaskError):
    """A computation failed numerically (underflow, singular system,
    unresolved rational fit, truncated transform).
    """
    pass


class VerificationError(TaskError):
    """A consistency check on computed results failed.

    Parameters
    ----------
    message : `str`
        Description of the failed check.
    residuals : `dict`, optional
        Named residuals that were checked.
    """
    def __init__(self, message, residuals=None):
        TaskError.__init__(self, message)
        self.residuals = dict(residuals or {})


class ToleranceEnforcer(object):
    """Functor for enforcing upper limits on named residuals.
    """
    def __init__(self, requireLess={}, doRaise=False):
        self.requireLess = requireLess
        self.doRaise = doRaise

    def __call__(self, residuals, log, description):
        failures = []
        for label, limit in self.requireLess.items():
            if label not in residuals or residuals[label] is None:
                continue
            value = residuals[label]
            if not value < limit:
                text = "%s %s = %.3g exceeds maximum limit of %.3g" % (description, label, value, limit)
                log.warning(text)
                failures.append(text)
        if failures and self.doRaise:
            raise VerificationError("; ".join(failures), residuals)
        return not failures


def cellTransfer(eta2, t):
    """Entries of the propagator of ``psi'' = eta2 psi`` across a length ``t``.

    Parameters
    ----------
    eta2 : `complex` or `numpy.ndarray`
        ``V - k**2`` on the cell.
    t : `float` or `numpy.ndarray`
        Propagation length (broadcast against ``eta2``).

    Returns
    -------
    cosh, sinhOverEta, etaSinh : `numpy.ndarray`
        ``cosh(eta t)``, ``sinh(eta t)/eta`` and ``eta sinh(eta t)``; all
        even in eta, so the branch of the square root does not matter.
    """
    eta2 = np.asarray(eta2, dtype=complex)
    t = np.asarray(t, dtype=float)
    z2 = eta2*t*t
    z = np.sqrt(z2)
    small = np.abs(z2) < 1e-6
    with np.errstate(all="ignore"):
        sinhc = np.where(small, 1.0 + z2/6.0 + z2*z2/120.0, np.sinh(z)/np.where(small, 1.0, z))
    return np.cosh(z), t*sinhc, eta2*t*sinhc


def trapezoidWeights(grid):
    grid = np.asarray(grid, dtype=float)
    weights = np.zeros(grid.size)
    if grid.size > 1:
        steps = np.diff(grid)
        weights[:-1] += 0.5*steps
        weights[1:] += 0.5*steps
    return weights


def cumulativeIntegral(values, derivatives, h):
    """Cumulative integral on a uniform grid from its first node.

    The trapezoid sums carry the endpoint-derivative correction
    ``-h**2/12 (F'(x) - F'(x0))``, which makes them fourth order whenever
    ``F'`` is continuous (kinks in ``F''`` at nodes are allowed).

    Parameters
    ----------
    values : `numpy.ndarray`
        Integrand samples.
    derivatives : `numpy.ndarray` or `None`
        Derivative of the integrand at the same nodes; `None` gives the
        plain trapezoid rule.
    h : `float`
        Grid spacing.
    """
    values = np.asarray(values)
    total = scipyIntegrate.cumulative_trapezoid(values, dx=h, initial=0.0)
    if derivatives is not None:
        derivatives = np.asarray(derivatives)
        total = total - h*h/12.0*(derivatives - derivatives[0])
    return total


def differentiate5Point(values, h):
    """First derivative on a uniform grid with 5-point stencils.

    Centred stencils in the interior, one-sided 5-point stencils on the
    two nodes nearest each end.
    """
    f = np.asarray(values, dtype=float)
    n = f.size
    if n < 5:
        return np.gradient(f, h)
    d = np.empty(n)
    d[2:-2] = (f[:-4] - 8.0*f[1:-3] + 8.0*f[3:-1] - f[4:])/(12.0*h)
    d[0] = (-25.0*f[0] + 48.0*f[1] - 36.0*f[2] + 16.0*f[3] - 3.0*f[4])/(12.0*h)
    d[1] = (-3.0*f[0] - 10.0*f[1] + 18.0*f[2] - 6.0*f[3] + f[4])/(12.0*h)
    d[-1] = (25.0*f[-1] - 48.0*f[-2] + 36.0*f[-3] - 16.0*f[-4] + 3.0*f[-5])/(12.0*h)
    d[-2] = (3.0*f[-1] + 10.0*f[-2] - 18.0*f[-3] + 6.0*f[-4] - f[-5])/(12.0*h)
    return d


def raisedCosineTaper(grid, fraction):
    """Unit weights rolling off to zero over the last ``fraction`` of
    ``[0, grid[-1]]``.
    """
    grid = np.asarray(grid, dtype=float)
    top = grid[-1]
    start = (1.0 - fraction)*top
    taper = np.ones(grid.size)
    if fraction > 0 and top > start:
        roll = grid > start
        taper[roll] = 0.5*(1.0 + np.cos(np.pi*(grid[roll] - start)/(top - start)))
    return taper


def _halfLineSamples(kGrid, values):
    kGrid = np.asarray(kGrid, dtype=float)
    keep = kGrid >= 0
    k = kGrid[keep]
    v = np.asarray(values)[keep]
    if k.size < 8 or k[0] > 1e-9*k[-1]:
        raise ValueError("Transforms need at least 8 samples on a grid starting at k = 0")
    return k, v


def _tailEnergy(k, weights, residual, values, fraction):
    band = k > (1.0 - fraction)*k[-1]
    total = np.sum(weights*np.abs(values)**2)
    if total == 0:
        return 0.0
    return float(np.sqrt(np.sum(weights[band]*np.abs(residual[band])**2)/total))


def fourierTransformHermitian(kGrid, values, yGrid, taperFraction=0.05, tailOrder=3, tailScale=1.0,
                              chunkSize=256):
    """Evaluate ``(1/2 pi) int v(k) exp(iky) dk`` for y >= 0.

    ``v`` is sampled on k >= 0 and extended by ``v(-k) = conj(v(k))``.
    Before truncating at the top of the grid, a tail
    ``sum_j c_j (i/(k + i lambda))**j`` with real ``c_j`` is fitted on the
    upper half of the grid and subtracted; its transform vanishes for
    y > 0, so only the remainder is integrated.

    Parameters
    ----------
    kGrid : `numpy.ndarray`
        Wavenumbers; only k >= 0 are used and the grid must start at 0.
    values : `numpy.ndarray` of `complex`
        Samples of ``v``.
    yGrid : `numpy.ndarray`
        Non-negative evaluation points.
    taperFraction : `float`, optional
        Fraction of the grid covered by the raised-cosine roll-off.
    tailOrder : `int`, optional
        Number of fitted tail terms.
    tailScale : `float`, optional
        ``lambda`` of the tail terms.
    chunkSize : `int`, optional
        Number of y values per matrix product.

    Returns
    -------
    result : `lsst.pipe.base.Struct`
        Attributes are:

        ``values``
            The transform on ``yGrid`` (`numpy.ndarray` of `float`).
        ``tailEnergy``
            RMS of the fitted remainder over the taper band relative to
            the RMS of ``v`` (`float`).
        ``tailCoefficients``
            The fitted ``c_j`` (`numpy.ndarray`).
    """
    k, v = _halfLineSamples(kGrid, values)
    v = v.astype(complex)
    yGrid = np.asarray(yGrid, dtype=float)
    if np.any(yGrid < 0):
        raise ValueError("Hermitian transforms are evaluated for y >= 0 only")
    coefficients = np.zeros(tailOrder)
    reference = np.zeros(k.size, dtype=complex)
    if tailOrder > 0:
        basis = np.array([(1j/(k + 1j*tailScale))**j for j in range(1, tailOrder + 1)])
        window = k >= 0.5*k[-1]
        design = np.concatenate((basis[:, window].real, basis[:, window].imag), axis=1).T
        target = np.concatenate((v[window].real, v[window].imag))
        coefficients = np.linalg.lstsq(design, target, rcond=None)[0]
        reference = coefficients @ basis
    residual = v - reference
    weights = trapezoidWeights(k)
    weighted = residual*raisedCosineTaper(k, taperFraction)*weights/np.pi
    transform = np.empty(yGrid.size)
    for start in range(0, yGrid.size, chunkSize):
        phase = np.outer(yGrid[start:start + chunkSize], k)
        transform[start:start + chunkSize] = np.cos(phase) @ weighted.real - np.sin(phase) @ weighted.imag
    return Struct(values=transform, tailEnergy=_tailEnergy(k, weights, residual, v, taperFraction),
                  tailCoefficients=coefficients)


def cosineTransformEven(kGrid, values, uGrid, taperFraction=0.05, tailOrder=2, tailScale=1.0,
                        chunkSize=256):
    """Evaluate ``C(u) = (2/pi) int_0^inf w(k) cos(ku) dk`` for an even,
    real ``w``.

    A tail ``sum_j c_j/(k**2 + lambda**2)**j`` (j <= 2) is fitted on the
    upper half of the grid and subtracted before truncation; its transform
    is added back in closed form.  Returns a `lsst.pipe.base.Struct` with
    ``values``, ``tailEnergy`` and ``tailCoefficients`` as in
    `fourierTransformHermitian`.
    """
    if tailOrder not in (0, 1, 2):
        raise ValueError("Closed-form cosine tails exist for orders 0, 1 and 2, not %d" % tailOrder)
    k, w = _halfLineSamples(kGrid, values)
    w = np.asarray(w, dtype=complex).real
    u = np.abs(np.asarray(uGrid, dtype=float))
    lam = tailScale
    coefficients = np.zeros(tailOrder)
    reference = np.zeros(k.size)
    if tailOrder > 0:
        basis = np.array([1.0/(k*k + lam*lam)**j for j in range(1, tailOrder + 1)])
        window = k >= 0.5*k[-1]
        coefficients = np.linalg.lstsq(basis[:, window].T, w[window], rcond=None)[0]
        reference = coefficients @ basis
    residual = w - reference
    weights = trapezoidWeights(k)
    weighted = 2.0/np.pi*residual*raisedCosineTaper(k, taperFraction)*weights
    transform = np.empty(u.size)
    for start in range(0, u.size, chunkSize):
        transform[start:start + chunkSize] = np.cos(np.outer(u[start:start + chunkSize], k)) @ weighted
    closedForms = [np.exp(-lam*u)/lam, (1.0 + lam*u)*np.exp(-lam*u)/(2.0*lam**3)]
    for coefficient, closedForm in zip(coefficients, closedForms):
        transform += coefficient*closedForm
    return Struct(values=transform, tailEnergy=_tailEnergy(k, weights, residual, w, taperFraction),
                  tailCoefficients=coefficients)


class AaaApproximant(object):
    """Barycentric rational approximant built with the adaptive
    Antoulas-Anderson (AAA) algorithm.

    ``r(z) = sum_j w_j f_j/(z - z_j) / sum_j w_j/(z - z_j)``

    Parameters
    ----------
    nodes : `numpy.ndarray` of `complex`
        Support points ``z_j``.
    values : `numpy.ndarray` of `complex`
        Data values ``f_j`` at the support points.
    weights : `numpy.ndarray` of `complex`
        Barycentric weights ``w_j``.
    residual : `float`, optional
        Largest error on the fitted samples relative to the largest sample.
    converged : `bool`, optional
        Whether ``residual`` met the requested tolerance.
    """
    def __init__(self, nodes, values, weights, residual=0.0, converged=True):
        self.nodes = np.asarray(nodes, dtype=complex)
        self.values = np.asarray(values, dtype=complex)
        self.weights = np.asarray(weights, dtype=complex)
        self.residual = residual
        self.converged = converged

    @property
    def degree(self):
        return self.nodes.size - 1

    @classmethod
    def fit(cls, z, f, tolerance=1e-8, maxDegree=150):
        z = np.asarray(z, dtype=complex).ravel()
        f = np.asarray(f, dtype=complex).ravel()
        scale = max(np.max(np.abs(f)), np.finfo(float).tiny)
        approx = np.full(f.shape, np.mean(f))
        error = np.max(np.abs(f - approx))
        if error <= tolerance*scale:
            return cls(z[:1], approx[:1], np.ones(1), error/scale, True)
        free = np.ones(z.size, dtype=bool)
        support = []
        for _ in range(min(maxDegree + 1, z.size - 1)):
            j = int(np.argmax(np.where(free, np.abs(f - approx), -1.0)))
            support.append(j)
            free[j] = False
            zj = z[support]
            fj = f[support]
            cauchy = 1.0/(z[free, None] - zj[None, :])
            loewner = (f[free, None] - fj[None, :])*cauchy
            _, _, vh = np.linalg.svd(loewner, full_matrices=False)
            weights = vh[-1].conj()
            approx = f.copy()
            with np.errstate(all="ignore"):
                approx[free] = (cauchy @ (weights*fj))/(cauchy @ weights)
            error = np.max(np.abs(f - approx))
            if error <= tolerance*scale:
                log.debug("AAA converged at degree %d with residual %.3g", len(support) - 1, error/scale)
                return cls(zj, fj, weights, error/scale, True)
        log.debug("AAA stopped at degree %d with residual %.3g", len(support) - 1, error/scale)
        return cls(zj, fj, weights, error/scale, False)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        flat = z.ravel()
        diff = flat[:, None] - self.nodes[None, :]
        with np.errstate(all="ignore"):
            cauchy = 1.0/diff
            result = (cauchy @ (self.weights*self.values))/(cauchy @ self.weights)
        rows, cols = np.nonzero(diff == 0)
        result[rows] = self.values[cols]
        return result.reshape(z.shape)

    def _pencilRoots(self, coefficients):
        size = self.nodes.size + 1
        pencil = np.zeros((size, size), dtype=complex)
        pencil[0, 1:] = coefficients
        pencil[1:, 0] = 1.0
        pencil[1:, 1:] = np.diag(self.nodes)
        mass = np.eye(size, dtype=complex)
        mass[0, 0] = 0.0
        eigvals = scipyLinalg.eigvals(pencil, b=mass)
        return eigvals[np.isfinite(eigvals)]

    def poles(self):
        return self._pencilRoots(self.weights)

    def zeros(self):
        return self._pencilRoots(self.weights*self.values)

    def residues(self, poles=None):
        """Residues ``N(p)/D'(p)`` at ``poles`` (default: all poles)."""
        poles = self.poles() if poles is None else np.asarray(poles, dtype=complex)
        diff = poles[:, None] - self.nodes[None, :]
        numerator = (1.0/diff) @ (self.weights*self.values)
        denominatorDerivative = -(1.0/diff**2) @ self.weights
        return numerator/denominatorDerivative


def centeredDerivative(func, x, step=None):
    x = np.asarray(x, dtype=float)
    if step is None:
        step = 1e-6*(1.0 + np.abs(x))
    return (func(x + step) - func(x - step))/(2.0*step)


def polishRoot(func, x, step=None):
    """One Newton step with a centred-difference derivative, kept only if
    it reduces ``|func|``.
    """
    value = func(x)
    slope = centeredDerivative(func, x, step)
    if slope == 0 or not np.isfinite(slope):
        return x
    candidate = x - value/slope
    return candidate if abs(func(candidate)) < abs(value) else x


def signChangeRoots(func, grid, values, xtol=1e-12):
    """Roots of ``func`` bracketed by sign changes of ``values`` sampled on
    ``grid``, refined with Brent's method.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    roots = [grid[i] for i in np.flatnonzero(values == 0)]
    for i in np.flatnonzero(values[:-1]*values[1:] < 0):
        roots.append(scipyOptimize.brentq(func, grid[i], grid[i + 1], xtol=xtol))
    return np.sort(np.array(roots, dtype=float))


def roundFloats(obj, digits=12):
    """Copy of ``obj`` with every float rounded to ``digits`` significant
    digits, ready for deterministic JSON output.
    """
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        if not np.isfinite(obj):
            return None
        return float("%.*g" % (digits, obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": roundFloats(obj.real, digits), "im": roundFloats(obj.imag, digits)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, np.ndarray):
        return roundFloats(obj.tolist(), digits)
    if isinstance(obj, dict):
        return {str(key): roundFloats(value, digits) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [roundFloats(value, digits) for value in obj]
    return obj
