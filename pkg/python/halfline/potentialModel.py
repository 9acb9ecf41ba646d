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

"""Operator specifications: a piecewise-constant potential on [0, b] plus
the selfadjoint boundary condition at x = 0, and their file formats.
"""

import dataclasses
import enum
import json
import logging

import numpy as np
import pandas as pd

__all__ = ["BoundaryKind", "ThetaClass", "BoundaryParameter", "Potential", "OperatorSpec", "BoundState",
           "BoundStateSet", "SampledFunction", "makeOperatorSpec", "integralOfPotential",
           "writeOperatorSpec", "readOperatorSpec", "writeSampledFunction", "readSampledFunction"]

log = logging.getLogger(__name__)


class BoundaryKind(enum.Enum):
    DIRICHLET = "dirichlet"
    NON_DIRICHLET = "non_dirichlet"


class ThetaClass(enum.Enum):
    """Boundary class inferred from scattering data.
    """
    DIRICHLET = "dirichlet"
    NON_DIRICHLET = "non_dirichlet"
    UNDETERMINED = "undetermined"


@dataclasses.dataclass(frozen=True)
class BoundaryParameter:
    """Boundary condition ``sin(theta) psi'(0) + cos(theta) psi(0) = 0``.

    The Dirichlet case is theta = pi; every other theta in (0, pi) is
    carried by its cotangent.
    """
    kind: BoundaryKind
    cotTheta: float = None

    def __post_init__(self):
        if self.kind is BoundaryKind.DIRICHLET:
            if self.cotTheta is not None:
                raise ValueError("A Dirichlet boundary carries no cot(theta)")
        elif self.kind is BoundaryKind.NON_DIRICHLET:
            if self.cotTheta is None or not np.isfinite(self.cotTheta):
                raise ValueError("A non-Dirichlet boundary needs a finite cot(theta), got %r" %
                                 (self.cotTheta,))
            object.__setattr__(self, "cotTheta", float(self.cotTheta))
        else:
            raise ValueError("Unknown boundary kind: %r" % (self.kind,))

    @classmethod
    def dirichlet(cls):
        return cls(BoundaryKind.DIRICHLET)

    @classmethod
    def nonDirichlet(cls, cotTheta):
        return cls(BoundaryKind.NON_DIRICHLET, cotTheta)

    @property
    def isDirichlet(self):
        return self.kind is BoundaryKind.DIRICHLET

    @property
    def thetaClass(self):
        return ThetaClass.DIRICHLET if self.isDirichlet else ThetaClass.NON_DIRICHLET

    @property
    def theta(self):
        """Boundary angle in (0, pi]."""
        if self.isDirichlet:
            return np.pi
        return float(np.arctan2(1.0, self.cotTheta))

    def shifted(self, delta):
        """Return the boundary with cot(theta) moved by ``delta``.

        A Dirichlet boundary is returned unchanged.
        """
        if self.isDirichlet:
            return self
        return BoundaryParameter.nonDirichlet(self.cotTheta + delta)

    def toDict(self):
        if self.isDirichlet:
            return {"kind": BoundaryKind.DIRICHLET.value}
        return {"kind": BoundaryKind.NON_DIRICHLET.value, "cot_theta": self.cotTheta}

    @classmethod
    def fromDict(cls, data):
        try:
            kind = BoundaryKind(data["kind"])
        except (KeyError, TypeError, ValueError) as e:
            raise ValueError("Malformed boundary entry: %r" % (data,)) from e
        if kind is BoundaryKind.DIRICHLET:
            return cls.dirichlet()
        if "cot_theta" not in data:
            raise ValueError("Boundary entry of kind non_dirichlet lacks cot_theta: %r" % (data,))
        return cls.nonDirichlet(float(data["cot_theta"]))


@dataclasses.dataclass(frozen=True, eq=False)
class Potential:
    """Piecewise-constant potential on uniform cells of [0, b].

    Parameters
    ----------
    b : `float`
        Support bound; the potential vanishes for x > b.
    values : `numpy.ndarray` of `float`
        One value per cell, ordered from x = 0 to x = b.
    """
    b: float
    values: np.ndarray

    def __post_init__(self):
        b = float(self.b)
        if not (np.isfinite(b) and b > 0):
            raise ValueError("Support bound must be positive and finite, got %r" % (self.b,))
        values = np.array(self.values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("A potential needs at least one cell")
        if not np.all(np.isfinite(values)):
            raise ValueError("Cell values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "values", values)

    @property
    def nCells(self):
        return self.values.size

    @property
    def cellWidth(self):
        return self.b/self.nCells

    @property
    def edges(self):
        return np.linspace(0.0, self.b, self.nCells + 1)

    @property
    def centers(self):
        return (np.arange(self.nCells) + 0.5)*self.cellWidth

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        index = np.clip(np.floor(x/self.cellWidth).astype(int), 0, self.nCells - 1)
        inside = (x >= 0) & (x <= self.b)
        return np.where(inside, self.values[index], 0.0)

    def integral(self):
        return float(np.sum(self.values)*self.cellWidth)

    def absIntegral(self):
        return float(np.sum(np.abs(self.values))*self.cellWidth)

    def refined(self, factor):
        """Return the same function on cells ``factor`` times finer."""
        return Potential(self.b, np.repeat(self.values, int(factor)))

    def cellAverages(self, nCells):
        """Project onto ``nCells`` uniform cells, each a union of current cells.
        """
        if nCells <= 0 or self.nCells % nCells != 0:
            raise ValueError("Cannot average %d cells onto %d cells" % (self.nCells, nCells))
        return Potential(self.b, self.values.reshape(nCells, -1).mean(axis=1))


@dataclasses.dataclass(frozen=True, eq=False)
class OperatorSpec:
    potential: Potential
    boundary: BoundaryParameter

    @property
    def b(self):
        return self.potential.b

    @property
    def nCells(self):
        return self.potential.nCells

    @property
    def isDirichlet(self):
        return self.boundary.isDirichlet

    def withBoundary(self, boundary):
        return dataclasses.replace(self, boundary=boundary)

    def toDict(self):
        return {"b": self.potential.b, "cells": [float(v) for v in self.potential.values],
                "boundary": self.boundary.toDict()}

    @classmethod
    def fromDict(cls, data):
        try:
            b = data["b"]
            cells = data["cells"]
            boundary = data["boundary"]
        except (KeyError, TypeError) as e:
            raise ValueError("Operator spec needs b, cells and boundary entries") from e
        return makeOperatorSpec(b, cells, BoundaryParameter.fromDict(boundary))


@dataclasses.dataclass(frozen=True)
class BoundState:
    """A bound state at k = i*gamma with its Gel'fand-Levitan (``g``) and
    Marchenko (``m``) norming constants.
    """
    gamma: float
    g: float
    m: float

    def toDict(self):
        return {"gamma": self.gamma, "g": self.g, "m": self.m}


@dataclasses.dataclass(frozen=True)
class BoundStateSet:
    entries: tuple = ()

    def __post_init__(self):
        entries = tuple(sorted(self.entries, key=lambda entry: entry.gamma))
        gammas = [entry.gamma for entry in entries]
        if any(gamma <= 0 for gamma in gammas):
            raise ValueError("Bound-state wavenumbers must be positive: %s" % gammas)
        if len(set(gammas)) != len(gammas):
            raise ValueError("Bound-state wavenumbers must be distinct: %s" % gammas)
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def count(self):
        return len(self.entries)

    @property
    def gammas(self):
        return np.array([entry.gamma for entry in self.entries], dtype=float)

    @property
    def gSquared(self):
        return np.array([entry.g**2 for entry in self.entries], dtype=float)

    @property
    def mSquared(self):
        return np.array([entry.m**2 for entry in self.entries], dtype=float)

    def withEntry(self, entry):
        return BoundStateSet(self.entries + (entry,))

    def toList(self):
        return [entry.toDict() for entry in self.entries]


@dataclasses.dataclass(frozen=True, eq=False)
class SampledFunction:
    """A complex function tabulated on a strictly ascending real grid.
    """
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float).ravel()
        values = np.array(self.values, dtype=complex).ravel()
        if grid.size != values.size:
            raise ValueError("Grid and values differ in length: %d != %d" % (grid.size, values.size))
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise ValueError("Sample grid must be strictly ascending")
        if not np.all(np.isfinite(grid)):
            raise ValueError("Sample grid must be finite")
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.grid.size

    @property
    def real(self):
        return self.values.real

    @property
    def imag(self):
        return self.values.imag

    @property
    def modulus(self):
        return np.abs(self.values)

    def nonNegative(self):
        """Return the samples with grid >= 0."""
        keep = self.grid >= 0
        return SampledFunction(self.grid[keep], self.values[keep])

    def mirrored(self):
        """Extend samples given on k >= 0 to negative k using
        f(-k) = conj(f(k)).
        """
        half = self.nonNegative()
        positive = half.grid > 0
        grid = np.concatenate((-half.grid[positive][::-1], half.grid))
        values = np.concatenate((np.conj(half.values[positive][::-1]), half.values))
        return SampledFunction(grid, values)

    def valueNear(self, x):
        """Sample closest to ``x``."""
        return self.values[np.argmin(np.abs(self.grid - x))]


def makeOperatorSpec(b, cellValues, boundary):
    """Build an operator from uniform cell values on [0, b].

    Parameters
    ----------
    b : `float`
        Support bound (> 0).
    cellValues : sequence of `float`
        Potential value on each cell.
    boundary : `BoundaryParameter`
        Boundary condition at x = 0.

    Returns
    -------
    spec : `OperatorSpec`

    Raises
    ------
    ValueError
        If ``b`` is not positive or a cell value is not finite.
    """
    if not isinstance(boundary, BoundaryParameter):
        raise ValueError("boundary must be a BoundaryParameter, got %r" % (boundary,))
    return OperatorSpec(Potential(b, cellValues), boundary)


def integralOfPotential(spec):
    return spec.potential.integral()


def writeOperatorSpec(spec, path):
    with open(path, "w") as outFile:
        json.dump(spec.toDict(), outFile, indent=2)
        outFile.write("\n")


def readOperatorSpec(path):
    """Read an operator spec JSON file.

    Raises
    ------
    ValueError
        If the file is not valid JSON or lacks a required entry.
    """
    with open(path) as inFile:
        try:
            data = json.load(inFile)
        except json.JSONDecodeError as e:
            raise ValueError("Cannot parse operator spec %s: %s" % (path, e)) from e
    return OperatorSpec.fromDict(data)


def writeSampledFunction(sampled, path):
    df = pd.DataFrame({"x_or_k": sampled.grid, "re": sampled.real, "im": sampled.imag})
    df.to_csv(path, index=False, float_format="%.17g")


def readSampledFunction(path):
    """Read a sampled function from CSV.

    The first column holds the grid (``x_or_k``, ``k`` or ``x``).  Values
    come from ``re``/``im`` columns, or from the single remaining column
    for real-valued data such as |F(k)|.
    """
    try:
        df = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ValueError("Cannot parse sampled function %s: %s" % (path, e)) from e
    gridColumn = next((name for name in ("x_or_k", "k", "x") if name in df.columns), None)
    if gridColumn is None:
        raise ValueError("%s has no x_or_k column; columns are %s" % (path, list(df.columns)))
    if "re" in df.columns:
        values = df["re"].to_numpy(dtype=float) + 0j
        if "im" in df.columns:
            values = values + 1j*df["im"].to_numpy(dtype=float)
    else:
        others = [name for name in df.columns if name != gridColumn]
        if len(others) != 1:
            raise ValueError("%s needs re/im columns or exactly one value column" % (path,))
        values = df[others[0]].to_numpy(dtype=float) + 0j
    grid = df[gridColumn].to_numpy(dtype=float)
    if not (np.all(np.isfinite(values.real)) and np.all(np.isfinite(values.imag))):
        raise ValueError("%s contains non-finite values" % (path,))
    log.debug("Read %d samples from %s", grid.size, path)
    return SampledFunction(grid, values)
