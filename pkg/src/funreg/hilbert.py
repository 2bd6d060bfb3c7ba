"""Discretized Hilbert space: grids, quadrature weights, curves.

A curve is a vector of values on a shared grid; the inner product is the
quadrature sum ``<f, g> = sum_i w_i f_i g_i``. All cross-grid operations
are rejected rather than silently resampled.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, ValidationError


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Grid:
    """Ordered abscissae with strictly positive quadrature weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = _frozen_array(self.points)
        weights = _frozen_array(self.weights)
        if points.ndim != 1 or weights.ndim != 1:
            raise ValidationError("grid points and weights must be 1-d")
        if points.size != weights.size:
            raise ValidationError("grid points and weights must have equal length")
        if points.size < 2:
            raise ValidationError("a grid needs at least 2 points")
        if not np.all(np.isfinite(points)) or not np.all(np.isfinite(weights)):
            raise ValidationError("grid points and weights must be finite")
        if not np.all(np.diff(points) > 0):
            raise ValidationError("grid points must be strictly increasing")
        if not np.all(weights > 0):
            raise ValidationError("quadrature weights must be strictly positive")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Grid):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.weights, other.weights
        )

    def __hash__(self):
        return hash((self.points.tobytes(), self.weights.tobytes()))


@dataclass(frozen=True)
class Curve:
    """One discretized element of the function space."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 1:
            raise ValidationError("curve values must be 1-d")
        if values.size != len(self.grid):
            raise ValidationError(
                f"curve has {values.size} values but grid has {len(self.grid)} points"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("curve values must be finite")
        object.__setattr__(self, "values", values)

    def __add__(self, other: "Curve") -> "Curve":
        ensure_same_grid(self, other)
        return Curve(self.grid, self.values + other.values)

    def __sub__(self, other: "Curve") -> "Curve":
        ensure_same_grid(self, other)
        return Curve(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "Curve":
        return Curve(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    @staticmethod
    def zeros(grid: Grid) -> "Curve":
        return Curve(grid, np.zeros(len(grid)))


def ensure_same_grid(f: Curve, g: Curve) -> None:
    """Raise GridMismatchError unless both curves share one grid."""
    if f.grid is g.grid:
        return
    if f.grid != g.grid:
        raise GridMismatchError("curves live on different grids")


def inner_product(f: Curve, g: Curve) -> float:
    """Quadrature inner product sum_i w_i f_i g_i.

    The elementwise product f*g is formed before applying the weights so
    that swapping the arguments gives a bit-identical result.
    """
    ensure_same_grid(f, g)
    return float(np.sum((f.values * g.values) * f.grid.weights))


def norm(f: Curve) -> float:
    """Quadrature norm sqrt(<f, f>)."""
    return float(np.sqrt(inner_product(f, f)))


def make_trapezoid_grid(a: float, b: float, p: int) -> Grid:
    """Uniform grid on [a, b] with trapezoid-rule weights."""
    if p < 2:
        raise ValidationError(f"need at least 2 grid points, got {p}")
    if not a < b:
        raise ValidationError(f"invalid interval [{a}, {b}]")
    points = np.linspace(a, b, p)
    h = (b - a) / (p - 1)
    weights = np.full(p, h)
    weights[0] = h / 2
    weights[-1] = h / 2
    return Grid(points, weights)


def trapezoid_weights(points: np.ndarray) -> np.ndarray:
    """Trapezoid weights for strictly increasing abscissae.

    Uniform spacing is detected and routed through the same arithmetic
    as make_trapezoid_grid, so weights rebuilt from stored points match
    the original grid bit for bit.
    """
    points = np.asarray(points, dtype=float)
    p = points.size
    h = (points[-1] - points[0]) / (p - 1)
    if np.abs(np.diff(points) - h).max() <= 1e-12 * h:
        w = np.full(p, h)
        w[0] = h / 2
        w[-1] = h / 2
        return w
    w = np.empty(p)
    w[0] = (points[1] - points[0]) / 2
    w[-1] = (points[-1] - points[-2]) / 2
    w[1:-1] = (points[2:] - points[:-2]) / 2
    return w


def load_curves_csv(path) -> list[Curve]:
    """Read a curve matrix CSV: first row grid points, one curve per row.

    Weights are not stored in the file; trapezoid weights are rebuilt
    from the abscissae.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if len(rows) < 2:
        raise ValidationError(f"{path}: need a grid row and at least one curve row")
    try:
        parsed = [[float(cell) for cell in row] for row in rows]
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric cell ({exc})") from None
    width = len(parsed[0])
    if any(len(row) != width for row in parsed):
        raise ValidationError(f"{path}: ragged rows")
    points = np.array(parsed[0])
    if not np.all(np.diff(points) > 0):
        raise ValidationError(f"{path}: grid row must be strictly increasing")
    grid = Grid(points, trapezoid_weights(points))
    return [Curve(grid, row) for row in parsed[1:]]


def save_curves_csv(path, curves: list[Curve]) -> None:
    """Write curves in the curve matrix CSV format (see load_curves_csv)."""
    if not curves:
        raise ValidationError("nothing to write")
    grid = curves[0].grid
    for c in curves[1:]:
        ensure_same_grid(curves[0], c)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([repr(float(x)) for x in grid.points])
        for c in curves:
            writer.writerow([repr(float(v)) for v in c.values])
