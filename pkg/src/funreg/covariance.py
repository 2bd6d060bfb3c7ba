"""Empirical covariance / cross-covariance operators and their eigensystem.

The operator acts on a curve h as (Ah)(t_i) = sum_j w_j K(t_i, t_j) h(t_j),
i.e. K W in raw coordinates. Its eigenproblem is solved through the
symmetric similarity transform S = W^{1/2} K W^{1/2}.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridMismatchError, ValidationError
from .hilbert import Curve, Grid, ensure_same_grid

# Relative cutoff below which empirical eigenvalues are treated as exact zeros.
EIGENVALUE_CLAMP = 1e-12


@dataclass(frozen=True)
class CovarianceOperator:
    """Kernel matrix of the empirical second-moment operator."""

    grid: Grid
    kernel: np.ndarray
    n: int

    def __post_init__(self):
        kernel = np.array(self.kernel, dtype=float)
        p = len(self.grid)
        if kernel.shape != (p, p):
            raise ValidationError(f"kernel must be {p}x{p}, got {kernel.shape}")
        scale = max(1.0, float(np.abs(kernel).max()))
        if np.abs(kernel - kernel.T).max() > 1e-12 * scale:
            raise ValidationError("kernel is not symmetric within tolerance")
        kernel.flags.writeable = False
        object.__setattr__(self, "kernel", kernel)

    def apply(self, h: Curve) -> Curve:
        if h.grid is not self.grid and h.grid != self.grid:
            raise GridMismatchError("curve does not live on the operator grid")
        return Curve(self.grid, self.kernel @ (self.grid.weights * h.values))


@dataclass(frozen=True)
class CrossCovariance:
    """The curve (1/n) sum_i Y_i X_i (optionally mean-centered)."""

    curve: Curve


def _stack(sample: list[Curve]) -> np.ndarray:
    if not sample:
        raise ValidationError("empty sample")
    grid = sample[0].grid
    for c in sample[1:]:
        ensure_same_grid(sample[0], c)
    return np.stack([c.values for c in sample]), grid


def empirical_covariance(sample: list[Curve], center: bool = True) -> CovarianceOperator:
    """Kernel K[i, j] = (1/n) sum_k X_k(t_i) X_k(t_j).

    With center=True the sample mean curve is subtracted first; disable
    for synthetic data that is centered by construction.
    """
    values, grid = _stack(sample)
    if center:
        values = values - values.mean(axis=0)
    kernel = values.T @ values / len(sample)
    kernel = (kernel + kernel.T) / 2
    return CovarianceOperator(grid, kernel, n=len(sample))


def cross_covariance(
    sample: list[Curve], responses, center: bool = True
) -> CrossCovariance:
    """The curve (1/n) sum_i Y_i X_i, centered consistently with the kernel."""
    values, grid = _stack(sample)
    y = np.asarray(responses, dtype=float)
    if y.ndim != 1 or y.size != values.shape[0]:
        raise ValidationError(
            f"got {y.size} responses for {values.shape[0]} curves"
        )
    if not np.all(np.isfinite(y)):
        raise ValidationError("responses must be finite")
    if center:
        values = values - values.mean(axis=0)
        y = y - y.mean()
    return CrossCovariance(Curve(grid, values.T @ y / y.size))


@dataclass(frozen=True)
class SpectralDecomposition:
    """Sorted eigenpairs of the weighted covariance operator.

    Eigenvalues are descending with the finite-rank tail clamped to exact
    zeros; eigenvectors are orthonormal under the quadrature product with
    a deterministic sign convention. ``gaps`` holds the min-of-neighbors
    differences (the trailing entry uses the implicit next eigenvalue 0).
    """

    grid: Grid
    eigenvalues: np.ndarray
    eigenvectors: tuple[Curve, ...]
    gaps: np.ndarray
    n: int

    def __post_init__(self):
        for name in ("eigenvalues", "gaps"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.eigenvalues.size != len(self.eigenvectors):
            raise ValidationError("one eigenvector per eigenvalue required")

    @cached_property
    def vectors_matrix(self) -> np.ndarray:
        """Eigenvector values stacked as rows, shape (m, p)."""
        return np.stack([c.values for c in self.eigenvectors])

    def coefficients(self, h: Curve) -> np.ndarray:
        """Coordinates <h, e_j> of a curve in the eigenbasis."""
        ensure_same_grid(self.eigenvectors[0], h)
        return self.vectors_matrix @ (self.grid.weights * h.values)

    def apply(self, h: Curve) -> Curve:
        """Operator action sum_j lambda_j <h, e_j> e_j."""
        coeff = self.coefficients(h)
        return Curve(self.grid, (self.eigenvalues * coeff) @ self.vectors_matrix)


def _spectral_gaps(lam: np.ndarray) -> np.ndarray:
    m = lam.size
    if m == 1:
        return np.array([lam[0]])
    ext = np.append(lam, 0.0)
    right = ext[:-1] - ext[1:]
    gaps = right.copy()
    gaps[1:] = np.minimum(right[1:], right[:-1])
    return gaps


def eigendecompose(op: CovarianceOperator) -> SpectralDecomposition:
    """Eigensystem of h -> sum_j w_j K(., t_j) h(t_j) under the weighted product."""
    w = op.grid.weights
    sqrt_w = np.sqrt(w)
    sym = sqrt_w[:, None] * op.kernel * sqrt_w[None, :]
    sym = (sym + sym.T) / 2
    try:
        lam, vec = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise ValidationError(f"eigensolver failed: {exc}") from None
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    vec = vec[:, order]

    lam = np.where(lam < EIGENVALUE_CLAMP * max(lam[0], 0.0), 0.0, lam)

    vectors = []
    for j in range(lam.size):
        u = vec[:, j] / sqrt_w
        # renormalize under the quadrature product and fix the sign
        u = u / np.sqrt(np.sum(u * u * w))
        k = int(np.argmax(np.abs(u)))
        if u[k] < 0:
            u = -u
        vectors.append(Curve(op.grid, u))

    return SpectralDecomposition(
        grid=op.grid,
        eigenvalues=lam,
        eigenvectors=tuple(vectors),
        gaps=_spectral_gaps(lam),
        n=op.n,
    )
