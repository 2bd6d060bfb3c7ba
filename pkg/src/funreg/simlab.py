"""Ground-truth spectral models, data generation, truth oracles, and the
Monte Carlo experiments that probe the asymptotic claims at desk scale.

Simulated predictors follow a truncated expansion X = sum_l sqrt(lam_l)
xi_l e_l with unit-variance scores, responses Y = <rho, X> + eps. All
randomness flows from per-replicate generators derived from (seed,
replicate index), so serial and threaded runs agree byte for byte.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.stats import kstest

from .errors import DegenerateFitError, GridMismatchError, ValidationError
from .estimator import fit, prediction_interval, t_hat
from .filters import FilterSpec, select_kn, xf_values, filter_values
from .hilbert import Curve, Grid, inner_product, make_trapezoid_grid, norm

XI_LAWS = ("gaussian", "uniform", "rademacher")

# Absolute slack (scaled by the interval center) used when testing whether
# a target falls inside an interval; makes the noiseless degenerate case
# well defined in floating point.
COVERAGE_SLACK = 1e-9


# ---------------------------------------------------------------------------
# decay and coefficient rules


@dataclass(frozen=True)
class EigenDecay:
    """Eigenvalue rule: power lam_j = j^-(1+a) or geometric lam_j = r^j."""

    kind: str
    param: float

    def __post_init__(self):
        if self.kind == "power":
            if self.param <= 0:
                raise ValidationError("power decay needs a > 0")
        elif self.kind == "geometric":
            if not 0 < self.param < 1:
                raise ValidationError("geometric decay needs 0 < r < 1")
        else:
            raise ValidationError(f"unknown decay kind {self.kind!r}")

    def values(self, count: int) -> np.ndarray:
        j = np.arange(1, count + 1, dtype=float)
        if self.kind == "power":
            return j ** -(1.0 + self.param)
        return self.param**j

    @staticmethod
    def power(a: float) -> "EigenDecay":
        return EigenDecay("power", a)

    @staticmethod
    def geometric(r: float) -> "EigenDecay":
        return EigenDecay("geometric", r)


@dataclass(frozen=True)
class CoeffRule:
    """Coefficient rule for <rho, e_j>: a power law or an explicit list."""

    kind: str
    exponent: float | None = None
    coeffs: tuple | None = None
    normalize: bool = False
    scale: float = 1.0

    def __post_init__(self):
        if self.kind == "power":
            if self.exponent is None:
                raise ValidationError("power coefficients need an exponent")
        elif self.kind == "finite":
            if self.coeffs is None:
                raise ValidationError("finite coefficients need explicit values")
            object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        else:
            raise ValidationError(f"unknown coefficient kind {self.kind!r}")

    def values(self, count: int) -> np.ndarray:
        if self.kind == "power":
            j = np.arange(1, count + 1, dtype=float)
            out = self.scale * j ** -float(self.exponent)
        else:
            out = np.zeros(count)
            m = min(count, len(self.coeffs))
            out[:m] = self.coeffs[:m]
            out *= self.scale
        if self.normalize:
            total = np.sqrt(np.sum(out**2))
            if total == 0:
                raise ValidationError("cannot normalize all-zero coefficients")
            out = out / total
        return out

    @staticmethod
    def power(exponent: float, normalize: bool = False, scale: float = 1.0) -> "CoeffRule":
        return CoeffRule("power", exponent=exponent, normalize=normalize, scale=scale)

    @staticmethod
    def finite(coeffs, normalize: bool = False) -> "CoeffRule":
        return CoeffRule("finite", coeffs=tuple(coeffs), normalize=normalize)


def power_squared_coeffs(beta: float, count: int) -> np.ndarray:
    """Squared coordinates x_j^2 = j^-(1+beta)."""
    j = np.arange(1, count + 1, dtype=float)
    return j ** -(1.0 + beta)


# ---------------------------------------------------------------------------
# the spectral model and truth oracle


@dataclass(frozen=True)
class SpectralModel:
    """Ground truth: eigenvalue decay, basis, coefficient rule, noise law."""

    grid: Grid
    decay: EigenDecay
    rho: CoeffRule
    noise_sd: float
    xi_law: str = "gaussian"
    L: int | None = None

    def __post_init__(self):
        if self.noise_sd < 0 or not np.isfinite(self.noise_sd):
            raise ValidationError("noise_sd must be nonnegative and finite")
        if self.xi_law not in XI_LAWS:
            raise ValidationError(f"xi law must be one of {XI_LAWS}")
        L = self.L if self.L is not None else min(100, len(self.grid) - 1)
        if L < 1:
            raise ValidationError("need at least one expansion term")
        if L > len(self.grid) - 1:
            raise ValidationError(
                f"L={L} exceeds the basis capacity of a {len(self.grid)}-point grid"
            )
        object.__setattr__(self, "L", int(L))

    @cached_property
    def lambdas(self) -> np.ndarray:
        lam = self.decay.values(self.L)
        if not np.all(lam > 0) or not np.all(np.diff(lam) < 0):
            raise ValidationError("eigenvalue rule must be strictly decreasing, positive")
        lam.flags.writeable = False
        return lam

    @cached_property
    def rho_coeffs(self) -> np.ndarray:
        out = self.rho.values(self.L)
        out.flags.writeable = False
        return out

    @cached_property
    def basis(self) -> np.ndarray:
        """Orthonormal basis values, rows e_1..e_L on the grid.

        Cosine family (constant, then sqrt(2) cos(j pi t) on the unit
        interval) re-orthonormalized discretely under the quadrature
        product so that <e_i, e_j> = delta_ij to machine precision.
        """
        p = len(self.grid)
        pts = self.grid.points
        t = (pts - pts[0]) / (pts[-1] - pts[0])
        raw = np.empty((self.L, p))
        raw[0] = 1.0
        for j in range(1, self.L):
            raw[j] = np.sqrt(2.0) * np.cos(j * np.pi * t)
        w = self.grid.weights
        basis = np.empty_like(raw)
        for j in range(self.L):
            v = raw[j].copy()
            if j:
                v -= (basis[:j] @ (w * v)) @ basis[:j]
            nrm = np.sqrt(np.sum(v * v * w))
            if nrm < 1e-10:
                raise ValidationError("basis degenerated; reduce L or refine the grid")
            basis[j] = v / nrm
        basis.flags.writeable = False
        return basis

    @cached_property
    def basis_curves(self) -> tuple[Curve, ...]:
        return tuple(Curve(self.grid, row) for row in self.basis)

    @cached_property
    def rho_curve(self) -> Curve:
        return Curve(self.grid, self.rho_coeffs @ self.basis)

    def curve_from_coeffs(self, coeffs) -> Curve:
        """Curve sum_l c_l e_l from leading basis coefficients."""
        c = np.asarray(coeffs, dtype=float)
        if c.size > self.L:
            raise ValidationError(f"at most L={self.L} coefficients supported")
        return Curve(self.grid, c @ self.basis[: c.size])


@dataclass(frozen=True)
class TruthOracle:
    """Read-only access to the generating truth of a spectral model."""

    model: SpectralModel

    @property
    def lambdas(self) -> np.ndarray:
        return self.model.lambdas

    @property
    def rho_coeffs(self) -> np.ndarray:
        return self.model.rho_coeffs

    @property
    def rho_curve(self) -> Curve:
        return self.model.rho_curve

    @property
    def noise_sd(self) -> float:
        return self.model.noise_sd

    def x_coefficients(self, x: Curve) -> np.ndarray:
        """True-basis coordinates <x, e_l> for l = 1..L."""
        if x.grid is not self.model.grid and x.grid != self.model.grid:
            raise GridMismatchError("curve does not live on the model grid")
        return self.model.basis @ (self.model.grid.weights * x.values)

    def expected_xy_coefficients(self) -> np.ndarray:
        """Coordinates of E(XY): lambda_l rho_l (the moment identity)."""
        return self.model.lambdas * self.model.rho_coeffs


# ---------------------------------------------------------------------------
# sampling


def replicate_rng(seed: int, *indices: int) -> np.random.Generator:
    """Deterministic per-replicate stream derived from (seed, indices)."""
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), *(int(i) for i in indices)])
    )


def _draw_xi(rng: np.random.Generator, law: str, shape) -> np.ndarray:
    if law == "gaussian":
        return rng.standard_normal(shape)
    if law == "uniform":
        return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), shape)
    return rng.integers(0, 2, shape).astype(float) * 2.0 - 1.0


def kl_sample(model: SpectralModel, rng: np.random.Generator) -> Curve:
    """One draw X = sum_{l<=L} sqrt(lam_l) xi_l e_l."""
    xi = _draw_xi(rng, model.xi_law, model.L)
    return Curve(model.grid, (np.sqrt(model.lambdas) * xi) @ model.basis)


def generate_dataset(
    model: SpectralModel, n: int, rng: np.random.Generator
) -> tuple[list[Curve], np.ndarray]:
    """n i.i.d. pairs (X_i, Y_i) with Y = <rho, X> + Normal(0, noise_sd^2)."""
    if n < 1:
        raise ValidationError("need n >= 1")
    xi = _draw_xi(rng, model.xi_law, (n, model.L))
    values = (xi * np.sqrt(model.lambdas)) @ model.basis
    weighted_rho = model.grid.weights * model.rho_curve.values
    y = values @ weighted_rho
    if model.noise_sd > 0:
        y = y + model.noise_sd * rng.standard_normal(n)
    return [Curve(model.grid, row) for row in values], y


# ---------------------------------------------------------------------------
# truth-side quantities


@dataclass(frozen=True)
class TrueNormalizers:
    k_n: int
    s_n: float
    t_n_x: float | None


def true_normalizers(
    model: SpectralModel, cn: float, filt: FilterSpec, x: Curve | None = None
) -> TrueNormalizers:
    """Nonrandom rank k_n and the population normalizers at that rank."""
    filt = _with_threshold(filt, cn)
    k_n = select_kn(model.lambdas, cn)
    lam = model.lambdas[:k_n]
    s_n = float(np.sqrt(np.sum(xf_values(filt, lam) ** 2)))
    t_n_x = None
    if x is not None:
        coeff = TruthOracle(model).x_coefficients(x)[:k_n]
        f = filter_values(filt, lam)
        t_n_x = float(np.sqrt(np.sum(lam * f**2 * coeff**2)))
    return TrueNormalizers(k_n=k_n, s_n=s_n, t_n_x=t_n_x)


def truncation_bias(model: SpectralModel, k: int, x: Curve | None = None) -> float:
    """Tail size left by a rank-k projection of rho.

    Expected-predictor form sqrt(sum_{l>k} lam_l rho_l^2), or the signed
    magnitude |sum_{l>k} rho_l <x, e_l>| at a fixed x.
    """
    if k < 0:
        raise ValidationError("rank must be nonnegative")
    if k >= model.L:
        return 0.0
    if x is None:
        tail = model.lambdas[k:] * model.rho_coeffs[k:] ** 2
        return float(np.sqrt(np.sum(tail)))
    coeff = TruthOracle(model).x_coefficients(x)
    return float(abs(np.sum(model.rho_coeffs[k:] * coeff[k:])))


def t_normalizer_profile(
    decay: EigenDecay, k_max: int, beta: float | None = None, x_squared=None
) -> np.ndarray:
    """t_{k,x} = sqrt(sum_{j<=k} x_j^2 / lam_j) for k = 1..k_max.

    Uses the plain spectral-truncation weights; bounded iff x lies in
    the range of the square-root covariance.
    """
    lam = decay.values(k_max)
    if beta is not None:
        x2 = power_squared_coeffs(beta, k_max)
    else:
        x2 = np.asarray(x_squared, dtype=float)
        if x2.size < k_max:
            raise ValidationError("x_squared shorter than k_max")
        x2 = x2[:k_max]
    return np.sqrt(np.cumsum(x2 / lam))


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of log(ys) against log(xs)."""
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


# ---------------------------------------------------------------------------
# Monte Carlo experiments


@dataclass(frozen=True)
class CoverageReport:
    """Aggregated interval-coverage run; rows keep per-replicate detail."""

    nominal_level: float
    n: int
    replicates: int
    empirical_coverage: float
    mean_half_width: float | None
    ks_statistic: float | None
    bias_summary: float | None
    seed: int
    n_failed: int
    x_rkhs_sup: float | None
    rows: tuple[dict, ...]

    def to_dict(self) -> dict:
        out = {
            "nominal_level": self.nominal_level,
            "n": self.n,
            "replicates": self.replicates,
            "empirical_coverage": self.empirical_coverage,
            "mean_half_width": self.mean_half_width,
            "ks_statistic": self.ks_statistic,
            "bias_summary": self.bias_summary,
            "seed": self.seed,
            "n_failed": self.n_failed,
        }
        if self.x_rkhs_sup is not None:
            out["x_rkhs_sup"] = self.x_rkhs_sup
        return out


def _run_indexed(worker, count: int, threads: int) -> list:
    if threads <= 1:
        return [worker(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(count)))


def _interval_hit(lo: float, hi: float, target: float, center: float) -> bool:
    slack = COVERAGE_SLACK * max(1.0, abs(center))
    return bool(lo - slack <= target <= hi + slack)


def _standardized(n: int, err: float, denom: float) -> float:
    if denom > 0:
        return float(np.sqrt(n) * err / denom)
    return 0.0 if err == 0 else float("inf")


def _aggregate(rows, level, n, replicates, seed, x_rkhs_sup=None) -> CoverageReport:
    ok = [r for r in rows if not r["failed"]]
    n_failed = len(rows) - len(ok)
    if ok:
        coverage = float(np.mean([r["hit"] for r in ok]))
        half = float(np.mean([r["half_width"] for r in ok]))
        bias = float(np.mean([r["bias"] for r in ok]))
        errs = np.array([r["std_error"] for r in ok])
        ks = float(kstest(errs, "norm").statistic) if np.all(np.isfinite(errs)) else None
    else:
        coverage, half, bias, ks = 0.0, None, None, None
    return CoverageReport(
        nominal_level=level,
        n=n,
        replicates=replicates,
        empirical_coverage=coverage,
        mean_half_width=half,
        ks_statistic=ks,
        bias_summary=bias,
        seed=seed,
        n_failed=n_failed,
        x_rkhs_sup=x_rkhs_sup,
        rows=tuple(rows),
    )


def coverage_experiment(
    model: SpectralModel,
    n: int,
    cn: float,
    filt: FilterSpec,
    level: float,
    replicates: int,
    seed: int,
    threads: int = 1,
) -> CoverageReport:
    """Interval coverage for the random new-predictor target <rho, X_new>.

    Each replicate draws a fresh dataset and one extra predictor, fits
    with the supplied filter (threshold cn), and records the hit, the
    standardized error sqrt(n)(Yhat - <rho, X_new>)/(sigma_hat s_hat),
    and the deterministic truncation-bias component at the nonrandom
    rank k_n.
    """
    if replicates < 1:
        raise ValidationError("need at least one replicate")
    filt = _with_threshold(filt, cn)
    oracle = TruthOracle(model)
    k_n = select_kn(model.lambdas, cn)
    rho_tail = model.rho_coeffs[k_n:]

    def worker(rep: int) -> dict:
        rng = replicate_rng(seed, rep)
        sample, y = generate_dataset(model, n, rng)
        x_new = kl_sample(model, rng)
        target = inner_product(model.rho_curve, x_new)
        row = {"replicate": rep, "failed": False, "hit": False, "center": None,
               "half_width": None, "std_error": None, "bias": None, "d_n": None,
               "error": ""}
        try:
            ft = fit(sample, y, filt, center=False)
            iv = prediction_interval(ft, x_new, level, "s_hat")
        except (DegenerateFitError, ValidationError) as exc:
            row["failed"] = True
            row["error"] = str(exc)
            return row
        row["center"] = iv.center
        row["half_width"] = iv.half_width
        row["hit"] = _interval_hit(iv.lo, iv.hi, target, iv.center)
        row["std_error"] = _standardized(n, iv.center - target, ft.sigma_hat * ft.s_hat)
        row["bias"] = -float(np.sum(rho_tail * oracle.x_coefficients(x_new)[k_n:]))
        row["d_n"] = ft.d_n
        return row

    rows = _run_indexed(worker, replicates, threads)
    return _aggregate(rows, level, n, replicates, seed)


def fixed_x_experiment(
    model: SpectralModel,
    x: Curve,
    n: int,
    cn: float,
    filt: FilterSpec,
    level: float,
    replicates: int,
    seed: int,
    threads: int = 1,
) -> CoverageReport:
    """Interval coverage for the fixed target <rho, x> with the t_hat pivot.

    Replicates with a zero normalizer (x orthogonal to the retained
    eigenspace) count as failures. The random projection bias
    <(Pi_hat - Pi) rho, x> at rank k_n is estimated per replicate
    through the truth oracle's eigenbasis.
    """
    if replicates < 1:
        raise ValidationError("need at least one replicate")
    filt = _with_threshold(filt, cn)
    oracle = TruthOracle(model)
    x_coeff = oracle.x_coefficients(x)
    rkhs_sup = float(np.max(x_coeff**2 / model.lambdas))
    target = inner_product(model.rho_curve, x)
    k_n = select_kn(model.lambdas, cn)
    true_proj = float(np.sum(model.rho_coeffs[:k_n] * x_coeff[:k_n]))
    w = model.grid.weights

    def worker(rep: int) -> dict:
        rng = replicate_rng(seed, rep)
        sample, y = generate_dataset(model, n, rng)
        row = {"replicate": rep, "failed": False, "hit": False, "center": None,
               "half_width": None, "std_error": None, "bias": None, "d_n": None,
               "t_hat": None, "error": ""}
        try:
            ft = fit(sample, y, filt, center=False)
            iv = prediction_interval(ft, x, level, "t_hat")
        except (DegenerateFitError, ValidationError) as exc:
            row["failed"] = True
            row["error"] = str(exc)
            return row
        that = t_hat(ft.decomposition, filt, x)
        row["center"] = iv.center
        row["half_width"] = iv.half_width
        row["t_hat"] = that
        row["hit"] = _interval_hit(iv.lo, iv.hi, target, iv.center)
        row["std_error"] = _standardized(n, iv.center - target, ft.sigma_hat * that)
        # empirical-vs-true projection of rho at the nonrandom rank
        kk = min(k_n, int(np.count_nonzero(ft.decomposition.eigenvalues > 0)))
        ehat = ft.decomposition.vectors_matrix[:kk]
        rho_on_ehat = ehat @ (w * model.rho_curve.values)
        x_on_ehat = ehat @ (w * x.values)
        row["bias"] = float(np.sum(rho_on_ehat * x_on_ehat) - true_proj)
        row["d_n"] = ft.d_n
        return row

    rows = _run_indexed(worker, replicates, threads)
    return _aggregate(rows, level, n, replicates, seed, x_rkhs_sup=rkhs_sup)


def _with_threshold(filt: FilterSpec, cn: float) -> FilterSpec:
    if filt.cn == cn:
        return filt
    return FilterSpec(kind=filt.kind, cn=cn, alpha=filt.alpha, p=filt.p, variant=filt.variant)


# ---------------------------------------------------------------------------
# norm-topology divergence demo


@dataclass(frozen=True)
class NormDivergenceReport:
    """Monte Carlo trend of the norm error under a growing design."""

    rows: tuple[dict, ...]
    diverging: bool
    replicates: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "rows": list(self.rows),
            "diverging": self.diverging,
            "replicates": self.replicates,
            "seed": self.seed,
        }


def rank_threshold(lambdas, k: int) -> float:
    """Threshold sitting between the k-th and (k+1)-th true eigenvalues."""
    lam = np.asarray(lambdas, dtype=float)
    if not 1 <= k < lam.size:
        raise ValidationError(f"rank {k} needs 1 <= k < {lam.size}")
    return float(np.sqrt(lam[k - 1] * lam[k]))


def rank_power_cn_rule(model: SpectralModel, exponent: float):
    """Threshold rule targeting an effective rank of about n**exponent."""

    def rule(n: int) -> float:
        k = max(1, int(round(n**exponent)))
        k = min(k, model.L - 1)
        return rank_threshold(model.lambdas, k)

    return rule


def norm_divergence_demo(
    model: SpectralModel,
    n_grid,
    cn_rule,
    filt: FilterSpec,
    replicates: int,
    seed: int,
    threads: int = 1,
) -> NormDivergenceReport:
    """Track ||rho_hat - rho|| and sqrt(n)||rho_hat - rho||/s_hat over n.

    The candidate-normalized quantity keeps growing as the retained rank
    increases; the report flags divergence when the ratio between
    consecutive grid values exceeds 1 in (at least) the final two steps.
    """
    ns = [int(v) for v in n_grid]
    if len(ns) < 2 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValidationError("n_grid must be strictly increasing with >= 2 entries")
    if replicates < 1:
        raise ValidationError("need at least one replicate")

    rho = model.rho_curve
    rows = []
    for n in ns:
        cn = float(cn_rule(n)) if callable(cn_rule) else float(cn_rule)
        filt_n = _with_threshold(filt, cn)

        def worker(rep: int, n=n, filt_n=filt_n) -> tuple:
            rng = replicate_rng(seed, n, rep)
            sample, y = generate_dataset(model, n, rng)
            try:
                ft = fit(sample, y, filt_n, center=False)
            except (DegenerateFitError, ValidationError):
                return (np.nan, np.nan, np.nan)
            err = norm(ft.rho_hat - rho)
            return (err, np.sqrt(n) * err / ft.s_hat, ft.d_n)

        results = np.array(_run_indexed(worker, replicates, threads))
        good = results[~np.isnan(results[:, 0])]
        rows.append(
            {
                "n": n,
                "cn": cn,
                "mean_norm_error": float(np.mean(good[:, 0])) if good.size else None,
                "mean_normalized": float(np.mean(good[:, 1])) if good.size else None,
                "mean_d_n": float(np.mean(good[:, 2])) if good.size else None,
                "n_failed": int(len(results) - len(good)),
            }
        )

    normalized = [r["mean_normalized"] for r in rows]
    ratios = [
        b / a if (a and b and a > 0) else float("nan")
        for a, b in zip(normalized, normalized[1:])
    ]
    tail = ratios[-2:] if len(ratios) >= 2 else ratios
    diverging = bool(tail) and all(np.isfinite(r) and r > 1 for r in tail)
    if normalized[-1] is None or normalized[-1] < 1e-8:
        # roundoff-sized errors (exact recovery) are not divergence
        diverging = False
    return NormDivergenceReport(
        rows=tuple(rows), diverging=diverging, replicates=replicates, seed=seed
    )


# ---------------------------------------------------------------------------
# deterministic diagnostics


@dataclass(frozen=True)
class VarianceBoundReport:
    """Growth diagnostic for the fixed-x projection-bias variance."""

    k_grid: tuple[int, ...]
    values: tuple[float, ...]
    reference: tuple[float, ...]
    inner_sums: np.ndarray

    def to_dict(self) -> dict:
        return {
            "k_grid": list(self.k_grid),
            "values": list(self.values),
            "reference": list(self.reference),
        }


def variance_lower_bound(
    model: SpectralModel, k_grid, beta: float | None = None, x_squared=None
) -> VarianceBoundReport:
    """Evaluate sum_{j<=k} lam_j rho_j^2 sum_{l<j} lam_l x_l^2/(lam_j-lam_l)^2.

    Also returns the comparison series sum_{j<=k} j^2 x_j^2 rho_j^2
    (the divergent reference when x follows a power law) and the raw
    inner sums for growth-rate inspection.
    """
    ks = [int(k) for k in k_grid]
    if not ks or any(k < 1 for k in ks):
        raise ValidationError("k_grid must contain positive ranks")
    max_k = max(ks)
    lam = model.decay.values(max_k)
    if np.unique(lam).size != lam.size:
        raise ValidationError("repeated eigenvalues make the inner sum singular")
    rho = model.rho.values(max_k)
    if beta is not None:
        x2 = power_squared_coeffs(beta, max_k)
    else:
        x2 = np.asarray(x_squared, dtype=float)
        if x2.size < max_k:
            raise ValidationError("x_squared shorter than max(k_grid)")
        x2 = x2[:max_k]

    inner = np.zeros(max_k)
    for j in range(1, max_k):
        diff = lam[j] - lam[:j]
        inner[j] = float(np.sum(lam[:j] * x2[:j] / diff**2))
    totals = np.cumsum(lam * rho**2 * inner)
    j_idx = np.arange(1, max_k + 1, dtype=float)
    reference = np.cumsum(j_idx**2 * x2 * rho**2)

    return VarianceBoundReport(
        k_grid=tuple(ks),
        values=tuple(float(totals[k - 1]) for k in ks),
        reference=tuple(float(reference[k - 1]) for k in ks),
        inner_sums=inner,
    )


@dataclass(frozen=True)
class ConditionUReport:
    """Partial sums of sum_j rho_j^2 with a last-decade convergence flag."""

    partial_sums: np.ndarray
    convergent: bool
    last_decade_fraction: float
    J: int

    def to_dict(self) -> dict:
        return {
            "partial_sums": self.partial_sums.tolist(),
            "convergent": self.convergent,
            "last_decade_fraction": self.last_decade_fraction,
            "J": self.J,
        }


def condition_u_diagnostic(model: SpectralModel, J: int) -> ConditionUReport:
    """Identifiability diagnostic: partial sums of the squared coefficients.

    Flags convergence when the final decade of terms adds at most 1% of
    the total; a heuristic, since convergence is not decidable from
    finitely many terms.
    """
    if not 1 <= J <= model.L:
        raise ValidationError(f"J must satisfy 1 <= J <= L={model.L}")
    rho = model.rho_coeffs[:J]
    sums = np.cumsum(rho**2)
    lo = max(1, J // 10)
    total = sums[-1]
    fraction = float((total - sums[lo - 1]) / total) if total > 0 else 0.0
    return ConditionUReport(
        partial_sums=sums,
        convergent=fraction <= 0.01,
        last_decade_fraction=fraction,
        J=J,
    )


@dataclass(frozen=True)
class EigenInequalityReport:
    """Outcome of the convexity inequality sweep on an eigenvalue sequence."""

    pairwise_ok: bool
    tail_ok: bool
    first_pairwise_violation: tuple[int, int] | None
    first_tail_violation: int | None
    start_index: int
    length: int

    @property
    def ok(self) -> bool:
        return self.pairwise_ok and self.tail_ok

    def to_dict(self) -> dict:
        return {
            "pairwise_ok": self.pairwise_ok,
            "tail_ok": self.tail_ok,
            "first_pairwise_violation": self.first_pairwise_violation,
            "first_tail_violation": self.first_tail_violation,
            "start_index": self.start_index,
            "length": self.length,
        }


def eigen_inequality_check(lambdas, start_index: int = 1) -> EigenInequalityReport:
    """Verify j lam_j >= k lam_k (j < k) and sum_{j>=k} lam_j <= (k+1) lam_k.

    Both sweeps run over 1-based indices >= start_index (the source
    inequalities are asymptotic, so callers may exclude a finite prefix);
    tail sums are truncated at the end of the sequence. Comparisons allow
    1e-9 relative slack so exact-equality cases do not flag.
    """
    lam = np.asarray(lambdas, dtype=float)
    if lam.ndim != 1 or lam.size < 2:
        raise ValidationError("need a 1-d sequence with >= 2 eigenvalues")
    if not np.all(lam > 0) or not np.all(np.diff(lam) < 0):
        raise ValidationError("eigenvalues must be strictly decreasing, positive")
    if not 1 <= start_index <= lam.size:
        raise ValidationError("start_index out of range")
    s = start_index - 1
    idx = np.arange(1, lam.size + 1, dtype=float)
    jl = idx * lam
    slack = 1.0 + 1e-9

    first_pair = None
    running_min = jl[s]
    running_arg = s
    for k in range(s + 1, lam.size):
        if jl[k] > running_min * slack:
            first_pair = (running_arg + 1, k + 1)
            break
        if jl[k] < running_min:
            running_min = jl[k]
            running_arg = k

    tails = np.cumsum(lam[::-1])[::-1]
    bad = np.flatnonzero(tails[s:] > (idx[s:] + 1) * lam[s:] * slack)
    first_tail = int(bad[0]) + start_index if bad.size else None

    return EigenInequalityReport(
        pairwise_ok=first_pair is None,
        tail_ok=first_tail is None,
        first_pairwise_violation=first_pair,
        first_tail_violation=first_tail,
        start_index=start_index,
        length=int(lam.size),
    )


# ---------------------------------------------------------------------------
# config plumbing


def decay_from_config(cfg: dict) -> EigenDecay:
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ValidationError("decay config must be an object with a 'kind'")
    kind = cfg["kind"]
    if kind == "power":
        _reject_unknown(cfg, {"kind", "a"}, "decay")
        if "a" not in cfg:
            raise ValidationError("power decay config needs 'a'")
        return EigenDecay.power(float(cfg["a"]))
    if kind == "geometric":
        _reject_unknown(cfg, {"kind", "r"}, "decay")
        if "r" not in cfg:
            raise ValidationError("geometric decay config needs 'r'")
        return EigenDecay.geometric(float(cfg["r"]))
    raise ValidationError(f"unknown decay kind {kind!r}")


def rho_from_config(cfg: dict) -> CoeffRule:
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ValidationError("rho config must be an object with a 'kind'")
    kind = cfg["kind"]
    if kind == "power":
        _reject_unknown(cfg, {"kind", "exponent", "normalize", "scale"}, "rho")
        if "exponent" not in cfg:
            raise ValidationError("power rho config needs 'exponent'")
        return CoeffRule.power(
            float(cfg["exponent"]),
            normalize=bool(cfg.get("normalize", False)),
            scale=float(cfg.get("scale", 1.0)),
        )
    if kind == "finite":
        _reject_unknown(cfg, {"kind", "coeffs", "normalize"}, "rho")
        if "coeffs" not in cfg:
            raise ValidationError("finite rho config needs 'coeffs'")
        return CoeffRule.finite(cfg["coeffs"], normalize=bool(cfg.get("normalize", False)))
    raise ValidationError(f"unknown rho kind {kind!r}")


def _reject_unknown(cfg: dict, allowed: set, where: str) -> None:
    unknown = set(cfg) - allowed
    if unknown:
        raise ValidationError(f"unknown {where} config keys: {sorted(unknown)}")


def model_from_config(cfg: dict) -> SpectralModel:
    """Build a SpectralModel from the shared config fields."""
    grid_points = int(cfg.get("grid_points", 101))
    grid = make_trapezoid_grid(0.0, 1.0, grid_points)
    return SpectralModel(
        grid=grid,
        decay=decay_from_config(cfg["decay"]),
        rho=rho_from_config(cfg["rho"]),
        noise_sd=float(cfg.get("noise_sd", 0.0)),
        xi_law=cfg.get("xi", "gaussian"),
        L=None if cfg.get("L") is None else int(cfg["L"]),
    )
