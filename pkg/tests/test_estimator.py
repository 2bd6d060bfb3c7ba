import json

import numpy as np
import pytest

from funreg.covariance import eigendecompose, empirical_covariance, cross_covariance
from funreg.errors import DegenerateFitError, GridMismatchError, ValidationError
from funreg.estimator import (
    fit,
    fit_from_dict,
    fit_to_dict,
    load_fit,
    normal_quantile,
    predict,
    prediction_interval,
    regularized_inverse,
    s_hat,
    save_fit,
    sigma_hat,
    t_hat,
)
from funreg.filters import FilterSpec
from funreg.hilbert import Curve, Grid, inner_product, make_trapezoid_grid, norm


def unit_weight_grid(p=2):
    return Grid(np.arange(float(p)), np.ones(p))


def toy_fit(center=False):
    g = unit_weight_grid()
    sample = [Curve(g, [2.0, 0.0]), Curve(g, [0.0, 1.0])]
    return sample, fit(sample, [2.0, 1.0], FilterSpec("truncation", 0.1), center=center)


def gaussian_sample(n, p, seed=0):
    g = make_trapezoid_grid(0.0, 1.0, p)
    rng = np.random.default_rng(seed)
    sample = [Curve(g, rng.standard_normal(p)) for _ in range(n)]
    return g, sample, rng


class TestRegularizedInverse:
    def test_truncation_reciprocals_on_diagonal_spectrum(self):
        _, sample = toy_fit()[0], None
        g = unit_weight_grid()
        sample = [Curve(g, [2.0, 0.0]), Curve(g, [0.0, 1.0])]
        dec = eigendecompose(empirical_covariance(sample, center=False))
        rinv = regularized_inverse(dec, FilterSpec("truncation", 0.1))
        assert np.allclose(rinv.filtered_values, [0.5, 2.0])
        for lam, f, e in zip(dec.eigenvalues, rinv.filtered_values, dec.eigenvectors):
            assert norm(rinv.apply(e) - f * e) < 1e-8

    def test_ridge_coefficient(self):
        g = make_trapezoid_grid(0.0, 1.0, 8)
        rng = np.random.default_rng(1)
        u = Curve(g, rng.standard_normal(8))
        u = u * (1.0 / norm(u))
        dec = eigendecompose(empirical_covariance([u], center=False))
        rinv = regularized_inverse(dec, FilterSpec("ridge", 0.1, alpha=0.5))
        assert rinv.filtered_values[0] == pytest.approx(1 / 1.5, rel=1e-10)

    def test_rank_zero_is_an_error(self):
        g, sample, _ = gaussian_sample(5, 6, seed=4)
        dec = eigendecompose(empirical_covariance(sample))
        with pytest.raises(DegenerateFitError):
            regularized_inverse(dec, FilterSpec("truncation", dec.eigenvalues[0] * 2))

    def test_rank_matches_effective_rank(self):
        g, sample, _ = gaussian_sample(12, 6, seed=5)
        dec = eigendecompose(empirical_covariance(sample))
        rinv = regularized_inverse(dec, FilterSpec("truncation", dec.eigenvalues[2]))
        assert rinv.d_n == 3


class TestFit:
    def test_hand_example(self):
        _, ft = toy_fit()
        assert np.allclose(ft.rho_hat.values, [1.0, 1.0], atol=1e-12)
        assert ft.d_n == 2
        assert ft.s_hat == pytest.approx(np.sqrt(2))

    def test_noiseless_recovery_on_retained_span(self):
        g, sample, rng = gaussian_sample(40, 10, seed=7)
        dec = eigendecompose(empirical_covariance(sample, center=False))
        rho = dec.eigenvectors[0] * 0.8 + dec.eigenvectors[1] * (-0.3)
        y = [inner_product(rho, x) for x in sample]
        ft = fit(sample, y, FilterSpec("truncation", dec.eigenvalues[2]), center=False)
        for j in range(ft.d_n):
            err = inner_product(ft.rho_hat - rho, dec.eigenvectors[j])
            assert abs(err) < 1e-8

    def test_zero_responses(self):
        g, sample, _ = gaussian_sample(10, 6, seed=9)
        ft = fit(sample, np.zeros(10), FilterSpec("truncation", 1e-6), center=False)
        assert np.allclose(ft.rho_hat.values, 0.0, atol=1e-12)
        assert ft.sigma_hat == pytest.approx(0.0, abs=1e-12)

    def test_needs_two_observations(self):
        g = unit_weight_grid()
        with pytest.raises(ValidationError):
            fit([Curve(g, [1.0, 0.0])], [1.0], FilterSpec("truncation", 0.1))

    def test_response_length_mismatch(self):
        g, sample, _ = gaussian_sample(6, 5, seed=2)
        with pytest.raises(ValidationError):
            fit(sample, [1.0] * 5, FilterSpec("truncation", 1e-6))

    def test_saturated_fit_has_undefined_sigma(self):
        _, ft = toy_fit()
        assert np.isnan(ft.sigma_hat)

    def test_rho_in_retained_span(self):
        g, sample, _ = gaussian_sample(15, 8, seed=3)
        y = np.linspace(-1, 1, 15)
        ft = fit(sample, y, FilterSpec("truncation", 1e-3), center=False)
        vm = ft.decomposition.vectors_matrix[: ft.d_n]
        coeff = vm @ (g.weights * ft.rho_hat.values)
        residual = ft.rho_hat.values - coeff @ vm
        assert np.sqrt(np.sum(residual**2 * g.weights)) < 1e-8


class TestPredict:
    def test_zero_curve(self):
        _, ft = toy_fit()
        assert predict(ft, Curve.zeros(ft.grid)) == 0.0

    def test_hand_value(self):
        sample, ft = toy_fit()
        assert predict(ft, sample[0]) == pytest.approx(2.0, abs=1e-12)

    def test_linearity_without_centering(self):
        sample, ft = toy_fit()
        x1, x2 = sample
        lhs = predict(ft, 2.0 * x1 + (-3.0) * x2)
        rhs = 2.0 * predict(ft, x1) - 3.0 * predict(ft, x2)
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_grid_mismatch(self):
        _, ft = toy_fit()
        other = Curve(make_trapezoid_grid(0, 1, 2), [1.0, 1.0])
        with pytest.raises(GridMismatchError):
            predict(ft, other)

    def test_centered_fit_reproduces_training_mean(self):
        g, sample, _ = gaussian_sample(20, 6, seed=11)
        y = np.linspace(0.0, 3.0, 20) + 5.0
        ft = fit(sample, y, FilterSpec("truncation", 1e-4), center=True)
        x_mean = Curve(g, np.mean([c.values for c in sample], axis=0))
        assert predict(ft, x_mean) == pytest.approx(y.mean(), rel=1e-10)


class TestNormalizers:
    def test_s_hat_truncation_is_sqrt_rank(self):
        g, sample, _ = gaussian_sample(30, 8, seed=6)
        dec = eigendecompose(empirical_covariance(sample))
        spec = FilterSpec("truncation", dec.eigenvalues[3])
        assert s_hat(dec, spec) == np.sqrt(4)

    def test_s_hat_ridge_example(self):
        dec = eigendecompose(
            empirical_covariance(
                [Curve(unit_weight_grid(), [np.sqrt(2), 0.0]),
                 Curve(unit_weight_grid(), [0.0, 1.0])],
                center=False,
            )
        )
        assert np.allclose(dec.eigenvalues, [1.0, 0.5])
        spec = FilterSpec("ridge", 0.1, alpha=0.5)
        expected = np.sqrt((1 / 1.5) ** 2 + 0.25)
        assert s_hat(dec, spec) == pytest.approx(expected, abs=1e-4)
        assert s_hat(dec, spec) == pytest.approx(0.8333, abs=1e-4)

    def test_s_hat_single_retained(self):
        g, sample, _ = gaussian_sample(25, 6, seed=8)
        dec = eigendecompose(empirical_covariance(sample))
        spec = FilterSpec("tikhonov", dec.eigenvalues[0] * 0.999, alpha=0.01)
        lam1 = dec.eigenvalues[0]
        assert s_hat(dec, spec) == pytest.approx(lam1 * lam1 / (lam1**2 + 0.01))

    def test_t_hat_on_leading_eigenvector(self):
        g = unit_weight_grid()
        u = Curve(g, [0.5, 0.0])  # eigenvalue 0.25 via outer product
        dec = eigendecompose(empirical_covariance([u], center=False))
        assert dec.eigenvalues[0] == pytest.approx(0.25)
        spec = FilterSpec("truncation", 0.01)
        assert t_hat(dec, spec, dec.eigenvectors[0]) == pytest.approx(2.0, rel=1e-10)

    def test_t_hat_orthogonal_xestimate_zero(self):
        g, sample, _ = gaussian_sample(20, 6, seed=12)
        dec = eigendecompose(empirical_covariance(sample))
        spec = FilterSpec("truncation", dec.eigenvalues[2])
        x = dec.eigenvectors[4]
        assert t_hat(dec, spec, x) < 1e-10

    def test_t_hat_two_mode_example(self):
        g = Grid(np.arange(2.0), np.ones(2))
        sample = [Curve(g, [np.sqrt(2), 0.0]), Curve(g, [0.0, np.sqrt(0.5)])]
        dec = eigendecompose(empirical_covariance(sample, center=False))
        assert np.allclose(dec.eigenvalues, [1.0, 0.25])
        x = dec.eigenvectors[0] + dec.eigenvectors[1]
        spec = FilterSpec("truncation", 0.01)
        assert t_hat(dec, spec, x) == pytest.approx(2.2360, abs=1e-4)


class TestSigmaHat:
    def test_noiseless(self):
        g, sample, _ = gaussian_sample(30, 8, seed=13)
        dec = eigendecompose(empirical_covariance(sample, center=False))
        rho = dec.eigenvectors[0] * 1.5
        y = [inner_product(rho, x) for x in sample]
        ft = fit(sample, y, FilterSpec("truncation", dec.eigenvalues[1]), center=False)
        assert ft.sigma_hat < 1e-6

    def test_explicit_error_when_saturated(self):
        sample, ft = toy_fit()
        with pytest.raises(DegenerateFitError):
            sigma_hat(sample, [2.0, 1.0], ft)

    def test_single_residual_dof(self):
        g = unit_weight_grid(3)
        sample = [
            Curve(g, [1.0, 0.0, 0.0]),
            Curve(g, [0.0, 1.0, 0.0]),
            Curve(g, [0.0, 0.0, 1.0]),
        ]
        y = [1.0, 1.0, 1.0]
        ft = fit(sample, y, FilterSpec("truncation", 1e-9), center=True)
        assert ft.d_n == ft.n - 1
        res = y - np.array([predict(ft, x) for x in sample])
        expected = np.sqrt(np.sum(res**2))
        assert sigma_hat(sample, y, ft) == pytest.approx(expected)


class TestPredictionInterval:
    def make_noisy_fit(self, n=60, seed=21):
        g, sample, rng = gaussian_sample(n, 8, seed=seed)
        rho = Curve(g, np.linspace(0.5, -0.5, 8))
        y = np.array([inner_product(rho, x) for x in sample]) + 0.3 * rng.standard_normal(n)
        return g, sample, fit(sample, y, FilterSpec("truncation", 1e-2), center=False)

    def test_half_width_formula(self):
        # q(0.975) * sigma * s / sqrt(n) with sigma=1, s=2, n=100
        q = normal_quantile(0.975)
        assert q * 1.0 * 2.0 / 10.0 == pytest.approx(0.39199, abs=1e-5)

    def test_interval_uses_the_formula(self):
        g, sample, ft = self.make_noisy_fit()
        x = sample[0]
        iv = prediction_interval(ft, x, 0.95, "s_hat")
        expected = normal_quantile(0.975) * ft.sigma_hat * ft.s_hat / np.sqrt(ft.n)
        assert iv.half_width == pytest.approx(expected, rel=1e-12)
        assert iv.center == pytest.approx(predict(ft, x))
        assert iv.lo <= iv.center <= iv.hi

    def test_width_vanishes_as_level_drops(self):
        g, sample, ft = self.make_noisy_fit()
        x = sample[0]
        widths = [
            prediction_interval(ft, x, lvl, "s_hat").half_width
            for lvl in (0.9, 0.5, 0.1, 1e-6)
        ]
        assert all(a > b for a, b in zip(widths, widths[1:]))
        assert widths[-1] < 1e-5

    def test_noiseless_interval_degenerates(self):
        g, sample, _ = gaussian_sample(20, 6, seed=23)
        dec = eigendecompose(empirical_covariance(sample, center=False))
        rho = dec.eigenvectors[0]
        y = [inner_product(rho, x) for x in sample]
        ft = fit(sample, y, FilterSpec("truncation", dec.eigenvalues[1]), center=False)
        iv = prediction_interval(ft, sample[0], 0.95, "s_hat")
        assert iv.half_width == pytest.approx(0.0, abs=1e-10)

    def test_invalid_level(self):
        _, _, ft = self.make_noisy_fit()
        for lvl in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(ValidationError):
                prediction_interval(ft, ft.x_mean, lvl)

    def test_degenerate_t_hat_is_an_error(self):
        g, sample, _ = gaussian_sample(20, 6, seed=25)
        dec = eigendecompose(empirical_covariance(sample, center=False))
        spec = FilterSpec("truncation", dec.eigenvalues[2])
        y = np.linspace(0, 1, 20)
        ft = fit(sample, y, spec, center=False)
        x = dec.eigenvectors[5]
        with pytest.raises(DegenerateFitError):
            prediction_interval(ft, x, 0.95, "t_hat")

    def test_interval_duality(self):
        g, sample, ft = self.make_noisy_fit(seed=27)
        rho_true = Curve(g, np.linspace(0.5, -0.5, 8))
        q = normal_quantile(0.975)
        for x in sample[:10]:
            iv = prediction_interval(ft, x, 0.95, "s_hat")
            target = inner_product(rho_true, x)
            stat = (
                np.sqrt(ft.n) * abs(iv.center - target) / (ft.sigma_hat * ft.s_hat)
            )
            assert (iv.lo <= target <= iv.hi) == (stat <= q)


class TestStructuralProperties:
    def test_truncation_equals_pcr_on_scores(self):
        g, sample, rng = gaussian_sample(50, 10, seed=31)
        y = np.array(
            [inner_product(Curve(g, np.cos(np.pi * g.points)), x) for x in sample]
        ) + 0.2 * rng.standard_normal(50)
        dec = eigendecompose(empirical_covariance(sample, center=False))
        d = 4
        ft = fit(sample, y, FilterSpec("truncation", dec.eigenvalues[d] * 1.0001),
                 center=False)
        assert ft.d_n == d
        scores = np.array(
            [[inner_product(x, dec.eigenvectors[j]) for j in range(d)] for x in sample]
        )
        coef, *_ = np.linalg.lstsq(scores, y, rcond=None)
        rho_pcr = coef @ dec.vectors_matrix[:d]
        assert np.abs(ft.rho_hat.values - rho_pcr).max() < 1e-8

    def test_ridge_shrinks_relative_to_truncation(self):
        g, sample, rng = gaussian_sample(40, 8, seed=33)
        y = rng.standard_normal(40)
        cn = 1e-3
        trunc = fit(sample, y, FilterSpec("truncation", cn), center=False)
        for alpha in (0.01, 0.1, 1.0):
            ridge = fit(sample, y, FilterSpec("ridge", cn, alpha=alpha), center=False)
            assert norm(ridge.rho_hat) <= norm(trunc.rho_hat) + 1e-12

    def test_scale_equivariance(self):
        g, sample, rng = gaussian_sample(30, 8, seed=35)
        y = rng.standard_normal(30)
        c = 3.7
        spec = FilterSpec("ridge", 1e-3, alpha=0.05)
        base = fit(sample, y, spec, center=False)
        scaled = fit(sample, c * y, spec, center=False)
        assert np.allclose(scaled.rho_hat.values, c * base.rho_hat.values, rtol=1e-10)
        assert scaled.sigma_hat == pytest.approx(c * base.sigma_hat, rel=1e-10)
        assert scaled.s_hat == base.s_hat
        x = sample[0]
        assert t_hat(scaled.decomposition, spec, x) == pytest.approx(
            t_hat(base.decomposition, spec, x), rel=1e-12
        )
        iv_base = prediction_interval(base, x, 0.9)
        iv_scaled = prediction_interval(scaled, x, 0.9)
        assert iv_scaled.half_width == pytest.approx(c * iv_base.half_width, rel=1e-10)

    def test_s_hat_monotone_in_retained_rank(self):
        g, sample, _ = gaussian_sample(40, 10, seed=37)
        dec = eigendecompose(empirical_covariance(sample))
        values = [
            s_hat(dec, FilterSpec("ridge", dec.eigenvalues[d] * 0.9999, alpha=0.01))
            for d in range(6)
        ]
        assert all(b >= a for a, b in zip(values, values[1:]))


class TestDenseOracles:
    """Small-instance equivalences against direct dense linear algebra."""

    def setup_case(self, seed=41, n=25, p=6):
        g = make_trapezoid_grid(0.0, 1.0, p)
        rng = np.random.default_rng(seed)
        sample = [Curve(g, rng.standard_normal(p)) for _ in range(n)]
        y = rng.standard_normal(n)
        K = empirical_covariance(sample, center=False).kernel
        delta = cross_covariance(sample, y, center=False).curve.values
        return g, sample, y, K, delta

    def test_ridge_matches_dense_weighted_solve(self):
        g, sample, y, K, delta = self.setup_case()
        alpha = 0.3
        ft = fit(sample, y, FilterSpec("ridge", 0.0, alpha=alpha), center=False)
        sw = np.sqrt(g.weights)
        Kw = sw[:, None] * K * sw[None, :]
        rho_w = np.linalg.solve(Kw + alpha * np.eye(len(g)), sw * delta)
        assert np.abs(ft.rho_hat.values - rho_w / sw).max() < 1e-8

    def test_tikhonov_matches_dense_weighted_solve(self):
        g, sample, y, K, delta = self.setup_case(seed=43)
        alpha = 0.2
        ft = fit(sample, y, FilterSpec("tikhonov", 0.0, alpha=alpha), center=False)
        sw = np.sqrt(g.weights)
        Kw = sw[:, None] * K * sw[None, :]
        rho_w = Kw @ np.linalg.solve(Kw @ Kw + alpha * np.eye(len(g)), sw * delta)
        assert np.abs(ft.rho_hat.values - rho_w / sw).max() < 1e-8


class TestSerialization:
    def test_round_trip_predictions(self, tmp_path):
        g, sample, rng = gaussian_sample(30, 7, seed=51)
        y = rng.standard_normal(30)
        ft = fit(sample, y, FilterSpec("ridge", 1e-3, alpha=0.05), center=True)
        path = tmp_path / "fit.json"
        save_fit(path, ft)
        back = load_fit(path)
        for x in sample[:8]:
            assert predict(back, x) == pytest.approx(predict(ft, x), abs=1e-12)
            a = prediction_interval(ft, x, 0.9, "t_hat")
            b = prediction_interval(back, x, 0.9, "t_hat")
            assert b.center == pytest.approx(a.center, abs=1e-12)
            assert b.half_width == pytest.approx(a.half_width, abs=1e-12)

    def test_dict_round_trip_is_lossless(self):
        g, sample, rng = gaussian_sample(12, 5, seed=53)
        ft = fit(sample, rng.standard_normal(12), FilterSpec("truncation", 1e-3),
                 center=False)
        payload = json.loads(json.dumps(fit_to_dict(ft)))
        back = fit_from_dict(payload)
        assert np.array_equal(back.rho_hat.values, ft.rho_hat.values)
        assert back.s_hat == ft.s_hat
        assert back.sigma_hat == ft.sigma_hat
        assert back.filter == ft.filter

    def test_malformed_payload(self):
        with pytest.raises(ValidationError):
            fit_from_dict({"n": 3})
