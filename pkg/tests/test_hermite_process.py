"""
Hermite process paths, the fBm oracle, Λ^H norms and Wiener integrals.
"""

import math

import numpy as np
import pytest
from scipy import stats

from errors import ComplexityError, CoverageError, ParameterRangeError, TruncationError
from generators.hermite_process import (
    HermiteProcessConfig,
    IntegrandFn,
    abs_lambda_norm,
    approximation_error,
    build_noise_grid,
    discrete_second_moment,
    embedding_defect,
    fbm_covariance,
    fbm_ensemble,
    fbm_oracle,
    lambda_norm,
    linear_combination,
    normalizing_K,
    omitted_mass_ratio,
    required_t_left,
    simulate_Z,
    simulate_Z_ensemble,
    step_approximation,
    wiener_integral,
)


class TestTruncationOfThePast:
    @pytest.mark.parametrize("m,h0", [(1, 0.75), (2, 0.9)])
    def test_omitted_mass_decreases(self, m, h0):
        ratios = [omitted_mass_ratio(m, h0, 1.0, t) for t in (10.0, 100.0, 1000.0)]
        assert ratios[0] > ratios[1] > ratios[2] > 0.0, f"{ratios}"

    @pytest.mark.parametrize("m,h0", [(1, 0.75), (2, 0.9)])
    def test_required_t_left_meets_tolerance(self, m, h0):
        t_left = required_t_left(m, h0, 1.0, 1e-3)
        assert omitted_mass_ratio(m, h0, 1.0, t_left) <= 1e-3 * (1 + 1e-6)

    def test_user_t_left_too_small(self):
        config = HermiteProcessConfig(m=1, h0=0.75, t_left=1.0)
        with pytest.raises(TruncationError) as info:
            build_noise_grid(config)
        assert info.value.required > 1.0

    def test_noise_grid_covers_past(self):
        config = HermiteProcessConfig(m=2, h0=0.9)
        grid = build_noise_grid(config)
        assert grid.edges[0] == pytest.approx(-grid.t_left)
        assert grid.edges[-1] == pytest.approx(config.t_max)
        assert np.all(grid.widths > 0)

    def test_normalizing_constant_positive(self):
        assert normalizing_K(1, 0.75) > 0
        assert normalizing_K(2, 0.9) > 0


class TestHermitePaths:
    def test_path_shape_and_origin(self):
        path = simulate_Z(HermiteProcessConfig(m=1, h0=0.75, n_grid=50, seed=4))
        assert path.values.shape == (51,)
        assert path.values[0] == 0.0
        assert set(path.columns()) == {"t", "Z"}

    def test_reproducible(self):
        config = HermiteProcessConfig(m=2, h0=0.9, n_grid=40, seed=11)
        np.testing.assert_array_equal(simulate_Z(config).values, simulate_Z(config).values)

    def test_outside_range_rejected(self):
        path = simulate_Z(HermiteProcessConfig(m=1, h0=0.75, n_grid=20))
        with pytest.raises(CoverageError):
            path.at(1.5)

    def test_order_above_three_rejected(self):
        with pytest.raises(ComplexityError):
            simulate_Z_ensemble(HermiteProcessConfig(m=4, h0=0.95, n_grid=10), [0])

    def test_kernel_matrix_guard(self):
        config = HermiteProcessConfig(m=2, h0=0.9, n_grid=5000, substeps=8, noise_step=1e-4)
        with pytest.raises(ComplexityError):
            simulate_Z_ensemble(config, [0])

    @pytest.mark.parametrize("m,h0", [(1, 0.75), (2, 0.9)])
    def test_discrete_second_moment_near_one(self, m, h0):
        value = discrete_second_moment(HermiteProcessConfig(m=m, h0=h0), 1.0)
        assert abs(value - 1.0) < 0.1, f"E[Z(1)^2] of the discretised process = {value:.4f}"

    @pytest.mark.slow
    @pytest.mark.parametrize("m,h0", [(1, 0.75), (2, 0.9)])
    def test_unit_second_moment(self, m, h0):
        config = HermiteProcessConfig(m=m, h0=h0)
        z1 = simulate_Z_ensemble(config, range(500)).at(1.0)
        sq = z1 ** 2
        est, se = sq.mean(), sq.std(ddof=1) / math.sqrt(len(sq))
        assert abs(est - 1.0) < 3 * se + 0.02, f"E[Z(1)^2] = {est:.4f} ± {se:.4f}"

    @pytest.mark.slow
    def test_first_order_matches_fbm(self):
        config = HermiteProcessConfig(m=1, h0=0.75)
        z = simulate_Z_ensemble(config, range(500)).at(1.0)
        oracle = fbm_ensemble(0.75, 100, 1.0, range(1000, 1500)).at(1.0)
        _, p = stats.ks_2samp(z, oracle)
        assert p > 0.01, f"KS p-value {p:.4f} between Z(1) and fBm B_H(1)"

    @pytest.mark.slow
    @pytest.mark.parametrize("m,h0", [(1, 0.75), (2, 0.9)])
    def test_self_similarity_in_law(self, m, h0):
        config = HermiteProcessConfig(m=m, h0=h0)
        H = config.hurst
        half = simulate_Z_ensemble(config, range(500)).at(0.5) / 0.5 ** H
        unit = simulate_Z_ensemble(config, range(500, 1000)).at(1.0)
        _, p = stats.ks_2samp(half, unit)
        assert p > 0.01, f"KS p-value {p:.4f} between 2^H Z(1/2) and Z(1)"

    @pytest.mark.slow
    @pytest.mark.parametrize("m,h0", [(1, 0.75), (2, 0.9)])
    def test_stationary_increments(self, m, h0):
        config = HermiteProcessConfig(m=m, h0=h0)
        ens = simulate_Z_ensemble(config, range(500))
        step = ens.at(0.75) - ens.at(0.5)
        start = simulate_Z_ensemble(config, range(500, 1000)).at(0.25)
        _, p = stats.ks_2samp(step, start)
        assert p > 0.01, f"KS p-value {p:.4f} between Z(0.75) - Z(0.5) and Z(0.25)"
        sq = step ** 2
        est, se = sq.mean(), sq.std(ddof=1) / math.sqrt(len(sq))
        target = 0.25 ** (2 * config.hurst)
        assert abs(est - target) < 3 * se + 0.05 * target, f"E[ΔZ²] = {est:.4f} ± {se:.4f}, δ^(2H) = {target:.4f}"

    @pytest.mark.slow
    def test_second_order_is_not_gaussian(self):
        config = HermiteProcessConfig(m=2, h0=0.9)
        z = simulate_Z_ensemble(config, range(500)).at(1.0)
        kurt = stats.kurtosis(z)
        assert kurt > 0.1, f"excess kurtosis of the Rosenblatt marginal {kurt:.3f}"


class TestFbmOracle:
    @pytest.mark.parametrize("H", [0.55, 0.75, 0.95])
    def test_embedding_is_nonnegative(self, H):
        assert embedding_defect(H, 256) == 0.0

    def test_covariance(self):
        ens = fbm_ensemble(0.7, 64, 1.0, range(4000))
        s, t = 0.25, 1.0
        est = float(np.mean(ens.at(s) * ens.at(t)))
        exact = float(fbm_covariance(0.7, s, t))
        assert abs(est - exact) < 0.05, f"Cov(B(0.25), B(1)) = {est:.4f}, exact {exact:.4f}"


    def test_oracle_is_the_circulant_path(self):
        config = HermiteProcessConfig(m=1, h0=0.7, n_grid=64, method="circulant", seed=8)
        path = simulate_Z(config)
        np.testing.assert_array_equal(path.values, fbm_oracle(0.7, 64, 1.0, 8).values)
        assert path.config == config

    def test_circulant_ensemble_rows_match_oracle(self):
        config = HermiteProcessConfig(m=1, h0=0.8, n_grid=16, method="circulant")
        ens = simulate_Z_ensemble(config, [3, 4])
        np.testing.assert_array_equal(ens.values[1], fbm_oracle(0.8, 16, 1.0, 4).values)

    def test_circulant_is_first_order_only(self):
        with pytest.raises(ValueError, match="m = 1"):
            HermiteProcessConfig(m=2, h0=0.9, method="circulant")

    @pytest.mark.slow
    def test_kernel_method_matches_oracle_marginal(self):
        z = simulate_Z_ensemble(HermiteProcessConfig(m=1, h0=0.75), range(500)).at(1.0)
        oracle = np.array([fbm_oracle(0.75, 100, 1.0, s).at(1.0) for s in range(2000, 2500)])
        _, p = stats.ks_2samp(z, oracle)
        assert p > 0.01, f"KS p-value {p:.4f} between Z(1) and the fBm oracle"


class TestLambdaNorm:
    @pytest.mark.parametrize("H", [0.6, 0.75, 0.9])
    @pytest.mark.parametrize("t", [0.3, 1.0])
    def test_indicator_norm(self, H, t):
        sq_norm = lambda_norm(IntegrandFn.indicator(0.0, t), H)
        assert abs(sq_norm - t ** (2 * H)) < 1e-10

    def test_is_the_squared_norm(self):
        # ‖c f‖² = c² ‖f‖², also for the continuous projection of a constant
        f = IntegrandFn.indicator(0.0, 1.0)
        assert lambda_norm(IntegrandFn.step([0.0, 1.0], [3.0]), 0.75) == pytest.approx(9.0 * lambda_norm(f, 0.75))
        ones = IntegrandFn.continuous(lambda x: np.ones_like(np.asarray(x, dtype=float)), 0.0, 1.0)
        assert lambda_norm(ones, 0.75) == pytest.approx(1.0, abs=1e-10)

    def test_nonpositive_step_uses_absolute_norm(self):
        f = IntegrandFn.step([0.0, 0.5, 1.0], [1.0, -1.0])
        assert abs_lambda_norm(f, 0.75) ** 2 > lambda_norm(f, 0.75)

    def test_continuous_approximation_converges(self):
        f = IntegrandFn.continuous(lambda x: np.sin(np.pi * np.asarray(x)), 0.0, 1.0)
        errors = [approximation_error(f, np.linspace(0, 1, n + 1), 0.75) for n in (8, 32, 128)]
        assert errors[0] > errors[1] > errors[2], f"{errors}"

    def test_hurst_range(self):
        with pytest.raises(ParameterRangeError):
            lambda_norm(IntegrandFn.indicator(0.0, 1.0), 0.4)

    def test_linear_combination_levels(self):
        f = linear_combination([2.0, -1.0], [IntegrandFn.indicator(0.0, 1.0), IntegrandFn.indicator(0.5, 1.0)])
        np.testing.assert_allclose(f(np.array([0.25, 0.75])), [2.0, 1.0])

    def test_step_approximation_keeps_steps(self):
        f = IntegrandFn.indicator(0.0, 0.5)
        assert step_approximation(f, np.linspace(0, 1, 5)) is f

    def test_step_approximation_keeps_edge_cells(self):
        f = IntegrandFn.continuous(lambda x: 1.0 + np.asarray(x), 0.05, 0.95)
        fn = step_approximation(f, np.linspace(0, 1, 11))
        assert fn.breakpoints[0] == 0.05 and fn.breakpoints[-1] == 0.95
        assert len(fn.levels) == 10
        assert fn.levels[0] == pytest.approx(1.05)

    def test_step_approximation_inside_one_cell(self):
        f = IntegrandFn.continuous(np.cos, 0.31, 0.39)
        fn = step_approximation(f, np.linspace(0, 1, 11))
        assert fn.breakpoints == [0.31, 0.39]


class TestWienerIntegral:
    def test_indicator_is_increment(self):
        path = simulate_Z(HermiteProcessConfig(m=1, h0=0.75, n_grid=20, seed=2))
        value = wiener_integral(path, IntegrandFn.indicator(0.25, 0.75))
        assert value == pytest.approx(path.at(0.75) - path.at(0.25))

    def test_continuous_integrand_covers_edge_cells(self):
        path = simulate_Z(HermiteProcessConfig(m=1, h0=0.75, n_grid=10, seed=6))
        ones = IntegrandFn.continuous(lambda x: np.ones_like(np.asarray(x, dtype=float)), 0.05, 0.95)
        assert wiener_integral(path, ones) == pytest.approx(path.at(0.95) - path.at(0.05))

    def test_linearity(self):
        ens = simulate_Z_ensemble(HermiteProcessConfig(m=2, h0=0.9, n_grid=40), range(20))
        f, g = IntegrandFn.indicator(0.0, 0.6), IntegrandFn.step([0.3, 0.5, 1.0], [2.0, -1.0])
        combined = wiener_integral(ens, linear_combination([2.0, -3.0], [f, g]))
        separate = 2.0 * wiener_integral(ens, f) - 3.0 * wiener_integral(ens, g)
        np.testing.assert_allclose(combined, separate, rtol=1e-10, atol=1e-12)

    def test_support_outside_path(self):
        path = simulate_Z(HermiteProcessConfig(m=1, h0=0.75, n_grid=20))
        f = IntegrandFn.continuous(np.cos, 0.0, 2.0)
        with pytest.raises(CoverageError):
            wiener_integral(path, f)

    def test_isometry_on_fbm(self):
        H = 0.75
        f = IntegrandFn.step([0.0, 0.3, 0.6, 1.0], [1.0, -2.0, 0.5])
        values = wiener_integral(fbm_ensemble(H, 100, 1.0, range(3000)), f)
        sq = values ** 2
        est, se = sq.mean(), sq.std(ddof=1) / math.sqrt(len(sq))
        target = lambda_norm(f, H)
        assert abs(est - target) < 3 * se, f"E[(∫f dB)^2] = {est:.4f} ± {se:.4f}, ‖f‖² = {target:.4f}"

    @pytest.mark.slow
    def test_isometry_on_rosenblatt(self):
        config = HermiteProcessConfig(m=2, h0=0.9)
        f = IntegrandFn.step([0.0, 0.3, 0.6, 1.0], [1.0, -2.0, 0.5])
        values = wiener_integral(simulate_Z_ensemble(config, range(500)), f)
        sq = values ** 2
        est, se = sq.mean(), sq.std(ddof=1) / math.sqrt(len(sq))
        target = lambda_norm(f, config.hurst)
        assert abs(est - target) < 3 * se + 0.05 * target, f"E[(∫f dZ)^2] = {est:.4f} ± {se:.4f}, ‖f‖² = {target:.4f}"
