import numpy as np
import pytest

from config_helpers import aligned_window
from errors import CoverageError, ResolutionError
from generators.hermite_process import HermiteProcessConfig, simulate_Z
from generators.lrd_gauss import simulate_path
from integrators.hermite_core import coefficient_sampler, constant_function
from integrators.homogenize1d import (
    ProblemSpec,
    SourceKind,
    SourceSpec,
    antiderivative_F,
    decompose,
    effective_coefficient,
    flux_defect,
    grid_size_for,
    limit_integral,
    limit_kernel,
    limit_variance,
    path_request,
    probe_indices,
    residual_check,
    solve_homogenized,
    solve_random,
)


def _spec(phi, epsilon=0.05, b=0.0, kind=SourceKind.CONST, a_star=1.0):
    return ProblemSpec(source=SourceSpec(kind=kind), b=b, epsilon=epsilon, coeff=coefficient_sampler(phi, a_star))


def _random_pair(spec, kernel, seed=0, tolerance=1e-2):
    delta, n = path_request(spec)
    window = aligned_window(kernel, delta, tolerance)
    path = simulate_path(kernel, n, delta, window, seed, tolerance=tolerance)
    return path, solve_random(spec, path)


class TestSources:
    @pytest.mark.parametrize("kind", list(SourceKind))
    def test_antiderivative(self, kind):
        source = SourceSpec(kind=kind, scale=2.0)
        x = np.linspace(0, 1, 11)
        np.testing.assert_allclose(antiderivative_F(source, x), source.exact_antiderivative(x), atol=1e-10)

    def test_grid_size(self):
        assert grid_size_for(0.05) == 400
        assert grid_size_for(0.03) == 667


class TestDeterministicCoefficient:
    def test_homogenized_closed_form(self):
        a_star = 2.0
        spec = _spec(constant_function(0.0), a_star=a_star)
        u_bar, c_star = solve_homogenized(spec)
        x = spec.nodes
        assert c_star == pytest.approx(0.5)
        np.testing.assert_allclose(u_bar, (x - x * x) / (2 * a_star), atol=1e-12)

    @pytest.mark.parametrize("c", [0.0, 0.3])
    @pytest.mark.parametrize("kind", list(SourceKind))
    def test_constant_coefficient_has_no_corrector(self, c, kind):
        spec = _spec(constant_function(c), b=0.7, kind=kind)
        pair = solve_random(spec, None)
        np.testing.assert_allclose(pair.u_eps, pair.u_bar, atol=1e-12)
        assert pair.c_eps == pytest.approx(pair.c_star, abs=1e-12)

    def test_effective_coefficient_of_shifted_constant(self):
        sampler = coefficient_sampler(constant_function(0.5), 1.0)
        assert effective_coefficient(sampler) == pytest.approx(1.0 / 1.5)

    def test_decomposition_without_path(self):
        spec = _spec(constant_function(0.0))
        pair = solve_random(spec, None)
        dec = decompose(spec, None, pair)
        assert dec.X_eps == 1.0
        assert np.max(np.abs(dec.U_eps)) < 1e-12


class TestResidual:
    def test_unit_coefficient_constant_source(self):
        spec = ProblemSpec(epsilon=0.05, coeff=coefficient_sampler(constant_function(0.0), 1.0), quad_grid=10_000)
        pair = solve_random(spec, None)
        assert residual_check(pair, spec, None) < 1e-6

    @pytest.mark.parametrize("random", [False, True])
    def test_second_order_under_halving(self, bounded_rank_2, kernel_m2, random):
        phi = bounded_rank_2 if random else constant_function(0.0)
        residuals = []
        for M in (200, 400):
            spec = ProblemSpec(
                source=SourceSpec(kind=SourceKind.SIN), b=0.2, epsilon=0.1,
                coeff=coefficient_sampler(phi, 1.0), quad_grid=M,
            )
            path = None
            if random:
                delta, n = path_request(spec)
                window = aligned_window(kernel_m2, delta, 1e-2)
                path = simulate_path(kernel_m2, n, delta, window, 0, tolerance=1e-2)
            residuals.append(residual_check(solve_random(spec, path), spec, path))
        ratio = residuals[0] / residuals[1]
        assert 3.5 <= ratio <= 4.5, f"residuals {residuals[0]:.3e} -> {residuals[1]:.3e}, ratio {ratio:.3f}"

    def test_coefficient_comes_from_the_path(self, bounded_rank_2, kernel_m2):
        spec = _spec(bounded_rank_2, epsilon=0.1, kind=SourceKind.SIN)
        path, pair = _random_pair(spec, kernel_m2, seed=1)
        other, _ = _random_pair(spec, kernel_m2, seed=2)
        assert residual_check(pair, spec, path) < 1e-6
        assert residual_check(pair, spec, other) > 1e-3


class TestRandomCoefficient:
    @pytest.mark.parametrize("kind", list(SourceKind))
    def test_boundary_values_and_residual(self, bounded_rank_2, kernel_m2, kind):
        spec = _spec(bounded_rank_2, b=0.4, kind=kind)
        path, pair = _random_pair(spec, kernel_m2)
        assert pair.u_eps[0] == 0.0
        assert pair.u_eps[-1] == pytest.approx(0.4, abs=1e-12)
        assert pair.corrector[-1] == pytest.approx(0.0, abs=1e-12)
        assert residual_check(pair, spec, path) < 1e-6
        assert flux_defect(pair) < 1e-10

    def test_decomposition_reconstructs_corrector(self, bounded_rank_2, kernel_m2):
        spec = _spec(bounded_rank_2, epsilon=0.02, kind=SourceKind.SIN)
        path, pair = _random_pair(spec, kernel_m2, seed=5)
        dec = decompose(spec, path, pair)
        err = dec.reconstruction_error(pair)
        assert err < 1e-10, f"|U + R - corrector/X| = {err:.3e}"

    def test_requires_path(self, bounded_rank_2):
        with pytest.raises(CoverageError):
            solve_random(_spec(bounded_rank_2), None)

    def test_misaligned_path(self, bounded_rank_2, kernel_m2):
        spec = _spec(bounded_rank_2, epsilon=0.05)
        window = aligned_window(kernel_m2, 0.04, 1e-2)
        path = simulate_path(kernel_m2, 1000, 0.04, window, 0, tolerance=1e-2)
        with pytest.raises(ResolutionError):
            solve_random(spec, path)

    def test_short_path(self, bounded_rank_2, kernel_m2):
        spec = _spec(bounded_rank_2, epsilon=0.05)
        delta, n = path_request(spec)
        window = aligned_window(kernel_m2, delta, 1e-2)
        path = simulate_path(kernel_m2, n // 2, delta, window, 0, tolerance=1e-2)
        with pytest.raises(CoverageError):
            solve_random(spec, path)

    def test_coarse_path(self, bounded_rank_2, kernel_m2):
        spec = ProblemSpec(epsilon=0.05, coeff=coefficient_sampler(bounded_rank_2, 1.0), quad_grid=100)
        delta, n = path_request(spec)
        window = aligned_window(kernel_m2, delta, 1e-2)
        path = simulate_path(kernel_m2, n, delta, window, 0, tolerance=1e-2)
        with pytest.raises(ResolutionError):
            solve_random(spec, path)


class TestLimitKernel:
    def test_vanishes_at_right_end(self, bounded_rank_2):
        spec = _spec(bounded_rank_2, kind=SourceKind.LINEAR)
        y = np.linspace(0, 1, 21)
        assert np.max(np.abs(limit_kernel(1.0, y, spec))) < 1e-12
        assert limit_variance(spec, 1.0, 0.75, 1.0, 1) == pytest.approx(0.0, abs=1e-12)

    def test_zero_outside_unit_interval(self, bounded_rank_2):
        spec = _spec(bounded_rank_2)
        assert limit_kernel(0.5, 1.5, spec) == 0.0

    def test_limit_integral_at_origin(self, bounded_rank_2):
        path = simulate_Z(HermiteProcessConfig(m=1, h0=0.75, n_grid=20))
        assert limit_integral(_spec(bounded_rank_2), 0.0, path) == 0.0

    def test_probe_alignment(self, bounded_rank_2):
        spec = _spec(bounded_rank_2, epsilon=0.05)
        np.testing.assert_array_equal(probe_indices(spec, [0.25, 1.0]), [100, 400])
        with pytest.raises(CoverageError):
            probe_indices(spec, [1.0 / 3.0])

    def test_epsilon_must_be_positive(self, bounded_rank_2):
        with pytest.raises(ValueError, match="epsilon"):
            _spec(bounded_rank_2, epsilon=0.0)
