# experiments/limit_lab.py

"""
Monte Carlo checks of the limit theorems at desk scale:

  * oscillatory integrals  M^ε_h = 𝔛(ε)^{-1} ∫_0^1 Φ(g(x/ε)) h(x) dx
    against (V_m/m!) ∫ h dZ;
  * rescaled correctors (u^ε - ū)/𝔛(ε) at probe points against
    (V_m/m!) ∫ F(x, y) dZ(y);
  * covariance decay of Φ(g) and Taqqu's normalisation.

Replicas run on a thread pool; every random draw comes from a counter-based
seed (seed_base, stream, replica), so results do not depend on scheduling.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import integrate, signal

from config_helpers import (
    LIMIT_STREAM,
    PATH_STREAM,
    TEST_STREAM,
    VERSION,
    ExperimentConfig,
    Thresholds,
    aligned_window,
    build_phi,
    config_hash,
    load_settings,
    replica_seed,
)
from errors import ConstructionError, CoverageError, OscillabError, ResolutionError
from generators.hermite_process import IntegrandFn, lambda_norm, simulate_Z_ensemble, wiener_integral
from generators.lrd_gauss import (
    GaussianPath,
    KernelSpec,
    covariance_asymptote,
    d_normalizer,
    discrete_autocovariance,
    moving_average_weights,
    scaling_factor,
    simulate_path,
    theoretical_covariance,
)
from integrators.hermite_core import TRUNCATION_Q, RankedFunction, coefficient_sampler, expand, pure_hermite
from integrators.homogenize1d import (
    ProblemSpec,
    coeff_is_deterministic,
    decompose,
    grid_size_for,
    limit_integral,
    limit_variance,
    probe_indices,
    solve_random,
)
from stats_helpers import (
    HypothesisOutcome,
    MomentSummary,
    RatioEstimate,
    TrendFlag,
    decreasing_trend,
    energy_test,
    ks_normal,
    summarize,
    variance_ratio,
    within_standard_errors,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Single-replica quantities
# ---------------------------------------------------------------------------

def _cells_for(path: GaussianPath, epsilon: float) -> int:
    ratio = 1.0 / (epsilon * path.delta)
    M = int(round(ratio))
    if M < 1 or abs(ratio - M) > 1e-9 * ratio:
        raise ResolutionError(f"1/(epsilon*delta) = {ratio:.6g} is not an integer cell count")
    if len(path.values) < M:
        raise CoverageError(f"path has {len(path.values)} samples, [0, 1/epsilon] needs {M}")
    return M


def oscillatory_integral(
    path: GaussianPath, phi: RankedFunction, h: IntegrandFn, epsilon: float, kernel: Optional[KernelSpec] = None
) -> float:
    """M^ε_h by the midpoint rule on the cells aligned with the path samples."""
    kernel = kernel if kernel is not None else path.kernel
    M = _cells_for(path, epsilon)
    y = (np.arange(M) + 0.5) / M
    values = phi.evaluate_fast(path.values[:M]) * h(y)
    return float(values.sum() / M / scaling_factor(kernel, epsilon))


def limit_sample(phi: RankedFunction, h: IntegrandFn, z_path):
    """(V_m/m!) ∫_0^1 h dZ for a path or, elementwise, an ensemble."""
    return phi.leading_coefficient * wiener_integral(z_path, h)


# ---------------------------------------------------------------------------
# Covariance oracles
# ---------------------------------------------------------------------------

def chaos_covariance(phi: RankedFunction, r: np.ndarray, Q: int = TRUNCATION_Q) -> np.ndarray:
    """
    Cov(Φ(g_0), Φ(g_n)) for a centred Gaussian sequence with covariance r_n,
    exact up to chaos truncation even when r_0 ≠ 1.
    """
    r = np.asarray(r, dtype=float)
    s = math.sqrt(r[0])
    scaled = expand(lambda x: phi(s * np.asarray(x, dtype=float)), Q)
    rho = r / r[0]
    out = np.zeros_like(rho)
    power = np.ones_like(rho)
    for q in range(1, Q + 1):
        power = power * rho
        out += scaled.coeffs[q] ** 2 / math.factorial(q) * power
    return out


def theory_covariance_table(kernel: KernelSpec, x: np.ndarray, n_nodes: int = 300) -> np.ndarray:
    """R_g at the points x by log-log interpolation of quadrature values."""
    x = np.abs(np.asarray(x, dtype=float))
    out = np.ones_like(x)
    pos = x > 0
    if not pos.any():
        return out
    lo, hi = x[pos].min(), x[pos].max()
    nodes = np.logspace(math.log10(lo), math.log10(hi), n_nodes) if hi > lo else np.array([lo])
    values = np.array([theoretical_covariance(kernel, v) for v in nodes])
    if len(nodes) == 1:
        out[pos] = values[0]
    else:
        out[pos] = np.exp(np.interp(np.log(x[pos]), np.log(nodes), np.log(values)))
    return out


def model_autocovariance(
    kernel: KernelSpec, delta: float, window: float, max_lag: int, scheme: str = "cell_mass"
) -> np.ndarray:
    return discrete_autocovariance(moving_average_weights(kernel, delta, window, scheme), max_lag)


def _weighted_lag_sum(levels: np.ndarray, R: np.ndarray) -> float:
    """Σ_{k,l} h_k h_l R_{|k-l|}."""
    M = len(levels)
    C = signal.fftconvolve(levels, levels[::-1], mode="full")[M - 1:]
    return float(C[0] * R[0] + 2.0 * np.dot(C[1:], R[1:M]))


def finite_eps_variance(
    phi: RankedFunction,
    kernel: KernelSpec,
    h: IntegrandFn,
    epsilon: float,
    window_tolerance: float = 1e-3,
    scheme: str = "cell_mass",
    covariance: str = "model",
) -> float:
    """
    Var[M^ε_h] = 𝔛(ε)^{-2} ∫∫ h(x) h(y) R_q((x - y)/ε) dx dy, on the cells
    used by the Monte Carlo runs. covariance="model" uses the exact
    autocovariance of the simulated sequence, "theory" the kernel's R_g.
    """
    M = grid_size_for(epsilon)
    delta = 1.0 / (epsilon * M)
    if covariance == "model":
        window = aligned_window(kernel, delta, window_tolerance)
        r = model_autocovariance(kernel, delta, window, M - 1, scheme)
    else:
        r = theory_covariance_table(kernel, delta * np.arange(M))
    R = chaos_covariance(phi, r)
    levels = h((np.arange(M) + 0.5) / M)
    return _weighted_lag_sum(levels, R) / (M * scaling_factor(kernel, epsilon)) ** 2


# ---------------------------------------------------------------------------
# Report models
# ---------------------------------------------------------------------------

class CovarianceRow(BaseModel):
    lag: float
    R_g: float
    R_q: float
    asymptote: float
    ratio: float
    corrected_ratio: Optional[float] = None
    mc: Optional[float] = None
    mc_se: Optional[float] = None


class TaqquRow(BaseModel):
    T: float
    estimate: float
    se: float
    oracle_continuous: float
    oracle_discrete: float
    ratio: float
    matches_discrete: bool


class CellSummary(BaseModel):
    epsilon: float
    cells: int
    replicas: int
    failed_replicas: int
    seed_streams: Dict[str, int]
    moments: Optional[MomentSummary] = None
    probe_moments: Optional[List[MomentSummary]] = None
    limit_variance: Optional[float] = None
    probe_limit_variance: Optional[List[float]] = None
    variance_ratio: Optional[RatioEstimate] = None
    finite_eps_variance: Optional[float] = None
    finite_eps_match: Optional[bool] = None
    ks: Optional[HypothesisOutcome] = None
    energy: Optional[HypothesisOutcome] = None
    diagnostics: Dict[str, float] = Field(default_factory=dict)
    degenerate: bool = False


class ConvergenceReport(BaseModel):
    mode: str
    version: str = VERSION
    config_hash: str
    seed_base: int
    thresholds: Thresholds
    cells: List[CellSummary] = Field(default_factory=list)
    trend: Optional[TrendFlag] = None
    covariance: Optional[List[CovarianceRow]] = None
    covariance_constant: Optional[float] = None
    taqqu: Optional[List[TaqquRow]] = None
    fdd: Optional[HypothesisOutcome] = None
    ensembles: Dict[str, np.ndarray] = Field(default_factory=dict, exclude=True)

    model_config = {"arbitrary_types_allowed": True}

    def tables(self) -> Dict[str, Dict[str, np.ndarray]]:
        """Column tables for CSV / .dat export."""
        out = {}
        if self.cells:
            cols = {
                "epsilon": [c.epsilon for c in self.cells],
                "failed": [c.failed_replicas for c in self.cells],
                "energy": [c.energy.statistic if c.energy else math.nan for c in self.cells],
                "energy_p": [c.energy.pvalue if c.energy else math.nan for c in self.cells],
            }
            if self.mode == "oscillatory":
                cols["mean"] = [c.moments.mean if c.moments else math.nan for c in self.cells]
                cols["variance"] = [c.moments.variance if c.moments else math.nan for c in self.cells]
                cols["variance_se"] = [c.moments.variance_se if c.moments else math.nan for c in self.cells]
                cols["excess_kurtosis"] = [c.moments.excess_kurtosis if c.moments else math.nan for c in self.cells]
                cols["var_ratio"] = [c.variance_ratio.ratio if c.variance_ratio else math.nan for c in self.cells]
                cols["finite_eps_variance"] = [
                    c.finite_eps_variance if c.finite_eps_variance is not None else math.nan for c in self.cells
                ]
                cols["ks_p"] = [c.ks.pvalue if c.ks else math.nan for c in self.cells]
            else:
                for key in ("rho_ratio", "sup_remainder", "reconstruction", "modulus"):
                    cols[key] = [c.diagnostics.get(key, math.nan) for c in self.cells]
            out["cells"] = {k: np.asarray(v, dtype=float) for k, v in cols.items()}
        if self.covariance:
            out["covariance"] = {
                k: np.asarray([getattr(r, k) if getattr(r, k) is not None else math.nan for r in self.covariance])
                for k in ("lag", "R_g", "R_q", "asymptote", "ratio", "corrected_ratio", "mc", "mc_se")
            }
        if self.taqqu:
            out["taqqu"] = {
                k: np.asarray([float(getattr(r, k)) for r in self.taqqu])
                for k in ("T", "estimate", "se", "oracle_continuous", "oracle_discrete", "ratio")
            }
        return out


# ---------------------------------------------------------------------------
# Replica execution
# ---------------------------------------------------------------------------

def run_replicas(fn: Callable[[int], object], n: int, threads: int) -> Tuple[List[object], int]:
    """Results in replica order; failing replicas are logged and dropped."""
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [pool.submit(fn, i) for i in range(n)]
        outcomes = []
        failed = 0
        for i, future in enumerate(futures):
            try:
                outcomes.append(future.result())
            except (OscillabError, FloatingPointError, np.linalg.LinAlgError) as exc:
                failed += 1
                logger.warning("replica %d failed: %s", i, exc)
    if failed == n:
        raise OscillabError(f"all {n} replicas failed")
    return outcomes, failed


def _streams(seed_base: int) -> Dict[str, int]:
    return {"seed_base": seed_base, "path_stream": PATH_STREAM, "limit_stream": LIMIT_STREAM, "test_stream": TEST_STREAM}


# ---------------------------------------------------------------------------
# Covariance decay and Taqqu normalisation
# ---------------------------------------------------------------------------

def covariance_decay_report(
    phi: RankedFunction,
    kernel: KernelSpec,
    lags: Sequence[float],
    mc_paths: int = 0,
    delta: float = 0.05,
    path_length: int = 20_000,
    window_tolerance: float = 1e-3,
    seed_base: int = 0,
    threads: int = 1,
) -> Tuple[List[CovarianceRow], float]:
    """
    R_q(x) = Σ_{q >= m} (V_q²/q!) R_g(x)^q against V_m²/m! L̃(x)^{2m} x^{2H-2};
    returns the rows and the fitted constant max |R_q| / (L̃^{2m} x^{2H-2}).
    For L ≡ 1 the rows also compare R_q with the asymptote carrying its
    x^{1/2 - H0} correction.
    """
    m = phi.declared_rank
    V = phi.expansion
    lead = V.coefficient(m) ** 2 / math.factorial(m) if m is not None else 0.0
    lags = [float(x) for x in lags]
    if any(x <= 0 for x in lags) or any(b <= a for a, b in zip(lags[:-1], lags[1:])):
        raise ValueError("lags must be positive and increasing")

    mc_values: Dict[float, Tuple[float, float]] = {}
    if mc_paths > 0:
        window = aligned_window(kernel, delta, window_tolerance)

        def replica(i):
            path = simulate_path(
                kernel, path_length, delta, window, replica_seed(seed_base, TEST_STREAM, i), tolerance=window_tolerance
            )
            return phi.evaluate_fast(path.values)

        series, _ = run_replicas(replica, mc_paths, threads)
        for x in lags:
            k = int(round(x / delta))
            if abs(k * delta - x) > 1e-9 * x or k >= path_length // 10:
                continue
            # one product mean per path; the spread across paths gives the error bar
            per_path = [float(np.mean((s[:-k] - s.mean()) * (s[k:] - s.mean()))) for s in series]
            se = float(np.std(per_path, ddof=1) / math.sqrt(len(per_path))) if len(per_path) > 1 else math.nan
            mc_values[x] = (float(np.mean(per_path)), se)

    rows = []
    envelope_ratios = []
    corrected = kernel.slowly_varying.is_constant
    for x in lags:
        rg = theoretical_covariance(kernel, x)
        rq = sum(c ** 2 / math.factorial(q) * rg ** q for q, c in enumerate(V.coeffs) if q >= 1)
        base = covariance_asymptote(kernel, x) ** kernel.m
        asymptote = lead * base
        refined = lead * covariance_asymptote(kernel, x, second_order=True) ** kernel.m if corrected else 0.0
        mc = mc_values.get(x)
        rows.append(
            CovarianceRow(
                lag=x,
                R_g=rg,
                R_q=rq,
                asymptote=asymptote,
                ratio=rq / asymptote if asymptote else math.nan,
                corrected_ratio=rq / refined if refined > 0 else None,
                mc=mc[0] if mc else None,
                mc_se=mc[1] if mc else None,
            )
        )
        envelope_ratios.append(abs(rq) / base)
    return rows, float(max(envelope_ratios))


def taqqu_continuous_oracle(kernel: KernelSpec, T: float, n_nodes: int = 600) -> float:
    """(2/d(T)²) ∫_0^T (T - x) m! R_g(x)^m dx."""
    m = kernel.m
    near = np.linspace(0.0, min(1.0, T), 201)
    far = np.logspace(0.0, math.log10(T), n_nodes) if T > 1.0 else np.array([])
    x = np.unique(np.concatenate([near, far]))
    rg = np.array([theoretical_covariance(kernel, v) for v in x])
    integrand = (T - x) * math.factorial(m) * rg ** m
    return float(2.0 * integrate.trapezoid(integrand, x) / d_normalizer(kernel, T) ** 2)


def taqqu_discrete_oracle(kernel: KernelSpec, T: float, delta: float, window_tolerance: float) -> float:
    """Exact variance of (δ/d(T)) Σ_{k<N} H_m(g_k) for the simulated sequence."""
    N = int(round(T / delta))
    window = aligned_window(kernel, delta, window_tolerance)
    r = model_autocovariance(kernel, delta, window, N - 1)
    R = chaos_covariance(pure_hermite(kernel.m), r)
    return (delta / d_normalizer(kernel, T)) ** 2 * _weighted_lag_sum(np.ones(N), R)


def _taqqu_replicas(
    kernel: KernelSpec,
    phi: Optional[RankedFunction],
    Ts: Sequence[float],
    replicas: int,
    delta: float,
    window_tolerance: float,
    seed_base: int,
    threads: int,
):
    Ts = [float(t) for t in Ts]
    n_max = int(round(Ts[-1] / delta))
    window = aligned_window(kernel, delta, window_tolerance)
    hermite = pure_hermite(kernel.m)
    d = {T: d_normalizer(kernel, T) for T in Ts}

    def replica(i):
        path = simulate_path(
            kernel, n_max, delta, window, replica_seed(seed_base, PATH_STREAM, i), tolerance=window_tolerance
        )
        hm = np.cumsum(hermite(path.values[:n_max]))
        sums = {T: delta * hm[int(round(T / delta)) - 1] / d[T] for T in Ts}
        fdd = None
        if phi is not None:
            ph = np.cumsum(phi.evaluate_fast(path.values[:n_max]))
            fdd = [delta * ph[int(round(x * n_max)) - 1] / d[Ts[-1]] for x in (0.5, 1.0)]
        return sums, fdd

    return run_replicas(replica, replicas, threads)


def _taqqu_rows(kernel, Ts, outcomes, delta, window_tolerance, se_multiple) -> List[TaqquRow]:
    rows = []
    for T in [float(t) for t in Ts]:
        samples = np.array([o[0][T] for o in outcomes])
        s = summarize(samples)
        cont = taqqu_continuous_oracle(kernel, T)
        disc = taqqu_discrete_oracle(kernel, T, delta, window_tolerance)
        rows.append(
            TaqquRow(
                T=T,
                estimate=s.variance,
                se=s.variance_se,
                oracle_continuous=cont,
                oracle_discrete=disc,
                ratio=s.variance / disc,
                matches_discrete=within_standard_errors(s.variance, disc, s.variance_se, se_multiple),
            )
        )
    return rows


def taqqu_variance_report(
    kernel: KernelSpec,
    Ts: Sequence[float],
    replicas: int = 300,
    delta: float = 0.05,
    window_tolerance: float = 1e-3,
    seed_base: int = 0,
    threads: int = 1,
    se_multiple: float = 3.0,
) -> List[TaqquRow]:
    """Var[(1/d(T)) ∫_0^T H_m(g)] per T with standard errors and both oracles."""
    if any(b <= a for a, b in zip(list(Ts)[:-1], list(Ts)[1:])):
        raise ValueError("Ts must be increasing")
    outcomes, _ = _taqqu_replicas(kernel, None, Ts, replicas, delta, window_tolerance, seed_base, threads)
    return _taqqu_rows(kernel, Ts, outcomes, delta, window_tolerance, se_multiple)


# ---------------------------------------------------------------------------
# Convergence runs
# ---------------------------------------------------------------------------

def _aligned_grid(epsilon: float, probes: Sequence[float]) -> int:
    M = grid_size_for(epsilon)
    for candidate in range(M, M + 10_000):
        if all(abs(p * candidate - round(p * candidate)) < 1e-9 for p in probes):
            return candidate
    raise CoverageError(f"no cell count near {M} places the probes {list(probes)} on nodes")


def _limit_ensemble(config: ExperimentConfig, replicas: int):
    hcfg = config.hermite_config()
    seeds = [replica_seed(config.seed_base, LIMIT_STREAM, i) for i in range(replicas)]
    return simulate_Z_ensemble(hcfg, seeds)


def _oscillatory(config: ExperimentConfig, report: ConvergenceReport, threads: int) -> None:
    kernel = config.spec()
    phi = build_phi(config.phi_config())
    h = config.h.build()
    m = phi.declared_rank
    if m is not None and m < 1:
        raise ConstructionError(f"{phi.name} has a nonzero mean; oscillatory integrals need Hermite rank >= 1")
    H = kernel.hurst
    limit_var = phi.leading_coefficient ** 2 * lambda_norm(h, H)
    zs = _limit_ensemble(config, config.replicas)
    limit = np.asarray(limit_sample(phi, h, zs))
    report.ensembles["limit"] = limit
    th = config.thresholds

    for j, eps in enumerate(config.epsilons):
        M = grid_size_for(eps)
        delta = 1.0 / (eps * M)
        window = aligned_window(kernel, delta, config.window_tolerance)

        def replica(i, eps=eps, M=M, delta=delta, window=window):
            path = simulate_path(
                kernel, M, delta, window, replica_seed(config.seed_base, PATH_STREAM, i),
                tolerance=config.window_tolerance, scheme=config.scheme,
            )
            return oscillatory_integral(path, phi, h, eps, kernel)

        outcomes, failed = run_replicas(replica, config.replicas, threads)
        samples = np.asarray(outcomes, dtype=float)
        report.ensembles[f"eps_{eps:g}"] = samples
        cell = CellSummary(epsilon=eps, cells=M, replicas=config.replicas, failed_replicas=failed,
                           seed_streams=_streams(config.seed_base))
        if np.allclose(samples, 0.0) and np.allclose(limit, 0.0):
            cell.degenerate = True
            report.cells.append(cell)
            continue
        cell.moments = summarize(samples)
        cell.limit_variance = limit_var
        cell.variance_ratio = variance_ratio(samples, limit_var, th.variance_tolerance)
        fe = finite_eps_variance(phi, kernel, h, eps, config.window_tolerance, config.scheme)
        cell.finite_eps_variance = fe
        cell.finite_eps_match = within_standard_errors(cell.moments.variance, fe, cell.moments.variance_se, th.se_multiple)
        if m == 1:
            cell.ks = ks_normal(samples, math.sqrt(limit_var), th.ks_alpha)
        cell.energy = energy_test(
            samples, limit, seed=replica_seed(config.seed_base, TEST_STREAM, j), alpha=th.energy_alpha
        )
        logger.info(
            "eps=%g var=%.4g (limit %.4g, finite-eps %.4g) energy=%.4g p=%.3f",
            eps, cell.moments.variance, limit_var, fe, cell.energy.statistic, cell.energy.pvalue,
        )
        report.cells.append(cell)


class _CorrectorSample(BaseModel):
    model_config = {"arbitrary_types_allowed": True}

    probes: np.ndarray
    rho_ratio: float
    abs_remainder: np.ndarray
    reconstruction: float
    modulus: float
    sup_corrector: float


def _corrector(config: ExperimentConfig, report: ConvergenceReport, threads: int) -> None:
    kernel = config.spec()
    phi_cfg = config.phi_config()
    phi = build_phi(phi_cfg)
    sampler = coefficient_sampler(phi, phi_cfg.a_star)
    deterministic = coeff_is_deterministic(sampler)
    th = config.thresholds
    probes = [float(p) for p in config.probes]

    zs = None if deterministic else _limit_ensemble(config, config.replicas)
    limit = None
    for j, eps in enumerate(config.epsilons):
        M = _aligned_grid(eps, probes)
        spec = ProblemSpec(source=config.source, b=config.b, epsilon=eps, coeff=sampler, quad_grid=M)
        delta = 1.0 / (eps * M)
        idx = probe_indices(spec, probes)
        window = None if deterministic else aligned_window(kernel, delta, config.window_tolerance)
        lag = max(1, M // 16)

        def replica(i, spec=spec, delta=delta, window=window, idx=idx, lag=lag, M=M):
            path = None
            if not deterministic:
                path = simulate_path(
                    kernel, M, delta, window, replica_seed(config.seed_base, PATH_STREAM, i),
                    tolerance=config.window_tolerance, scheme=config.scheme,
                )
            pair = solve_random(spec, path)
            dec = decompose(spec, path, pair)
            X = scaling_factor(kernel, spec.epsilon)
            return _CorrectorSample(
                probes=pair.corrector[idx] / X,
                rho_ratio=abs(dec.rho_eps) / X ** 2,
                abs_remainder=np.abs(dec.remainder),
                reconstruction=dec.reconstruction_error(pair),
                modulus=float(np.max(np.abs(dec.U_eps[lag:] - dec.U_eps[:-lag]))),
                sup_corrector=float(np.max(np.abs(pair.corrector))),
            )

        outcomes, failed = run_replicas(replica, config.replicas, threads)
        vectors = np.array([o.probes for o in outcomes])
        report.ensembles[f"eps_{eps:g}"] = vectors
        cell = CellSummary(
            epsilon=eps, cells=M, replicas=config.replicas, failed_replicas=failed,
            seed_streams=_streams(config.seed_base),
            diagnostics={
                "rho_ratio": float(np.mean([o.rho_ratio for o in outcomes])),
                "sup_remainder": float(np.max(np.mean([o.abs_remainder for o in outcomes], axis=0))),
                "reconstruction": float(np.max([o.reconstruction for o in outcomes])),
                "modulus": float(np.median([o.modulus for o in outcomes])),
                "median_sup_corrector": float(np.median([o.sup_corrector for o in outcomes])),
            },
        )
        if deterministic:
            cell.degenerate = True
            report.cells.append(cell)
            continue
        if limit is None:
            limit = np.column_stack([phi.leading_coefficient * limit_integral(spec, x, zs) for x in probes])
            report.ensembles["limit"] = limit
        m = phi.declared_rank
        cell.probe_moments = [summarize(vectors[:, k]) for k in range(len(probes))]
        cell.probe_limit_variance = [
            limit_variance(spec, x, kernel.hurst, phi.expansion.coefficient(m), m) for x in probes
        ]
        cell.energy = energy_test(
            vectors, limit, seed=replica_seed(config.seed_base, TEST_STREAM, j), alpha=th.energy_alpha
        )
        logger.info(
            "eps=%g corrector energy=%.4g p=%.3f E|rho|/X^2=%.3g",
            eps, cell.energy.statistic, cell.energy.pvalue, cell.diagnostics["rho_ratio"],
        )
        report.cells.append(cell)


def _taqqu_fdd(config: ExperimentConfig, report: ConvergenceReport, threads: int) -> None:
    kernel = config.spec()
    phi = build_phi(config.phi_config())
    outcomes, failed = _taqqu_replicas(
        kernel, phi, config.Ts, config.replicas, config.path_delta, config.window_tolerance, config.seed_base, threads
    )
    report.taqqu = _taqqu_rows(
        kernel, config.Ts, outcomes, config.path_delta, config.window_tolerance, config.thresholds.se_multiple
    )
    vectors = np.array([o[1] for o in outcomes])
    zs = _limit_ensemble(config, config.replicas)
    limit = phi.leading_coefficient * np.column_stack([zs.at(0.5), zs.at(1.0)])
    report.ensembles["fdd"] = vectors
    report.ensembles["limit"] = limit
    report.fdd = energy_test(
        vectors, limit, seed=replica_seed(config.seed_base, TEST_STREAM, 0), alpha=config.thresholds.energy_alpha
    )
    if failed:
        logger.warning("taqqu: %d of %d replicas failed", failed, config.replicas)


def _covariance(config: ExperimentConfig, report: ConvergenceReport, threads: int) -> None:
    kernel = config.spec()
    phi = build_phi(config.phi_config())
    rows, constant = covariance_decay_report(
        phi, kernel, config.lags, mc_paths=config.replicas, delta=config.path_delta,
        path_length=config.mc_path_length, window_tolerance=config.window_tolerance,
        seed_base=config.seed_base, threads=threads,
    )
    report.covariance = rows
    report.covariance_constant = constant


MODES = {
    "oscillatory": _oscillatory,
    "corrector": _corrector,
    "taqqu_fdd": _taqqu_fdd,
    "covariance": _covariance,
}


def run_convergence(config: ExperimentConfig, threads: Optional[int] = None) -> ConvergenceReport:
    threads = threads if threads is not None else load_settings().threads
    report = ConvergenceReport(
        mode=config.mode,
        config_hash=config_hash(config),
        seed_base=config.seed_base,
        thresholds=config.thresholds,
    )
    logger.info("running %s with %d replicas on %d threads", config.mode, config.replicas, threads)
    MODES[config.mode](config, report, threads)
    if config.mode in ("oscillatory", "corrector"):
        energies = [c.energy.statistic for c in report.cells if c.energy is not None]
        if len(energies) >= 2:
            report.trend = decreasing_trend(energies, config.thresholds.allowed_inversions)
    return report
