# generators/hermite_process.py

"""
Hermite process of order m and self-similarity index H = 1 + m(H0 - 1):

    Z(x) = K ∫ dB_{ξ1} ∫^{ξ1} dB_{ξ2} ... ∫^{ξ_{m-1}} dB_{ξm} ∫_0^x ∏ (s - ξ_i)_+^{H0 - 3/2} ds

The driving white noise is discretised on cells: uniform of width Δξ on
[-t_near, t_max], geometrically coarsened further left down to -t_left.
Each cell carries the cell average of (s - ξ)_+^{H0 - 3/2}, which has a
closed form, and the strictly ordered sum over distinct cells is the
elementary symmetric polynomial of the per-cell terms, evaluated through
Newton's identities on power sums.
"""

import logging
import math
from functools import lru_cache
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from errors import ComplexityError, CoverageError, ParameterRangeError, TruncationError
from generators.lrd_gauss import _beta_integral, check_h0

logger = logging.getLogger(__name__)

MAX_ORDER = 3
MAX_KERNEL_ENTRIES = 20_000_000
DEFAULT_T_LEFT_TOLERANCE = 1e-3


def normalizing_K(m: int, h0: float) -> float:
    """K(m, H0) = sqrt(m! H(2H-1) / B(H0 - 1/2, 2 - 2H0)^m)."""
    check_h0(m, h0)
    H = 1.0 + m * (h0 - 1.0)
    return math.sqrt(math.factorial(m) * H * (2 * H - 1) / _beta_integral(h0) ** m)


def omitted_mass_ratio(m: int, h0: float, x: float, t_left: float) -> float:
    """
    Upper bound on E[(Z(x) - Z_T(x))²] / E[Z(x)²] where Z_T ignores noise
    left of -T.
    """
    check_h0(m, h0)
    H = 1.0 + m * (h0 - 1.0)
    gamma = (m - 1) * (2 * h0 - 2)
    tau = t_left ** (2 * h0 - 2) / (2 - 2 * h0)
    time_part = 2.0 * x ** (gamma + 2) / ((gamma + 1) * (gamma + 2))
    return m * tau / _beta_integral(h0) * H * (2 * H - 1) * time_part / x ** (2 * H)


def required_t_left(m: int, h0: float, x: float, tolerance: float = DEFAULT_T_LEFT_TOLERANCE) -> float:
    """Smallest T with omitted_mass_ratio(m, h0, x, T) <= tolerance."""
    at_one = omitted_mass_ratio(m, h0, x, 1.0)
    # the ratio scales as T^{2H0 - 2}
    return (tolerance / at_one) ** (1.0 / (2 * h0 - 2))


class HermiteProcessConfig(BaseModel):
    m: int = Field(1, ge=1)
    h0: float = 0.75
    t_max: float = Field(1.0, gt=0)
    n_grid: int = Field(100, ge=1)
    t_left: Optional[float] = None
    t_near: float = Field(2.0, gt=0)
    noise_step: Optional[float] = None
    far_ratio: float = Field(0.1, gt=0, le=1)
    substeps: int = Field(4, ge=1)
    tolerance: float = Field(DEFAULT_T_LEFT_TOLERANCE, gt=0)
    method: Literal["kernel", "circulant"] = "kernel"
    seed: int = 0

    @model_validator(mode="after")
    def _check_ranges(self):
        check_h0(self.m, self.h0)
        if self.method == "circulant" and self.m != 1:
            raise ValueError("the circulant method simulates fBm and needs m = 1")
        return self

    @property
    def hurst(self) -> float:
        return 1.0 + self.m * (self.h0 - 1.0)

    @property
    def K(self) -> float:
        return normalizing_K(self.m, self.h0)

    @property
    def dt(self) -> float:
        return self.t_max / self.n_grid

    @property
    def xi_step(self) -> float:
        return self.noise_step if self.noise_step is not None else self.t_max / 500.0

    @property
    def grid(self) -> np.ndarray:
        return self.dt * np.arange(self.n_grid + 1)

    def kernel_key(self) -> str:
        return self.model_dump_json(exclude={"seed"})


class ProcessPath(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    values: np.ndarray
    config: Optional[HermiteProcessConfig] = None
    seed: int = 0

    def columns(self) -> Dict[str, np.ndarray]:
        return {"t": self.times, "Z": self.values}

    def at(self, t):
        return _interp_last(self.times, self.values, t)


class ProcessEnsemble(BaseModel):
    """Paths stacked as rows: values[i, j] = Z_i(times[j])."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    values: np.ndarray
    config: Optional[HermiteProcessConfig] = None
    seeds: List[int]

    def path(self, i: int) -> ProcessPath:
        return ProcessPath(times=self.times, values=self.values[i], config=self.config, seed=self.seeds[i])

    def at(self, t):
        return _interp_last(self.times, self.values, t)

    def __len__(self) -> int:
        return self.values.shape[0]


def _interp_last(times: np.ndarray, values: np.ndarray, t) -> np.ndarray:
    """Linear interpolation along the last axis of values."""
    t = float(t)
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise CoverageError(f"t={t:g} outside the path range [{times[0]:g}, {times[-1]:g}]")
    j = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
    lam = (t - times[j]) / (times[j + 1] - times[j])
    if abs(lam) < 1e-12:
        return values[..., j]
    if abs(lam - 1.0) < 1e-12:
        return values[..., j + 1]
    return (1.0 - lam) * values[..., j] + lam * values[..., j + 1]


# ---------------------------------------------------------------------------
# Noise cells and kernel operators
# ---------------------------------------------------------------------------

class NoiseGrid(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    edges: np.ndarray
    t_left: float

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def n_cells(self) -> int:
        return len(self.edges) - 1


def build_noise_grid(config: HermiteProcessConfig) -> NoiseGrid:
    needed = required_t_left(config.m, config.h0, config.t_max, config.tolerance)
    if config.t_left is None:
        t_left = max(needed, config.t_near)
    else:
        if config.t_left < needed:
            raise TruncationError(
                f"t_left={config.t_left:g} omits more than {config.tolerance:g} of E[Z(t_max)^2]",
                required=needed,
            )
        t_left = config.t_left

    step = config.xi_step
    t_near = min(config.t_near, t_left)
    n_uniform = int(math.ceil((config.t_max + t_near) / step))
    uniform = config.t_max - step * np.arange(n_uniform + 1)
    far = []
    edge = float(uniform[-1])
    while edge > -t_left:
        edge = max(edge - max(step, config.far_ratio * abs(edge)), -t_left)
        far.append(edge)
    edges = np.concatenate([uniform, np.asarray(far)])[::-1]
    return NoiseGrid(edges=edges, t_left=t_left)


def _power_increment(lo, width, p: float) -> np.ndarray:
    """max(lo + width, 0)^p - max(lo, 0)^p, accurate when width << lo."""
    lo = np.asarray(lo, dtype=float)
    hi = lo + width
    out = np.where(hi > 0, np.maximum(hi, 0.0) ** p, 0.0)
    pos = lo > 0
    safe = np.where(pos, lo, 1.0)
    stable = safe ** p * np.expm1(p * np.log1p(width / safe))
    return np.where(pos, stable, out)


def cell_averaged_kernel(h0: float, s: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """W[i, k] = (1/Δ_k) ∫_{cell k} (s_i - ξ)_+^{H0 - 3/2} dξ."""
    beta = h0 - 0.5
    a, b = edges[:-1], edges[1:]
    width = b - a
    return _power_increment(s[:, None] - b[None, :], width[None, :], beta) / (beta * width[None, :])


def first_order_kernel(h0: float, times: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """G[j, k] = ∫_0^{x_j} (cell average over cell k) ds in closed form."""
    beta = h0 - 0.5
    a, b = edges[:-1], edges[1:]
    width = b - a
    x = times[:, None]
    upper = _power_increment(-a[None, :], x, beta + 1) - _power_increment(-b[None, :], x, beta + 1)
    return upper / (beta * (beta + 1) * width[None, :])


@lru_cache(maxsize=8)
def _kernel_operator(key: str) -> Tuple[np.ndarray, np.ndarray]:
    config = HermiteProcessConfig.model_validate_json(key)
    noise = build_noise_grid(config)
    if config.m == 1:
        op = first_order_kernel(config.h0, config.grid, noise.edges)
    else:
        n_s = config.n_grid * config.substeps
        if n_s * noise.n_cells > MAX_KERNEL_ENTRIES:
            raise ComplexityError(
                f"kernel matrix {n_s} x {noise.n_cells} exceeds {MAX_KERNEL_ENTRIES} entries; "
                "coarsen n_grid, substeps or noise_step"
            )
        ds = config.dt / config.substeps
        s_mid = ds * (np.arange(n_s) + 0.5)
        op = cell_averaged_kernel(config.h0, s_mid, noise.edges)
    logger.debug(
        "hermite kernel m=%d cells=%d t_left=%.3g operator=%s",
        config.m, noise.n_cells, noise.t_left, op.shape,
    )
    op.setflags(write=False)
    widths = noise.widths
    widths.setflags(write=False)
    return op, widths


def _ordered_sum(op: np.ndarray, noise: np.ndarray, m: int) -> np.ndarray:
    """e_m(y) with y_k = op[:, k] * noise[k], via Newton's identities."""
    p = [None] + [(op ** r) @ (noise ** r) for r in range(1, m + 1)]
    e = [np.ones_like(p[1])]
    for k in range(1, m + 1):
        acc = np.zeros_like(p[1])
        for i in range(1, k + 1):
            acc += (-1) ** (i - 1) * e[k - i] * p[i]
        e.append(acc / k)
    return e[m]


def simulate_Z_ensemble(config: HermiteProcessConfig, seeds: Sequence[int]) -> ProcessEnsemble:
    """Paths for each seed; the deterministic kernel operator is shared."""
    if config.m > MAX_ORDER:
        raise ComplexityError(f"m={config.m} exceeds the supported order {MAX_ORDER}")
    if config.method == "circulant":
        fbm = fbm_ensemble(config.hurst, config.n_grid, config.t_max, seeds)
        return fbm.model_copy(update={"config": config})
    op, widths = _kernel_operator(config.kernel_key())
    scale = np.sqrt(widths)
    noise = np.column_stack([np.random.default_rng(s).standard_normal(len(widths)) * scale for s in seeds])

    K = config.K
    if config.m == 1:
        values = K * (op @ noise)
        values[0] = 0.0
    else:
        density = _ordered_sum(op, noise, config.m)
        ds = config.dt / config.substeps
        running = np.cumsum(density, axis=0) * ds
        values = np.zeros((config.n_grid + 1, len(seeds)))
        values[1:] = K * running[config.substeps - 1:: config.substeps]
    return ProcessEnsemble(times=config.grid, values=values.T.copy(), config=config, seeds=[int(s) for s in seeds])


def simulate_Z(config: HermiteProcessConfig) -> ProcessPath:
    if config.method == "circulant":
        return fbm_oracle(config.hurst, config.n_grid, config.t_max, config.seed).model_copy(update={"config": config})
    return simulate_Z_ensemble(config, [config.seed]).path(0)


def discrete_second_moment(config: HermiteProcessConfig, x: float) -> float:
    """Exact E[Z(x)²] of the discretised process (x on the time grid)."""
    j = int(round(x / config.dt))
    if abs(j * config.dt - x) > 1e-9 * max(1.0, x) or not 0 <= j <= config.n_grid:
        raise CoverageError(f"x={x:g} is not a grid time of the configuration")
    op, widths = _kernel_operator(config.kernel_key())
    K2 = config.K ** 2
    if config.m == 1:
        return float(K2 * np.sum(op[j] ** 2 * widths))
    rows = op[: j * config.substeps]
    ds = config.dt / config.substeps
    # c[k1, k2] = ∫_0^x w̄_k1 w̄_k2 ds on the midpoint grid
    scaled = rows * np.sqrt(widths)[None, :]
    c = ds * (scaled.T @ scaled)
    if config.m == 2:
        return float(K2 * 0.5 * (np.sum(c ** 2) - np.sum(np.diag(c) ** 2)))
    raise ComplexityError("exact second moment is available for m <= 2")


# ---------------------------------------------------------------------------
# Fractional Brownian motion oracle
# ---------------------------------------------------------------------------

def fbm_covariance(H: float, s, t):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return 0.5 * (np.abs(s) ** (2 * H) + np.abs(t) ** (2 * H) - np.abs(t - s) ** (2 * H))


def _fgn_eigenvalues(H: float, n: int) -> Tuple[np.ndarray, float]:
    k = np.arange(n + 1, dtype=float)
    rho = 0.5 * (np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))
    row = np.concatenate([rho, rho[-2:0:-1]])
    lam = np.fft.fft(row).real
    negative = lam < 0
    defect = float(-lam[negative].sum() / np.abs(lam).sum()) if negative.any() else 0.0
    if defect > 0:
        logger.warning("circulant embedding has negative eigenvalues; clipped, defect=%.3e", defect)
    return np.clip(lam, 0.0, None), defect


def fbm_ensemble(H: float, n: int, t_max: float, seeds: Sequence[int]) -> ProcessEnsemble:
    """Exact-in-law fBm on a uniform grid by circulant embedding of the fGn covariance."""
    if not 0.0 < H < 1.0:
        raise ParameterRangeError("H", H, "0 < H < 1")
    lam, defect = _fgn_eigenvalues(H, n)
    size = 2 * n
    rows = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        w = rng.standard_normal(size) + 1j * rng.standard_normal(size)
        fgn = np.fft.fft(np.sqrt(lam / size) * w)[:n].real
        rows.append(np.concatenate([[0.0], np.cumsum(fgn)]))
    step = t_max / n
    values = np.asarray(rows) * step ** H
    return ProcessEnsemble(times=step * np.arange(n + 1), values=values, seeds=[int(s) for s in seeds])


def fbm_oracle(H: float, n: int, t_max: float, seed: int) -> ProcessPath:
    return fbm_ensemble(H, n, t_max, [seed]).path(0)


def embedding_defect(H: float, n: int) -> float:
    return _fgn_eigenvalues(H, n)[1]


# ---------------------------------------------------------------------------
# Integrands, Λ^H norms and Wiener integrals
# ---------------------------------------------------------------------------

class IntegrandFn(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: Literal["step", "continuous"]
    breakpoints: List[float] = Field(default_factory=list)
    levels: List[float] = Field(default_factory=list)
    evaluator: Optional[Callable] = None
    support: Tuple[float, float]

    @model_validator(mode="after")
    def _check_shape(self):
        if self.kind == "step":
            if len(self.breakpoints) != len(self.levels) + 1:
                raise ValueError("a step integrand needs len(breakpoints) == len(levels) + 1")
            if any(b <= a for a, b in zip(self.breakpoints[:-1], self.breakpoints[1:])):
                raise ValueError("breakpoints must be strictly increasing")
        elif self.evaluator is None:
            raise ValueError("a continuous integrand needs an evaluator")
        if self.support[1] <= self.support[0]:
            raise ValueError("support must be a nonempty interval")
        return self

    @classmethod
    def step(cls, breakpoints: Sequence[float], levels: Sequence[float]) -> "IntegrandFn":
        bp = [float(b) for b in breakpoints]
        return cls(kind="step", breakpoints=bp, levels=[float(v) for v in levels], support=(bp[0], bp[-1]))

    @classmethod
    def indicator(cls, a: float, b: float) -> "IntegrandFn":
        return cls.step([a, b], [1.0])

    @classmethod
    def continuous(cls, fn: Callable, lo: float, hi: float) -> "IntegrandFn":
        return cls(kind="continuous", evaluator=fn, support=(float(lo), float(hi)))

    def pieces(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        bp = np.asarray(self.breakpoints)
        return bp[:-1], bp[1:], np.asarray(self.levels)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "continuous":
            inside = (x >= self.support[0]) & (x <= self.support[1])
            return np.where(inside, self.evaluator(x), 0.0)
        lo, hi, c = self.pieces()
        idx = np.searchsorted(hi, x, side="left")
        inside = (x > lo[0]) & (x <= hi[-1])
        return np.where(inside, c[np.clip(idx, 0, len(c) - 1)], 0.0)


def linear_combination(coefs: Sequence[float], fns: Sequence[IntegrandFn]) -> IntegrandFn:
    """Σ c_i f_i for step integrands, on the union of breakpoints."""
    if any(f.kind != "step" for f in fns):
        raise ParameterRangeError("kind", [f.kind for f in fns], "step integrands only")
    bp = np.unique(np.concatenate([f.breakpoints for f in fns]))
    mid = 0.5 * (bp[:-1] + bp[1:])
    levels = sum(c * f(mid) for c, f in zip(coefs, fns))
    return IntegrandFn.step(bp, levels)


def step_approximation(f: IntegrandFn, grid: np.ndarray, rule: str = "left") -> IntegrandFn:
    """
    Step function on the cells of grid ∩ support with left-point (or midpoint)
    levels. The support ends are breakpoints, so partial edge cells count.
    """
    if f.kind == "step":
        return f
    lo, hi = f.support
    pts = np.asarray(grid, dtype=float)
    inner = pts[(pts > lo + 1e-12) & (pts < hi - 1e-12)]
    pts = np.concatenate([[lo], inner, [hi]])
    sample = pts[:-1] if rule == "left" else 0.5 * (pts[:-1] + pts[1:])
    return IntegrandFn.step(pts, f.evaluator(sample))


def _step_gram(H: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    p = 2 * H
    return 0.5 * (
        np.abs(hi[:, None] - lo[None, :]) ** p
        + np.abs(lo[:, None] - hi[None, :]) ** p
        - np.abs(lo[:, None] - lo[None, :]) ** p
        - np.abs(hi[:, None] - hi[None, :]) ** p
    )


def _check_hurst(H: float) -> None:
    if not 0.5 < H < 1.0:
        raise ParameterRangeError("H", H, "1/2 < H < 1")


def _gram_form(f: IntegrandFn, H: float, n_quad: int, absolute: bool = False) -> float:
    _check_hurst(H)
    if f.kind == "continuous":
        f = step_approximation(f, np.linspace(f.support[0], f.support[1], n_quad + 1), rule="mid")
    lo, hi, c = f.pieces()
    if absolute:
        c = np.abs(c)
    return max(float(c @ _step_gram(H, lo, hi) @ c), 0.0)


def lambda_norm(f: IntegrandFn, H: float, n_quad: int = 2000) -> float:
    """
    Squared norm ‖f‖²_{Λ^H} = H(2H-1) ∫∫ f(u) f(v) |u - v|^{2H-2} du dv,
    so that E[(∫f dZ)²] = lambda_norm(f, H) and 1_{(0,t]} gives t^{2H}.
    Step functions are exact; continuous ones use a midpoint step projection.
    """
    return _gram_form(f, H, n_quad)


def abs_lambda_norm(f: IntegrandFn, H: float, n_quad: int = 2000) -> float:
    """‖f‖_{|Λ^H|}: the Λ^H norm of |f|, not squared."""
    return math.sqrt(_gram_form(f, H, n_quad, absolute=True))


def approximation_error(f: IntegrandFn, grid: np.ndarray, H: float, n_quad: int = 2000) -> float:
    """‖f - f_n‖_{|Λ^H|} for the left-point step approximation f_n on grid."""
    fn = step_approximation(f, grid)
    fine = np.linspace(f.support[0], f.support[1], n_quad + 1)
    mid = 0.5 * (fine[:-1] + fine[1:])
    diff = IntegrandFn.step(fine, f(mid) - fn(mid))
    return abs_lambda_norm(diff, H)


def wiener_integral(path, f: IntegrandFn):
    """
    ∫ f dZ along a ProcessPath (scalar) or ProcessEnsemble (one value per path):
    exact increments for step f, left-point sums on the path grid otherwise.
    """
    times = path.times
    if f.kind == "continuous":
        lo, hi = f.support
        if lo < times[0] - 1e-12 or hi > times[-1] + 1e-12:
            raise CoverageError(f"support [{lo:g}, {hi:g}] outside the path range [{times[0]:g}, {times[-1]:g}]")
        f = step_approximation(f, times)
    lo, hi, c = f.pieces()
    total = 0.0
    for a, b, level in zip(lo, hi, c):
        total = total + level * (_interp_last(times, path.values, b) - _interp_last(times, path.values, a))
    return total
