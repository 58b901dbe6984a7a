# generators/lrd_gauss.py

"""
Long-range-dependent stationary Gaussian process

    g(x) = ∫ e(x - ξ) dW_ξ

with the moving-average kernel

    e(u) = C0 (u + u²)^{(H0 - 3/2)/2} L̃(u) 1_{u > 0},

sampled on a uniform grid by a truncated, discretised moving average.
"""

import logging
import math
from enum import Enum
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate, optimize, signal, special

from errors import ParameterRangeError, TruncationError

logger = logging.getLogger(__name__)

DEFAULT_TRUNCATION_TOLERANCE = 1e-4

ArrayLike = Union[float, Sequence[float], np.ndarray]


def check_h0(m: int, h0: float) -> None:
    """Raise ParameterRangeError unless 1 - 1/(2m) < h0 < 1."""
    if m < 1:
        raise ParameterRangeError("m", m, "m >= 1")
    lower = 1.0 - 1.0 / (2 * m)
    if not (lower < h0 < 1.0):
        raise ParameterRangeError(
            "h0", h0, f"1 - 1/(2m) < h0 < 1 with m={m}, i.e. {lower:.6g} < h0 < 1"
        )


def _as_array(u: ArrayLike) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(u, dtype=float)
    return np.atleast_1d(arr), arr.ndim == 0


class SlowVaryingKind(str, Enum):
    CONSTANT_ONE = "constant_one"
    LOG_POWER = "log_power"


class SlowVaryingSpec(BaseModel):
    """L ≡ 1 or L(u) = (1 + log(1 + u))^p."""

    kind: SlowVaryingKind = SlowVaryingKind.CONSTANT_ONE
    p: float = 0.0

    @property
    def is_constant(self) -> bool:
        return self.kind == SlowVaryingKind.CONSTANT_ONE or self.p == 0.0

    def eval(self, u: ArrayLike):
        arr, scalar = _as_array(u)
        out = self.eval_log1p(np.log1p(np.maximum(arr, 0.0)))
        return float(out[0]) if scalar else out

    def eval_log1p(self, log1p_u):
        """L at u given log(1 + u), so that u itself never has to be formed."""
        log1p_u = np.asarray(log1p_u, dtype=float)
        if self.is_constant:
            return np.ones_like(log1p_u)
        return (1.0 + log1p_u) ** self.p

    def ratio_trend(self, lam: float = 2.0, points: Sequence[float] = (1e3, 1e4, 1e5)) -> List[float]:
        """L(λu)/L(u) at the given u; tends to 1 for a slowly varying L."""
        return [self.eval(lam * u) / self.eval(u) for u in points]


@lru_cache(maxsize=None)
def _beta_integral(h0: float) -> float:
    # ∫_0^∞ (u + u²)^{h0 - 3/2} du = B(h0 - 1/2, 2 - 2h0)
    return float(special.beta(h0 - 0.5, 2.0 - 2.0 * h0))


def normalization_constant(m: int, h0: float) -> float:
    """C0 = (∫_0^∞ (u + u²)^{h0 - 3/2} du)^{-1/2}."""
    check_h0(m, h0)
    return _beta_integral(h0) ** -0.5


# Kernel integrals run in r = 1/(1 + u) ∈ (0, 1]. Then (u + u²) = (1 - r)/r²,
# du = dr/r², and ∫_0^∞ (u + u²)^{h0 - 3/2} du carries the weight
# r^{1 - 2h0} (1 - r)^{h0 - 3/2}, both exponents in (-1, 0). The u → ∞ tail
# sits at r → 0 and never overflows.

_R_FLOOR = 1e-300


def _log1p_u(r):
    """log(1 + u) at u = (1 - r)/r."""
    return -np.log(np.maximum(r, _R_FLOOR))


def _square_weights(h0: float) -> Tuple[float, float]:
    return 1.0 - 2.0 * h0, h0 - 1.5


@lru_cache(maxsize=None)
def _weighted_beta_integral(h0: float, p: float) -> float:
    """∫_0^∞ (u + u²)^{h0 - 3/2} (1 + log(1 + u))^{2p} du by quadrature."""

    def density(r):
        return (1.0 + _log1p_u(r)) ** (2 * p)

    value, _ = integrate.quad(
        density, 0.0, 1.0, weight="alg", wvar=_square_weights(h0), epsabs=1e-13, epsrel=1e-11, limit=500
    )
    return value


class KernelSpec(BaseModel):
    """Moving-average kernel e(·) with parameters (m, H0, L)."""

    m: int = Field(1, ge=1)
    h0: float = 0.75
    slowly_varying: SlowVaryingSpec = Field(default_factory=SlowVaryingSpec)
    gamma: Optional[float] = None

    @model_validator(mode="after")
    def _check_ranges(self):
        check_h0(self.m, self.h0)
        if self.gamma is not None:
            upper = min(self.h0 - (1.0 - 1.0 / (2 * self.m)), 1.0 - self.h0)
            if not (0.0 < self.gamma < upper):
                raise ParameterRangeError("gamma", self.gamma, f"0 < gamma < {upper:.6g}")
        return self

    @property
    def hurst(self) -> float:
        """Self-similar index H = 1 + m(H0 - 1) of the limit."""
        return 1.0 + self.m * (self.h0 - 1.0)

    @property
    def c0(self) -> float:
        return _beta_integral(self.h0) ** -0.5

    @property
    def l_scale(self) -> float:
        """C0_L / C0, so that L̃ = l_scale · L keeps ∫e² = 1."""
        if self.slowly_varying.is_constant:
            return 1.0
        return math.sqrt(_beta_integral(self.h0) / _weighted_beta_integral(self.h0, self.slowly_varying.p))

    def effective_L(self, u: ArrayLike):
        return self.l_scale * self.slowly_varying.eval(u)

    def cache_key(self) -> str:
        return self.model_dump_json()


class GaussianPath(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    delta: float
    values: np.ndarray
    seed: int
    kernel: KernelSpec
    window: float
    scheme: str = "cell_mass"
    truncated_mass: float = 0.0

    @property
    def n(self) -> int:
        return len(self.values) - 1

    @property
    def grid(self) -> np.ndarray:
        return self.delta * np.arange(len(self.values))

    def columns(self) -> Dict[str, np.ndarray]:
        return {"x": self.grid, "g": self.values}


# ---------------------------------------------------------------------------
# Kernel evaluation
# ---------------------------------------------------------------------------

def eval_kernel(spec: KernelSpec, u: ArrayLike):
    arr, scalar = _as_array(u)
    out = np.zeros_like(arr)
    pos = arr > 0
    up = arr[pos]
    log1p_u = np.log1p(up)
    # (u + u²)^a as exp(a (log u + log(1 + u))); u² overflows past ~1e154
    out[pos] = spec.c0 * np.exp(0.5 * (spec.h0 - 1.5) * (np.log(up) + log1p_u)) * _L_log1p(spec, log1p_u)
    return float(out[0]) if scalar else out


def _L_log1p(spec: KernelSpec, log1p_u):
    return spec.l_scale * spec.slowly_varying.eval_log1p(log1p_u)


def _square_density(spec: KernelSpec):
    c0sq = spec.c0 ** 2

    def density(r):
        return c0sq * _L_log1p(spec, _log1p_u(r)) ** 2

    return density


def kernel_square_integral(spec: KernelSpec) -> float:
    """∫_0^∞ e(u)² du by adaptive quadrature (independent of the Beta identity)."""
    value, _ = integrate.quad(
        _square_density(spec), 0.0, 1.0, weight="alg", wvar=_square_weights(spec.h0),
        epsabs=1e-13, epsrel=1e-11, limit=500,
    )
    return value


def tail_mass(spec: KernelSpec, window: float) -> float:
    """∫_window^∞ e(u)² du."""
    if window <= 0:
        return 1.0
    s, t = spec.h0 - 0.5, 2.0 - 2.0 * spec.h0
    r_w = 1.0 / (1.0 + window)
    if spec.slowly_varying.is_constant:
        return float(special.betainc(t, s, r_w))

    b, a = _square_weights(spec.h0)
    density = _square_density(spec)
    if r_w <= 0.5:
        value, _ = integrate.quad(
            lambda r: (1.0 - r) ** a * density(r), 0.0, r_w, weight="alg", wvar=(b, 0.0), epsabs=1e-15, limit=500
        )
        return value
    # short windows: one minus the retained head, whose singular end is u = 0
    head, _ = integrate.quad(
        lambda r: r ** b * density(r), r_w, 1.0, weight="alg", wvar=(0.0, a), epsabs=1e-15, limit=500
    )
    return 1.0 - head


def required_window(spec: KernelSpec, tolerance: float) -> float:
    """Smallest window whose discarded kernel mass is below tolerance."""
    s, t = spec.h0 - 0.5, 2.0 - 2.0 * spec.h0
    if spec.slowly_varying.is_constant:
        y = float(special.betaincinv(t, s, tolerance))
        return 1.0 / y - 1.0 if y > 0 else math.inf
    if tail_mass(spec, math.exp(700.0)) > tolerance:
        return math.inf
    log_w = optimize.brentq(lambda lw: tail_mass(spec, math.exp(lw)) - tolerance, -30.0, 700.0)
    return math.exp(log_w)


def kernel_cell_masses(spec: KernelSpec, delta: float, n_cells: int) -> np.ndarray:
    """∫_{kΔ}^{(k+1)Δ} e(u)² du for k = 0..n_cells-1."""
    edges = delta * np.arange(n_cells + 1, dtype=float)
    s, t = spec.h0 - 0.5, 2.0 - 2.0 * spec.h0
    # tail(U) = ∫_U^∞ (u+u²)^a du / B, accurate for large U where cells are tiny
    tails = special.betainc(t, s, 1.0 / (1.0 + edges))
    masses = -np.diff(tails)
    if not spec.slowly_varying.is_constant:
        mids = edges[:-1] + 0.5 * delta
        masses = masses * spec.effective_L(mids) ** 2
    return np.maximum(masses, 0.0)


def _window_cells(delta: float, window: float) -> int:
    ratio = window / delta
    n_w = int(round(ratio))
    if n_w < 1 or abs(ratio - n_w) > 1e-9 * max(1.0, ratio):
        raise ParameterRangeError("window", window, f"window/delta integral (delta={delta})")
    return n_w


@lru_cache(maxsize=16)
def _cached_weights(key: str, delta: float, window: float, scheme: str) -> np.ndarray:
    spec = KernelSpec.model_validate_json(key)
    n_w = _window_cells(delta, window)
    if scheme == "cell_mass":
        weights = np.sqrt(kernel_cell_masses(spec, delta, n_w))
    elif scheme == "riemann":
        weights = eval_kernel(spec, delta * np.arange(n_w)) * math.sqrt(delta)
    else:
        raise ParameterRangeError("scheme", scheme, "scheme in {'cell_mass', 'riemann'}")
    weights.setflags(write=False)
    return weights


def moving_average_weights(spec: KernelSpec, delta: float, window: float, scheme: str = "cell_mass") -> np.ndarray:
    """Weights c_k of g_j = Σ_k c_k Z_{j-k}, k = 0..window/delta - 1."""
    return _cached_weights(spec.cache_key(), float(delta), float(window), scheme)


def discrete_autocovariance(weights: np.ndarray, max_lag: int) -> np.ndarray:
    """r_n = Σ_k c_k c_{k+n}, n = 0..max_lag: exact covariance of the simulated sequence."""
    full = signal.fftconvolve(weights, weights[::-1], mode="full")
    centre = len(weights) - 1
    r = np.zeros(max_lag + 1)
    available = min(max_lag, centre)
    r[: available + 1] = full[centre: centre + available + 1]
    return r


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def simulate_path(
    spec: KernelSpec,
    n: int,
    delta: float,
    window: float,
    seed: int,
    tolerance: float = DEFAULT_TRUNCATION_TOLERANCE,
    scheme: str = "cell_mass",
    method: str = "fft",
) -> GaussianPath:
    """Sample g at x_j = jΔ, j = 0..n, from one shared i.i.d. noise sequence."""
    if n < 1:
        raise ParameterRangeError("n", n, "n >= 1")
    if delta <= 0:
        raise ParameterRangeError("delta", delta, "delta > 0")
    if window <= 0:
        raise ParameterRangeError("window", window, "window > 0")

    discarded = tail_mass(spec, window)
    if discarded > tolerance:
        raise TruncationError(
            f"window={window:g} leaves kernel mass {discarded:.3e} > tolerance {tolerance:.1e}",
            required=required_window(spec, tolerance),
        )

    weights = moving_average_weights(spec, delta, window, scheme)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(n + len(weights))

    if method == "fft":
        values = signal.fftconvolve(noise, weights, mode="valid")
    elif method == "direct":
        values = np.convolve(noise, weights, mode="valid")
    else:
        raise ParameterRangeError("method", method, "method in {'fft', 'direct'}")

    logger.debug(
        "simulated g: n=%d delta=%g window=%g cells=%d discarded=%.2e seed=%d",
        n, delta, window, len(weights), discarded, seed,
    )
    return GaussianPath(
        delta=delta,
        values=values,
        seed=seed,
        kernel=spec,
        window=window,
        scheme=scheme,
        truncated_mass=discarded,
    )


def simulate_paths(
    spec: KernelSpec,
    n: int,
    delta: float,
    window: float,
    seeds: Sequence[int],
    **kwargs,
) -> List[GaussianPath]:
    return [simulate_path(spec, n, delta, window, seed, **kwargs) for seed in seeds]


# ---------------------------------------------------------------------------
# Covariance
# ---------------------------------------------------------------------------

def theoretical_covariance(spec: KernelSpec, x: float, window: Optional[float] = None) -> float:
    """
    R_g(x) = ∫_0^∞ e(u) e(u + x) du.

    With `window` set, returns the covariance of the kernel truncated to
    (0, window), i.e. ∫_0^{window - x} e(u) e(u + x) du.
    """
    x = abs(float(x))
    if x == 0.0 and window is None:
        return 1.0
    upper = math.inf if window is None else window - x
    if upper <= 0:
        return 0.0

    if x == 0.0:
        return 1.0 - tail_mass(spec, window)

    # in r = 1/(1 + u): e(u) e(u + x) du = r^{1-2H0} (1 - r)^{a2} pair(r) dr
    a2 = 0.5 * (spec.h0 - 1.5)
    b = 1.0 - 2.0 * spec.h0
    c0sq = spec.c0 ** 2

    def pair(r):
        xr = x * r
        log1p_u = _log1p_u(r)
        return (
            c0sq
            * ((1.0 - r + xr) * (1.0 + xr)) ** a2
            * _L_log1p(spec, log1p_u)
            * _L_log1p(spec, math.log1p(xr) + log1p_u)
        )

    def full(r):
        return r ** b * (1.0 - r) ** a2 * pair(r)

    quad_opts = dict(epsabs=1e-15, epsrel=1e-10, limit=500)
    r_lo = 0.0 if math.isinf(upper) else 1.0 / (1.0 + upper)
    r_x = 1.0 / (1.0 + x)
    total = 0.0
    # u beyond x
    if r_lo < r_x:
        if r_lo == 0.0:
            piece, _ = integrate.quad(lambda r: (1.0 - r) ** a2 * pair(r), 0.0, r_x, weight="alg", wvar=(b, 0.0), **quad_opts)
        else:
            piece, _ = integrate.quad(full, r_lo, r_x, **quad_opts)
        total += piece
    # u below x: decade breaks down to u = 1, then the u → 0 end
    start = max(r_lo, r_x)
    breaks = [start]
    while breaks[-1] * 10.0 < 0.5:
        breaks.append(breaks[-1] * 10.0)
    if breaks[-1] < 0.5:
        breaks.append(0.5)
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        piece, _ = integrate.quad(full, lo, hi, **quad_opts)
        total += piece
    piece, _ = integrate.quad(lambda r: r ** b * pair(r), breaks[-1], 1.0, weight="alg", wvar=(0.0, a2), **quad_opts)
    return total + piece


def covariance_correction(spec: KernelSpec) -> float:
    """
    c in R_g(x) = x^{2H0 - 2} (1 + c x^{1/2 - H0} + O(1/x)) for L ≡ 1.

    The kernel deviates from the pure power C0 u^{H0-3/2} by an integrable
    amount, and c = C0² ∫_0^∞ [(u + u²)^{(H0-3/2)/2} - u^{H0-3/2}] du, a Beta
    function continued to a negative argument. c < 0: the ratio
    R_g(x)/x^{2H0-2} approaches 1 from below.
    """
    if not spec.slowly_varying.is_constant:
        raise ParameterRangeError("slowly_varying", spec.slowly_varying.kind.value, "L ≡ 1")
    s = 0.5 * spec.h0 + 0.25
    gap = 0.5 - spec.h0
    beta = special.gamma(s) * special.gamma(gap) / special.gamma(s + gap)
    return float(spec.c0 ** 2 * beta)


def covariance_asymptote(spec: KernelSpec, x: ArrayLike, second_order: bool = False):
    """x^{2H0 - 2} L̃(x)², times (1 + c x^{1/2 - H0}) with second_order (L ≡ 1 only)."""
    arr, scalar = _as_array(x)
    out = arr ** (2.0 * spec.h0 - 2.0) * spec.effective_L(arr) ** 2
    if second_order:
        out = out * (1.0 + covariance_correction(spec) * arr ** (0.5 - spec.h0))
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Normalisations and slowly varying facts
# ---------------------------------------------------------------------------

def d_normalizer(spec: KernelSpec, x: ArrayLike):
    """d(x) = sqrt(m!/(H(2H-1))) x^H L̃(x)^m."""
    arr, scalar = _as_array(x)
    H = spec.hurst
    out = math.sqrt(math.factorial(spec.m) / (H * (2 * H - 1))) * arr ** H * spec.effective_L(arr) ** spec.m
    return float(out[0]) if scalar else out


def scaling_factor(spec: KernelSpec, epsilon: float) -> float:
    """𝔛(ε) = sqrt(m!/(H(2H-1))) ε^{1-H} L̃(1/ε)^m, equal to ε d(1/ε)."""
    H = spec.hurst
    return (
        math.sqrt(math.factorial(spec.m) / (H * (2 * H - 1)))
        * epsilon ** (1.0 - H)
        * spec.effective_L(1.0 / epsilon) ** spec.m
    )


def potter_ratio_bound(L: SlowVaryingSpec, delta_exp: float, x: ArrayLike, y: ArrayLike):
    """
    L(y)/L(x) divided by max{(x/y)^δ, (y/x)^δ}; Potter's theorem bounds it by
    a constant C for all x, y past some point. Broadcasts over x and y.
    """
    xa, x_scalar = _as_array(x)
    ya, y_scalar = _as_array(y)
    if np.any(xa <= 0) or np.any(ya <= 0):
        raise ParameterRangeError("x, y", (x, y), "x > 0 and y > 0")
    if delta_exp <= 0:
        raise ParameterRangeError("delta_exp", delta_exp, "delta_exp > 0")
    q = ya / xa
    out = L.eval(ya) / L.eval(xa) / np.maximum(q ** delta_exp, q ** -delta_exp)
    return float(out[0]) if x_scalar and y_scalar else out


def potter_constant(L: SlowVaryingSpec, delta_exp: float, grid: Sequence[float]) -> float:
    """Smallest C making the Potter bound hold on all pairs of the grid."""
    pts = np.asarray(grid, dtype=float)
    return float(np.max(potter_ratio_bound(L, delta_exp, pts[:, None], pts[None, :])))


class KernelDiagnostics(BaseModel):
    normalization: float
    upper_bound_constant: float
    asymptotic_ratios: List[float]
    forward_support: bool
    slowly_varying_ratios: List[float]
    potter_constant: float


def validate_kernel(spec: KernelSpec, potter_delta: float = 0.1) -> KernelDiagnostics:
    """Numerical surrogate checks of the kernel assumptions."""
    a = spec.h0 - 1.5
    u = np.logspace(-6, 6, 2001)
    envelope = u ** a * spec.effective_L(u)
    ratio = eval_kernel(spec, u) / envelope
    far = np.array([1e3, 1e4, 1e5])
    asymptotic = eval_kernel(spec, far) / (far ** a * spec.effective_L(far))
    backward = eval_kernel(spec, -np.logspace(-6, 3, 200))
    forward_support = bool(np.all(backward == 0.0)) and eval_kernel(spec, 0.0) == 0.0
    return KernelDiagnostics(
        normalization=kernel_square_integral(spec),
        upper_bound_constant=float(ratio.max()),
        asymptotic_ratios=[float(v) for v in asymptotic],
        forward_support=forward_support,
        slowly_varying_ratios=spec.slowly_varying.ratio_trend(),
        potter_constant=potter_constant(spec.slowly_varying, potter_delta, np.logspace(0, 6, 40)),
    )
