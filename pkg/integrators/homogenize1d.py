# integrators/homogenize1d.py

"""
Closed-form solver for

    -(a(x/ε) u')' = f on (0, 1),   u(0) = 0,   u(1) = b,

with a(x) = (Φ(g(x)) + 1/a*)^{-1}, its homogenised limit, and the exact
decomposition of the rescaled corrector (u^ε - ū)/𝔛(ε).

Cells have width h = 1/M; cell k is [kh, (k+1)h] and carries the path
sample g_k, so the path step must be 1/(εM).
"""

import logging
import math
from enum import Enum
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate

from errors import CoverageError, ParameterRangeError, ResolutionError
from generators.hermite_process import IntegrandFn, lambda_norm, wiener_integral
from generators.lrd_gauss import GaussianPath, scaling_factor
from integrators.hermite_core import CoefficientSampler

logger = logging.getLogger(__name__)

SAMPLES_PER_UNIT = 20
MAX_PATH_STEP = 1.0 / SAMPLES_PER_UNIT


class SourceKind(str, Enum):
    CONST = "const"
    LINEAR = "linear"
    SIN = "sin"


class SourceSpec(BaseModel):
    """f(x) = scale, scale·x or scale·sin(x)."""

    kind: SourceKind = SourceKind.CONST
    scale: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == SourceKind.CONST:
            return np.full_like(x, self.scale)
        if self.kind == SourceKind.LINEAR:
            return self.scale * x
        return self.scale * np.sin(x)

    def exact_antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == SourceKind.CONST:
            return self.scale * x
        if self.kind == SourceKind.LINEAR:
            return 0.5 * self.scale * x * x
        return self.scale * (1.0 - np.cos(x))


def antiderivative_F(f: Callable, x, n_panels: int = 1000):
    """F(x) = ∫_0^x f by composite Simpson; F(0) = 0."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(arr)
    for i, xi in enumerate(arr):
        if xi == 0.0:
            continue
        t = np.linspace(0.0, xi, 2 * n_panels + 1)
        out[i] = integrate.simpson(np.asarray(f(t), dtype=float), x=t)
    return out if np.ndim(x) else float(out[0])


def _half_grid_antiderivative(f: Callable, M: int) -> np.ndarray:
    """F at jh/2, j = 0..2M, Simpson on each half cell."""
    h = 1.0 / M
    z = 0.5 * h * np.arange(2 * M + 1)
    quarter = z[:-1] + 0.25 * h
    fz = np.asarray(f(z), dtype=float)
    fq = np.asarray(f(quarter), dtype=float)
    pieces = (h / 12.0) * (fz[:-1] + 4.0 * fq + fz[1:])
    return np.concatenate([[0.0], np.cumsum(pieces)])


def grid_size_for(epsilon: float, samples_per_unit: int = SAMPLES_PER_UNIT) -> int:
    return int(math.ceil(samples_per_unit / epsilon - 1e-9))


class ProblemSpec(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    source: SourceSpec = Field(default_factory=SourceSpec)
    b: float = 0.0
    epsilon: float
    coeff: CoefficientSampler
    quad_grid: Optional[int] = None

    @model_validator(mode="after")
    def _check_ranges(self):
        if not self.epsilon > 0:
            raise ParameterRangeError("epsilon", self.epsilon, "epsilon > 0")
        if self.quad_grid is not None and self.quad_grid < 2:
            raise ParameterRangeError("quad_grid", self.quad_grid, "quad_grid >= 2")
        return self

    @property
    def M(self) -> int:
        return self.quad_grid if self.quad_grid is not None else grid_size_for(self.epsilon)

    @property
    def h(self) -> float:
        return 1.0 / self.M

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(self.M + 1)

    @property
    def a_star(self) -> float:
        return effective_coefficient(self.coeff)


def path_request(spec: ProblemSpec) -> Tuple[float, int]:
    """(delta, n) of a g-path aligned with the cells of spec."""
    return 1.0 / (spec.epsilon * spec.M), spec.M


class SolutionPair(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: np.ndarray
    u_eps: np.ndarray
    u_bar: np.ndarray
    c_eps: float
    c_star: float
    a_star: float
    inv_a: np.ndarray
    F_mid: np.ndarray

    @property
    def corrector(self) -> np.ndarray:
        return self.u_eps - self.u_bar

    @property
    def h(self) -> float:
        return 1.0 / len(self.inv_a)

    def columns(self, U_eps: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
        cols = {"x": self.x, "u_eps": self.u_eps, "u_bar": self.u_bar, "corrector": self.corrector}
        if U_eps is not None:
            cols["U_eps"] = U_eps
        return cols


class CorrectorDecomposition(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: np.ndarray
    U_eps: np.ndarray
    r_eps: np.ndarray
    rho_eps: float
    X_eps: float
    a_star: float

    @property
    def remainder(self) -> np.ndarray:
        """ℛ^ε = (r^ε + ρ^ε x / a*) / 𝔛(ε)."""
        return (self.r_eps + self.rho_eps * self.x / self.a_star) / self.X_eps

    def reconstruction_error(self, pair: SolutionPair) -> float:
        rescaled = pair.corrector / self.X_eps
        return float(np.max(np.abs(rescaled - (self.U_eps + self.remainder))))


def effective_coefficient(coeff: CoefficientSampler) -> float:
    """a* = 1/E[1/a(0)]; exact unless Φ has a nonzero mean."""
    rank = coeff.phi.declared_rank
    if rank is None or rank >= 1:
        return coeff.a_star
    return 1.0 / (coeff.phi.expansion.coefficient(0) + 1.0 / coeff.a_star)


def _cell_samples(spec: ProblemSpec, path: Optional[GaussianPath]) -> np.ndarray:
    M = spec.M
    if path is None:
        if not coeff_is_deterministic(spec.coeff):
            raise CoverageError("a random coefficient needs a g-path")
        return np.zeros(M)
    target = 1.0 / (spec.epsilon * M)
    if abs(path.delta - target) > 1e-9 * target:
        raise ResolutionError(
            f"path step {path.delta:.6g} does not match the cell width in fast units 1/(epsilon*M) = {target:.6g}"
        )
    if path.delta > MAX_PATH_STEP * (1 + 1e-12):
        raise ResolutionError(
            f"path step {path.delta:.6g} resolves fewer than {SAMPLES_PER_UNIT} samples per unit of x/epsilon"
        )
    if len(path.values) < M:
        raise CoverageError(f"path has {len(path.values)} samples, [0, 1/epsilon] needs {M}")
    return path.values[:M]


def coeff_is_deterministic(coeff: CoefficientSampler) -> bool:
    return coeff.is_deterministic


def solve_homogenized(spec: ProblemSpec, F_mid: Optional[np.ndarray] = None) -> Tuple[np.ndarray, float]:
    """ū(x) = c* x / a* - ∫_0^x F / a* with c* = a* b + ∫_0^1 F."""
    if F_mid is None:
        F_mid = _half_grid_antiderivative(spec.source, spec.M)[1::2]
    a_star = spec.a_star
    G = np.concatenate([[0.0], spec.h * np.cumsum(F_mid)])
    c_star = a_star * spec.b + G[-1]
    u_bar = (c_star * spec.nodes - G) / a_star
    u_bar[-1] = spec.b
    return u_bar, c_star


def solve_random(spec: ProblemSpec, path: Optional[GaussianPath]) -> SolutionPair:
    """
    u^ε(x) = c^ε ∫_0^x 1/a(y/ε) dy - ∫_0^x F(y)/a(y/ε) dy,
    c^ε = (b + ∫_0^1 F/a) / ∫_0^1 1/a, by the midpoint rule on the cells.
    """
    g = _cell_samples(spec, path)
    inv_a = np.asarray(spec.coeff.inverse_a(g), dtype=float)
    if np.any(inv_a <= 0) or not np.all(np.isfinite(inv_a)):
        raise ParameterRangeError("a", "non-positive", "a(x) > 0 on every cell")
    F_mid = _half_grid_antiderivative(spec.source, spec.M)[1::2]
    h = spec.h
    I1 = np.concatenate([[0.0], h * np.cumsum(inv_a)])
    IF = np.concatenate([[0.0], h * np.cumsum(F_mid * inv_a)])
    c_eps = (spec.b + IF[-1]) / I1[-1]
    u_eps = c_eps * I1 - IF
    u_bar, c_star = solve_homogenized(spec, F_mid)
    logger.debug("solved eps=%g M=%d c_eps=%.6g c_star=%.6g", spec.epsilon, spec.M, c_eps, c_star)
    return SolutionPair(
        x=spec.nodes,
        u_eps=u_eps,
        u_bar=u_bar,
        c_eps=float(c_eps),
        c_star=float(c_star),
        a_star=spec.a_star,
        inv_a=inv_a,
        F_mid=F_mid,
    )


def flux(pair: SolutionPair, inv_a: Optional[np.ndarray] = None) -> np.ndarray:
    """a(x/ε) u^ε' on each cell; equals c^ε - F at the cell midpoints."""
    inv_a = pair.inv_a if inv_a is None else inv_a
    return np.diff(pair.u_eps) / (pair.h * inv_a)


def residual_check(pair: SolutionPair, spec: ProblemSpec, path: Optional[GaussianPath]) -> float:
    """
    max over interior nodes of |-(flux_i - flux_{i-1})/h - f(x_i)|, with the
    coefficient rebuilt from the path. Decays like h² under grid refinement.
    """
    inv_a = np.asarray(spec.coeff.inverse_a(_cell_samples(spec, path)), dtype=float)
    if len(inv_a) != len(pair.inv_a):
        raise CoverageError(f"solution has {len(pair.inv_a)} cells, the problem {len(inv_a)}")
    q = flux(pair, inv_a)
    interior = pair.x[1:-1]
    residual = -np.diff(q) / pair.h - np.asarray(spec.source(interior), dtype=float)
    return float(np.max(np.abs(residual))) if residual.size else 0.0


def flux_defect(pair: SolutionPair) -> float:
    """max |flux + F_mid - c^ε|."""
    return float(np.max(np.abs(flux(pair) + pair.F_mid - pair.c_eps)))


def limit_kernel(x: float, y, spec: ProblemSpec):
    """F(x, y) = [c* - F(y)] 1_{[0,x]}(y) + x (F(y) - c*) 1_{[0,1]}(y)."""
    if not 0.0 <= x <= 1.0:
        raise ParameterRangeError("x", x, "0 <= x <= 1")
    y_arr = np.asarray(y, dtype=float)
    _, c_star = solve_homogenized(spec)
    Fy = antiderivative_F(spec.source, np.clip(y_arr, 0.0, 1.0), n_panels=200)
    inside = (y_arr >= 0.0) & (y_arr <= 1.0)
    out = np.where(inside & (y_arr <= x), c_star - Fy, 0.0) + np.where(inside, x * (Fy - c_star), 0.0)
    return out if out.ndim else float(out)


def make_limit_kernel(spec: ProblemSpec, x: float, n: int = 2000) -> IntegrandFn:
    """Step projection of F(x, ·) on [0, 1] with a breakpoint at x."""
    grid = np.union1d(np.linspace(0.0, 1.0, n + 1), [x])
    mid = 0.5 * (grid[:-1] + grid[1:])
    return IntegrandFn.step(grid, limit_kernel(x, mid, spec))


def limit_integral(spec: ProblemSpec, x: float, path) -> np.ndarray:
    """∫_0^1 F(x, y) dZ(y) along a Hermite path or ensemble."""
    if x == 0.0:
        return 0.0 * path.values[..., 0]
    _, c_star = solve_homogenized(spec)

    def near(y):
        return c_star - spec.source.exact_antiderivative(y)

    def whole(y):
        return spec.source.exact_antiderivative(y) - c_star

    return wiener_integral(path, IntegrandFn.continuous(near, 0.0, x)) + x * wiener_integral(
        path, IntegrandFn.continuous(whole, 0.0, 1.0)
    )


def limit_variance(spec: ProblemSpec, x: float, H: float, V_m: float, m: int) -> float:
    """(V_m/m!)² ‖F(x, ·)‖²_{Λ^H}."""
    if x == 0.0:
        return 0.0
    return (V_m / math.factorial(m)) ** 2 * lambda_norm(make_limit_kernel(spec, x), H)


def decompose(spec: ProblemSpec, path: Optional[GaussianPath], pair: SolutionPair) -> CorrectorDecomposition:
    """
    𝒰^ε(x) = 𝔛^{-1} ∫ F(x, y) q(y/ε) dy,  r^ε = (c^ε - c*) ∫_0^x q(y/ε) dy,
    ρ^ε = a* (c* Q(1)² - Q(1) ∫_0^1 F q) / ∫_0^1 1/a,  with q = 1/a - 1/a*.
    """
    if len(pair.inv_a) != spec.M:
        raise ParameterRangeError("pair", len(pair.inv_a), f"a solution on the {spec.M} cells of spec")
    a_star = pair.a_star
    h = spec.h
    q = pair.inv_a - 1.0 / a_star
    Q = np.concatenate([[0.0], h * np.cumsum(q)])
    QF = np.concatenate([[0.0], h * np.cumsum(pair.F_mid * q)])
    x = pair.x
    if coeff_is_deterministic(spec.coeff) and path is None:
        X_eps = 1.0
    else:
        kernel = path.kernel
        X_eps = scaling_factor(kernel, spec.epsilon)
    c_star = pair.c_star
    U_eps = (c_star * Q - QF + x * (QF[-1] - c_star * Q[-1])) / X_eps
    r_eps = (pair.c_eps - c_star) * Q
    I1_total = h * float(np.sum(pair.inv_a))
    rho_eps = a_star * (c_star * Q[-1] ** 2 - QF[-1] * Q[-1]) / I1_total
    return CorrectorDecomposition(x=x, U_eps=U_eps, r_eps=r_eps, rho_eps=float(rho_eps), X_eps=X_eps, a_star=a_star)


def probe_indices(spec: ProblemSpec, probes) -> np.ndarray:
    idx = np.rint(np.asarray(probes, dtype=float) * spec.M).astype(int)
    if np.any(np.abs(idx / spec.M - np.asarray(probes)) > 1e-9):
        raise CoverageError(f"probe points {list(probes)} are not nodes of the {spec.M}-cell grid")
    return idx
