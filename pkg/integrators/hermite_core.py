# integrators/hermite_core.py

"""
Hermite polynomials, Wiener-chaos expansions under the standard Gaussian
measure ν, the Ornstein-Uhlenbeck semigroup, and constructions of bounded
functions Φ with a prescribed Hermite rank.

Expansions follow the convention Φ = Σ_q (V_q / q!) H_q with
V_q = ∫ Φ H_q dν and probabilists' Hermite polynomials H_q.
"""

import logging
import math
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import hermite_e
from pydantic import BaseModel, ConfigDict
from scipy.interpolate import CubicSpline

from errors import ConditioningError, ConstructionError, InputDomainError, ParameterRangeError

logger = logging.getLogger(__name__)

GH_ORDER = 200
TRUNCATION_Q = 30
RANK_THRESHOLD = 1e-8
CONDITION_LIMIT = 1e12
SUP_GRID = np.linspace(-60.0, 60.0, 240_001)

RealFn = Callable[[np.ndarray], np.ndarray]


@lru_cache(maxsize=8)
def gauss_hermite(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights with Σ w_i f(x_i) ≈ ∫ f dν."""
    nodes, weights = hermite_e.hermegauss(order)
    weights = weights / math.sqrt(2.0 * math.pi)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def hermite_eval(q: int, x):
    """H_q(x) by H_{k+1} = x H_k - k H_{k-1}."""
    if q < 0:
        raise ParameterRangeError("q", q, "q >= 0")
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), x.copy()
    if q == 0:
        return prev if prev.ndim else float(prev)
    for k in range(1, q):
        prev, cur = cur, x * cur - k * prev
    return cur if cur.ndim else float(cur)


def orthonormal_hermite_table(Q: int, x) -> np.ndarray:
    """Rows H_q(x)/sqrt(q!) for q = 0..Q, by the normalised three-term recurrence."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    table = np.empty((Q + 1, x.size))
    table[0] = 1.0
    if Q >= 1:
        table[1] = x
    for k in range(1, Q):
        table[k + 1] = (x * table[k] - math.sqrt(k) * table[k - 1]) / math.sqrt(k + 1)
    return table


def _sqrt_factorials(Q: int) -> np.ndarray:
    return np.sqrt(np.array([float(math.factorial(q)) for q in range(Q + 1)]))


def hermite_table(Q: int, x) -> np.ndarray:
    """Rows H_0(x)..H_Q(x)."""
    return orthonormal_hermite_table(Q, x) * _sqrt_factorials(Q)[:, None]


def _evaluate(phi: RealFn, x: np.ndarray) -> np.ndarray:
    values = np.asarray(phi(x), dtype=float)
    if values.shape != x.shape:
        values = np.array([float(phi(v)) for v in x])
    return values


class HermiteExpansion(BaseModel):
    coeffs: List[float]
    quadrature_order: int
    l2_norm: float

    @property
    def Q(self) -> int:
        return len(self.coeffs) - 1

    def coefficient(self, q: int) -> float:
        return self.coeffs[q] if q <= self.Q else 0.0

    def rank(self, threshold: float = RANK_THRESHOLD) -> Optional[int]:
        """Smallest q with |V_q|/sqrt(q!) above threshold · ‖Φ‖_{L²(ν)}; None for Φ ≡ 0."""
        cutoff = threshold * self.l2_norm
        for q, v in enumerate(self.normalised()):
            if abs(v) > cutoff:
                return q
        return None

    def parseval_sum(self) -> float:
        return sum(v * v / math.factorial(q) for q, v in enumerate(self.coeffs))

    def parseval_defect(self) -> float:
        """‖Φ‖² - Σ V_q²/q!; nonnegative up to quadrature error."""
        return self.l2_norm ** 2 - self.parseval_sum()

    def normalised(self) -> np.ndarray:
        """V_q / sqrt(q!): coefficients in the orthonormal basis."""
        return np.array([v / math.sqrt(math.factorial(q)) for q, v in enumerate(self.coeffs)])

    def columns(self):
        return {"q": np.arange(self.Q + 1), "V_q": np.asarray(self.coeffs)}


def expand(phi: RealFn, Q: int = TRUNCATION_Q, quadrature_order: Optional[int] = None) -> HermiteExpansion:
    order = max(quadrature_order or GH_ORDER, 2 * Q)
    nodes, weights = gauss_hermite(order)
    values = _evaluate(phi, np.asarray(nodes))
    if not np.all(np.isfinite(values)):
        bad = nodes[~np.isfinite(values)]
        raise InputDomainError(f"phi is not finite at {bad.size} quadrature node(s), e.g. x={bad[0]:.6g}")
    weighted = weights * values
    # V_q = sqrt(q!) <Φ, H_q/sqrt(q!)>; roundoff in V_q scales like sqrt(q!)
    coeffs = (orthonormal_hermite_table(Q, nodes) @ weighted) * _sqrt_factorials(Q)
    l2 = math.sqrt(max(float(weighted @ values), 0.0))
    return HermiteExpansion(coeffs=[float(c) for c in coeffs], quadrature_order=order, l2_norm=l2)


def l2_norm(phi: RealFn, quadrature_order: int = GH_ORDER) -> float:
    nodes, weights = gauss_hermite(quadrature_order)
    values = _evaluate(phi, np.asarray(nodes))
    return math.sqrt(float(weights @ values ** 2))


class RankedFunction(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    evaluator: Callable
    expansion: HermiteExpansion
    declared_rank: Optional[int]
    sup_norm_bound: Optional[float] = None
    name: str = "custom"
    fast: Optional[Callable] = None

    def __call__(self, x):
        return self.evaluator(np.asarray(x, dtype=float))

    def evaluate_fast(self, x):
        fn = self.fast if self.fast is not None else self.evaluator
        return fn(np.asarray(x, dtype=float))

    @property
    def rank(self) -> Optional[int]:
        return self.declared_rank

    @property
    def leading_coefficient(self) -> float:
        """V_m / m! with m the declared rank."""
        if self.declared_rank is None:
            return 0.0
        m = self.declared_rank
        return self.expansion.coefficient(m) / math.factorial(m)

    def tabulated(self, lo: float = -12.0, hi: float = 12.0, n: int = 4801) -> Callable:
        """Cubic-spline evaluator on [lo, hi], clamped outside."""
        grid = np.linspace(lo, hi, n)
        spline = CubicSpline(grid, _evaluate(self.evaluator, grid))

        def fast(x):
            return spline(np.clip(x, lo, hi))

        return fast

    def check_invariants(self, grid: Optional[np.ndarray] = None) -> None:
        exp = self.expansion
        scale = max(1.0, exp.l2_norm)
        if self.declared_rank is not None:
            m = self.declared_rank
            low = [abs(exp.coefficient(q)) for q in range(m)]
            if any(v >= 1e-8 * scale for v in low):
                raise ConstructionError(f"coefficients below order {m} are not negligible: {low}")
            if abs(exp.coefficient(m)) <= RANK_THRESHOLD * exp.l2_norm:
                raise ConstructionError(f"V_{m} vanishes")
        if self.sup_norm_bound is not None:
            pts = SUP_GRID if grid is None else grid
            peak = float(np.max(np.abs(self.evaluate_fast(pts))))
            if peak > self.sup_norm_bound * (1 + 1e-12):
                raise ConstructionError(f"sup |Φ| = {peak:.6g} exceeds bound {self.sup_norm_bound:.6g}")


def ou_semigroup(phi: RealFn, t: float, x, quadrature_order: int = GH_ORDER):
    """P_t φ(x) = ∫ φ(e^{-t} x + sqrt(1 - e^{-2t}) y) ν(dy)."""
    if t < 0:
        raise ParameterRangeError("t", t, "t >= 0")
    x_arr = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x_arr).ravel()
    if t == 0:
        out = _evaluate(phi, flat)
    else:
        nodes, weights = gauss_hermite(quadrature_order)
        decay, spread = math.exp(-t), math.sqrt(-math.expm1(-2.0 * t))
        out = np.empty_like(flat)
        chunk = 2048
        for start in range(0, flat.size, chunk):
            block = flat[start: start + chunk]
            args = decay * block[:, None] + spread * nodes[None, :]
            values = _evaluate(phi, args.ravel()).reshape(args.shape)
            if not np.all(np.isfinite(values)):
                raise InputDomainError("phi is not finite at an Ornstein-Uhlenbeck quadrature node")
            out[start: start + chunk] = values @ weights
    out = out.reshape(x_arr.shape)
    return out if out.ndim else float(out)


def vandermonde_weights(nodes: Sequence[float], condition_limit: float = CONDITION_LIMIT) -> np.ndarray:
    """
    Solve Σ_l b_l e^{-k t_l} = 0 (k < m) and Σ_l b_l e^{-m t_l} = 1 over
    m + 1 distinct nonnegative nodes t_0..t_m.
    """
    t = np.asarray(nodes, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ParameterRangeError("nodes", list(nodes), "at least two nodes")
    if np.any(t < 0) or np.unique(t).size != t.size:
        raise ParameterRangeError("nodes", list(nodes), "distinct nonnegative nodes")
    m = t.size - 1
    system = np.exp(-np.outer(np.arange(m + 1), t))
    cond = float(np.linalg.cond(system))
    if not np.isfinite(cond) or cond > condition_limit:
        raise ConditioningError(cond, condition_limit)
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    b = np.linalg.solve(system, rhs)
    logger.debug("vandermonde system m=%d cond=%.3e residual=%.2e", m, cond, vandermonde_residual(t, b))
    return b


def vandermonde_residual(nodes: Sequence[float], b: np.ndarray) -> float:
    t = np.asarray(nodes, dtype=float)
    m = t.size - 1
    system = np.exp(-np.outer(np.arange(m + 1), t))
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    return float(np.max(np.abs(system @ b - rhs)))


def shifted_logistic(x):
    return 0.5 * (1.0 + np.tanh(0.5 * (np.asarray(x, dtype=float) - 0.5)))


def _bounded_range(fn: RealFn) -> Tuple[float, float]:
    values = _evaluate(fn, SUP_GRID)
    if not np.all(np.isfinite(values)):
        raise InputDomainError("function is not finite on the sup-norm grid")
    return float(values.min()), float(values.max())


def construct_rank_m(
    m: int,
    a_star: float,
    psi: Optional[RealFn] = None,
    nodes: Optional[Sequence[float]] = None,
    tau: float = 1.0,
    Q: int = TRUNCATION_Q,
    quadrature_order: int = GH_ORDER,
) -> RankedFunction:
    """Φ = Σ_l b_l P_{t_l} ψ with ψ rescaled into [0, 1/(2a* Σ|b_l|)]."""
    if m < 1:
        raise ParameterRangeError("m", m, "m >= 1")
    if a_star <= 0:
        raise ParameterRangeError("a_star", a_star, "a_star > 0")
    t = np.asarray(nodes if nodes is not None else tau * np.arange(m + 1), dtype=float)
    if t.size != m + 1:
        raise ParameterRangeError("nodes", list(t), f"exactly m + 1 = {m + 1} nodes")
    b = vandermonde_weights(t)
    ceiling = 1.0 / (2.0 * a_star * float(np.sum(np.abs(b))))

    raw = psi if psi is not None else shifted_logistic
    lo, hi = _bounded_range(raw)
    if hi - lo <= 0:
        raise ConstructionError("psi is constant; its m-th Hermite coefficient vanishes")

    def psi_scaled(x):
        return np.clip((_evaluate(raw, np.asarray(x, dtype=float)) - lo) / (hi - lo), 0.0, 1.0) * ceiling

    psi_expansion = expand(psi_scaled, Q, quadrature_order)
    a_m = psi_expansion.coefficient(m)
    if abs(a_m) <= RANK_THRESHOLD * psi_expansion.l2_norm:
        raise ConstructionError(
            f"psi has vanishing coefficient of order {m} (|V_{m}| = {abs(a_m):.3e}); supply a different psi"
        )

    def phi(x):
        x = np.asarray(x, dtype=float)
        return sum(b_l * ou_semigroup(psi_scaled, t_l, x, quadrature_order) for b_l, t_l in zip(b, t))

    expansion = expand(phi, Q, quadrature_order)
    found = expansion.rank()
    if found != m:
        raise ConstructionError(f"constructed function has rank {found}, expected {m}")
    ranked = RankedFunction(
        evaluator=phi,
        expansion=expansion,
        declared_rank=m,
        sup_norm_bound=1.0 / (2.0 * a_star),
        name="ou_vandermonde",
    )
    ranked.fast = ranked.tabulated()
    logger.info("built rank-%d function by OU/Vandermonde: sum|b|=%.4g V_m=%.4e", m, np.sum(np.abs(b)), a_m)
    return ranked


def _trig(kind: str, freq: float, phase: float) -> RealFn:
    fn = np.sin if kind == "sin" else np.cos

    def h(x):
        return fn(freq * np.asarray(x, dtype=float) + phase)

    return h


DEFAULT_BOUNDED_FAMILY: List[RealFn] = [
    _trig("sin", 1.0, 0.0),
    _trig("cos", 1.0, 0.0),
    _trig("sin", 2.0, 0.5),
    _trig("cos", 3.0, -0.7),
    _trig("sin", 4.0, 1.1),
]


def _combination(coefs: Sequence[float], funcs: Sequence[RealFn]) -> RealFn:
    def h(x):
        x = np.asarray(x, dtype=float)
        return sum(c * f(x) for c, f in zip(coefs, funcs))

    return h


def construct_rank_m_bounded(
    m: int,
    a_star: float,
    funcs: Optional[Sequence[RealFn]] = None,
    Q: int = TRUNCATION_Q,
    quadrature_order: int = GH_ORDER,
) -> RankedFunction:
    """
    Bounded Φ of rank m from m bounded functions: centre them, then for
    j = 1..m-1 eliminate the order-j coefficient against the family member
    with the largest |V_j|. Φ = Ψ / (2a* ‖Ψ‖_∞).
    """
    if m < 1:
        raise ParameterRangeError("m", m, "m >= 1")
    if a_star <= 0:
        raise ParameterRangeError("a_star", a_star, "a_star > 0")
    family = list(funcs) if funcs is not None else DEFAULT_BOUNDED_FAMILY[:m]
    if len(family) < m:
        raise ConstructionError(f"need at least {m} bounded functions, got {len(family)}")
    family = family[:m]

    # members are (evaluator, coefficient vector); expansions combine linearly
    members = []
    for h in family:
        exp = expand(h, Q, quadrature_order)
        mean = exp.coefficient(0)
        centred = _combination([1.0, -mean], [h, lambda x: np.ones_like(np.asarray(x, dtype=float))])
        coeffs = np.asarray(exp.coeffs)
        coeffs[0] = 0.0
        members.append((centred, coeffs))

    for j in range(1, m):
        pivot_idx = int(np.argmax([abs(c[j]) for _, c in members]))
        pivot_fn, pivot_c = members[pivot_idx]
        if abs(pivot_c[j]) == 0.0:
            reduced = [mem for i, mem in enumerate(members) if i != pivot_idx]
        else:
            reduced = []
            for i, (fn, c) in enumerate(members):
                if i == pivot_idx:
                    continue
                reduced.append((_combination([pivot_c[j], -c[j]], [fn, pivot_fn]), pivot_c[j] * c - c[j] * pivot_c))
        members = reduced

    psi, _ = members[0]
    psi_expansion = expand(psi, Q, quadrature_order)
    if abs(psi_expansion.coefficient(m)) <= RANK_THRESHOLD * max(psi_expansion.l2_norm, 1e-300):
        raise ConstructionError(f"degenerate family: the combined function has no order-{m} component")

    lo, hi = _bounded_range(psi)
    sup = max(abs(lo), abs(hi)) * (1.0 + 1e-6)
    scale = 1.0 / (2.0 * a_star * sup)

    def phi(x):
        return scale * psi(np.asarray(x, dtype=float))

    expansion = expand(phi, Q, quadrature_order)
    found = expansion.rank()
    if found != m:
        raise ConstructionError(f"constructed function has rank {found}, expected {m}")
    return RankedFunction(
        evaluator=phi,
        expansion=expansion,
        declared_rank=m,
        sup_norm_bound=1.0 / (2.0 * a_star),
        name="rank2_bounded" if m == 2 else "inductive_bounded",
    )


def construct_rank_2_bounded(
    a_star: float,
    h1: Optional[RealFn] = None,
    h2: Optional[RealFn] = None,
    Q: int = TRUNCATION_Q,
    quadrature_order: int = GH_ORDER,
) -> RankedFunction:
    """Ψ = b_1 (h_1 - ∫h_1 dν) - a_1 (h_2 - ∫h_2 dν), Φ = Ψ / (2a* ‖Ψ‖_∞)."""
    h1 = h1 if h1 is not None else DEFAULT_BOUNDED_FAMILY[0]
    h2 = h2 if h2 is not None else DEFAULT_BOUNDED_FAMILY[1]
    return construct_rank_m_bounded(2, a_star, [h1, h2], Q, quadrature_order)


def pure_hermite(m: int, Q: int = TRUNCATION_Q, quadrature_order: int = GH_ORDER) -> RankedFunction:
    """Φ = H_m: unbounded, admissible for oscillatory integrals only."""
    if m < 1:
        raise ParameterRangeError("m", m, "m >= 1")

    def phi(x):
        return hermite_eval(m, np.asarray(x, dtype=float))

    return RankedFunction(
        evaluator=phi,
        expansion=expand(phi, max(Q, m), quadrature_order),
        declared_rank=m,
        sup_norm_bound=None,
        name="pure_hermite",
    )


def constant_function(c: float, Q: int = TRUNCATION_Q) -> RankedFunction:
    def phi(x):
        return np.full_like(np.asarray(x, dtype=float), c)

    expansion = expand(phi, Q)
    return RankedFunction(
        evaluator=phi,
        expansion=expansion,
        declared_rank=expansion.rank(),
        sup_norm_bound=abs(c),
        name="constant",
    )


class CoefficientSampler(BaseModel):
    """a(x) = (Φ(g(x)) + 1/a*)^{-1}."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    phi: RankedFunction
    a_star: float

    def q(self, g_values) -> np.ndarray:
        return self.phi.evaluate_fast(g_values)

    def inverse_a(self, g_values) -> np.ndarray:
        return self.q(g_values) + 1.0 / self.a_star

    def a(self, g_values) -> np.ndarray:
        return 1.0 / self.inverse_a(g_values)

    def bounds(self) -> Tuple[float, float]:
        """Uniform bounds of a from ‖Φ‖_∞."""
        s = self.phi.sup_norm_bound or 0.0
        return 1.0 / (1.0 / self.a_star + s), 1.0 / (1.0 / self.a_star - s)

    @property
    def is_deterministic(self) -> bool:
        rank = self.phi.declared_rank
        return rank is None or (rank == 0 and self.phi.name == "constant")


def coefficient_sampler(phi: RankedFunction, a_star: float) -> CoefficientSampler:
    if a_star <= 0:
        raise ParameterRangeError("a_star", a_star, "a_star > 0")
    if phi.sup_norm_bound is None:
        raise ConstructionError(f"{phi.name} is unbounded; the coefficient a would not be uniformly positive")
    if phi.sup_norm_bound >= 1.0 / a_star:
        raise ConstructionError(
            f"sup|Φ| = {phi.sup_norm_bound:.6g} must be < 1/a* = {1.0 / a_star:.6g}"
        )
    return CoefficientSampler(phi=phi, a_star=a_star)
