# config_helpers.py

import hashlib
import json
import logging
import math
import os
from enum import Enum
from pathlib import Path
from typing import Dict, List, Literal, Optional, Type, TypeVar

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, Field, model_validator

from generators.hermite_process import HermiteProcessConfig, IntegrandFn
from generators.lrd_gauss import KernelSpec, SlowVaryingSpec, required_window
from integrators.hermite_core import (
    RankedFunction,
    constant_function,
    construct_rank_2_bounded,
    construct_rank_m,
    construct_rank_m_bounded,
    pure_hermite,
)
from integrators.homogenize1d import SourceKind, SourceSpec

logger = logging.getLogger(__name__)

VERSION = "0.3.0"

PATH_STREAM = 0
LIMIT_STREAM = 1
TEST_STREAM = 2

ModelT = TypeVar("ModelT", bound=BaseModel)


class Settings(BaseModel):
    threads: int
    log_level: str = "WARNING"


def load_settings() -> Settings:
    """Read OSCILLAB_* variables, after loading a .env file if present."""
    load_dotenv()
    threads = os.getenv("OSCILLAB_THREADS")
    return Settings(
        threads=max(1, int(threads)) if threads else (os.cpu_count() or 1),
        log_level=os.getenv("OSCILLAB_LOG_LEVEL", "WARNING").upper(),
    )


def load_config(path: Optional[Path], model: Type[ModelT], overrides: Optional[Dict] = None) -> ModelT:
    """Config file (if any) with non-None overrides on top."""
    data = {}
    if path is not None:
        logger.info("loading configuration from %s", path)
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return model(**data)


def save_config(config: BaseModel, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.model_dump(mode="json"), f, indent=2)
    return path


def config_hash(config: BaseModel) -> str:
    payload = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def replica_seed(seed_base: int, stream: int, index: int) -> int:
    """Counter-based seed: depends only on (seed_base, stream, index)."""
    state = np.random.SeedSequence([seed_base, stream, index]).generate_state(1, np.uint64)[0]
    return int(state)


# ---------------------------------------------------------------------------
# Φ and kernels
# ---------------------------------------------------------------------------

class PsiName(str, Enum):
    SHIFTED_LOGISTIC = "shifted_logistic"
    ARCTAN = "arctan"
    GAUSSIAN_BUMP = "gaussian_bump"


PSI_FUNCTIONS = {
    PsiName.SHIFTED_LOGISTIC: None,
    PsiName.ARCTAN: lambda x: np.arctan(np.asarray(x, dtype=float) - 0.3),
    PsiName.GAUSSIAN_BUMP: lambda x: np.exp(-0.5 * (np.asarray(x, dtype=float) - 0.7) ** 2),
}


class PhiConfig(BaseModel):
    method: Literal["pure_hermite", "rank2_bounded", "inductive_bounded", "ou_vandermonde", "constant"] = "inductive_bounded"
    m: int = Field(2, ge=1)
    a_star: float = Field(1.0, gt=0)
    nodes: Optional[List[float]] = None
    psi: PsiName = PsiName.SHIFTED_LOGISTIC
    value: float = 0.0


def build_phi(config: PhiConfig) -> RankedFunction:
    if config.method == "pure_hermite":
        return pure_hermite(config.m)
    if config.method == "rank2_bounded":
        return construct_rank_2_bounded(config.a_star)
    if config.method == "inductive_bounded":
        return construct_rank_m_bounded(config.m, config.a_star)
    if config.method == "ou_vandermonde":
        return construct_rank_m(config.m, config.a_star, psi=PSI_FUNCTIONS[config.psi], nodes=config.nodes)
    return constant_function(config.value)


class KernelConfig(BaseModel):
    m: int = Field(1, ge=1)
    h0: float = 0.75
    slowly_varying: SlowVaryingSpec = Field(default_factory=SlowVaryingSpec)

    def spec(self) -> KernelSpec:
        return KernelSpec(m=self.m, h0=self.h0, slowly_varying=self.slowly_varying)

    @model_validator(mode="after")
    def _check_ranges(self):
        self.spec()
        return self


def aligned_window(kernel: KernelSpec, delta: float, tolerance: float) -> float:
    """required_window rounded up to a multiple of delta."""
    return delta * math.ceil(required_window(kernel, tolerance) / delta)


class PathConfig(KernelConfig):
    delta: float = Field(0.05, gt=0)
    n: int = Field(1000, ge=1)
    window: Optional[float] = None
    window_tolerance: float = Field(1e-3, gt=0)
    scheme: Literal["cell_mass", "riemann"] = "cell_mass"
    seed: int = 0
    paths: int = Field(1, ge=1)

    def seeds(self) -> List[int]:
        """The seed itself for one path, counter-based streams for several."""
        if self.paths == 1:
            return [self.seed]
        return [replica_seed(self.seed, PATH_STREAM, i) for i in range(self.paths)]

    def resolved_window(self) -> float:
        if self.window is not None:
            return self.window
        return aligned_window(self.spec(), self.delta, self.window_tolerance)


# ---------------------------------------------------------------------------
# Solver and experiments
# ---------------------------------------------------------------------------

class SolveConfig(KernelConfig):
    m: int = Field(2, ge=1)
    h0: float = 0.8
    epsilon: float = Field(0.05, gt=0)
    b: float = 0.0
    f: SourceKind = SourceKind.CONST
    f_scale: float = 1.0
    a_star: float = Field(1.0, gt=0)
    phi_method: Literal["rank2_bounded", "inductive_bounded", "ou_vandermonde", "constant"] = "inductive_bounded"
    phi_value: float = 0.0
    grid: Optional[int] = None
    window_tolerance: float = Field(1e-2, gt=0)
    seed: int = 0

    def phi_config(self) -> PhiConfig:
        return PhiConfig(method=self.phi_method, m=self.m, a_star=self.a_star, value=self.phi_value)

    def source(self) -> SourceSpec:
        return SourceSpec(kind=self.f, scale=self.f_scale)


class IntegrandConfig(BaseModel):
    """Test function h on [0, 1]: a named shape or explicit step levels."""

    name: Literal["one", "half_indicator", "sin_pi", "two_steps", "step"] = "one"
    breakpoints: Optional[List[float]] = None
    levels: Optional[List[float]] = None

    def build(self) -> IntegrandFn:
        if self.name == "one":
            return IntegrandFn.indicator(0.0, 1.0)
        if self.name == "half_indicator":
            return IntegrandFn.indicator(0.0, 0.5)
        if self.name == "two_steps":
            return IntegrandFn.step([0.0, 0.5, 1.0], [1.0, -1.0])
        if self.name == "sin_pi":
            return IntegrandFn.continuous(lambda x: np.sin(np.pi * np.asarray(x, dtype=float)), 0.0, 1.0)
        if not self.breakpoints or self.levels is None:
            raise ValueError("a step integrand needs breakpoints and levels")
        return IntegrandFn.step(self.breakpoints, self.levels)


class Thresholds(BaseModel):
    ks_alpha: float = 0.01
    energy_alpha: float = 0.01
    variance_tolerance: float = 0.15
    se_multiple: float = 3.0
    allowed_inversions: int = 1


class HermiteGridConfig(BaseModel):
    n_grid: int = Field(100, ge=4)
    noise_step: Optional[float] = None
    substeps: int = Field(4, ge=1)
    tolerance: float = Field(1e-3, gt=0)


ExperimentMode = Literal["oscillatory", "corrector", "covariance", "taqqu_fdd"]
DISTRIBUTIONAL_MODES = ("oscillatory", "corrector", "taqqu_fdd")


class ExperimentConfig(KernelConfig):
    mode: ExperimentMode = "oscillatory"
    phi: Optional[PhiConfig] = None
    epsilons: List[float] = Field(default_factory=lambda: [0.1, 0.03, 0.01])
    h: IntegrandConfig = Field(default_factory=IntegrandConfig)
    replicas: int = Field(500, ge=1)
    seed_base: int = 0
    probes: List[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0])
    source: SourceSpec = Field(default_factory=SourceSpec)
    b: float = 0.0
    Ts: List[float] = Field(default_factory=lambda: [1e2, 1e3, 1e4])
    lags: List[float] = Field(default_factory=lambda: [1.0, 10.0, 1e2, 1e3, 1e4, 1e5])
    path_delta: float = Field(0.05, gt=0)
    mc_path_length: int = Field(20_000, ge=10)
    window_tolerance: float = Field(1e-3, gt=0)
    scheme: Literal["cell_mass", "riemann"] = "cell_mass"
    hermite: HermiteGridConfig = Field(default_factory=HermiteGridConfig)
    thresholds: Thresholds = Field(default_factory=Thresholds)
    min_replicas: int = Field(100, ge=1)

    @model_validator(mode="after")
    def _check_schedule(self):
        if any(e <= 0 for e in self.epsilons):
            raise ValueError("epsilons must be positive")
        if any(b >= a for a, b in zip(self.epsilons[:-1], self.epsilons[1:])):
            raise ValueError("epsilons must be strictly decreasing")
        if any(b <= a for a, b in zip(self.Ts[:-1], self.Ts[1:])):
            raise ValueError("Ts must be strictly increasing")
        if any(b <= a for a, b in zip(self.lags[:-1], self.lags[1:])) or any(x <= 0 for x in self.lags):
            raise ValueError("lags must be positive and strictly increasing")
        if self.mode in DISTRIBUTIONAL_MODES and self.replicas < self.min_replicas:
            raise ValueError(f"replicas={self.replicas} below {self.min_replicas} for a distributional test")
        if any(not 0.0 < p <= 1.0 for p in self.probes):
            raise ValueError("probe points must lie in (0, 1]")
        if self.phi is not None and self.phi.method != "constant" and self.phi.m != self.m:
            raise ValueError(f"phi rank {self.phi.m} must equal the kernel order m={self.m}")
        return self

    def hermite_config(self, t_max: float = 1.0) -> HermiteProcessConfig:
        return HermiteProcessConfig(
            m=self.m,
            h0=self.h0,
            t_max=t_max,
            n_grid=self.hermite.n_grid,
            noise_step=self.hermite.noise_step,
            substeps=self.hermite.substeps,
            tolerance=self.hermite.tolerance,
        )

    def phi_config(self) -> PhiConfig:
        return self.phi if self.phi is not None else PhiConfig(method="pure_hermite", m=self.m)
