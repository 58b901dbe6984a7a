# tests/conftest.py

import numpy as np
import pytest

from config_helpers import aligned_window
from generators.lrd_gauss import KernelSpec
from integrators.hermite_core import construct_rank_m_bounded, pure_hermite


@pytest.fixture(scope="session")
def kernel_m1():
    return KernelSpec(m=1, h0=0.75)


@pytest.fixture(scope="session")
def kernel_m2():
    return KernelSpec(m=2, h0=0.8)


@pytest.fixture(scope="session")
def coarse_window(kernel_m1):
    """Window for delta = 0.05 discarding at most 1% of the kernel mass."""
    return aligned_window(kernel_m1, 0.05, 1e-2)


@pytest.fixture(scope="session")
def hermite_1():
    return pure_hermite(1)


@pytest.fixture(scope="session")
def bounded_rank_2():
    return construct_rank_m_bounded(2, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
