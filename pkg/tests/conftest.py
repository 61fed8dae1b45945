"""
Shared test fixtures and utilities for the RBF Helmholtz solver tests.
"""
import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import numpy as np
import pytest

from src.collocation import INNER_PRODUCTS, ProblemSpec, solve
from src.geometry import nodes_interval, nodes_rectangle, nodes_waveguide, named_domain
from src.kernels import Kernel, KernelFamily
from src.settings import get_settings


@pytest.fixture(autouse=True)
def fresh_state(monkeypatch):
    """Settings and the DtN projection cache start clean in every test."""
    monkeypatch.delenv("RBFH_THREADS", raising=False)
    get_settings.cache_clear()
    INNER_PRODUCTS.clear()
    yield
    get_settings.cache_clear()
    INNER_PRODUCTS.clear()


@pytest.fixture
def mq_kernel():
    return Kernel(family=KernelFamily.MULTIQUADRIC, shape=4.0)


@pytest.fixture
def ga_kernel():
    return Kernel(family=KernelFamily.GAUSSIAN, shape=4.0)


@pytest.fixture
def interval_problem():
    return ProblemSpec.interval(2 * np.pi)


@pytest.fixture
def rect_problem():
    return ProblemSpec.rectangle(2.2 * np.pi)


@pytest.fixture
def duct_problem():
    return ProblemSpec.duct(6 * np.pi, source=0.3)


@pytest.fixture
def interval_nodes():
    return nodes_interval(30)


@pytest.fixture
def rect_nodes():
    return nodes_rectangle(12, 12)


@pytest.fixture(scope="session")
def duct_nodes():
    return nodes_waveguide(10, 12, named_domain("duct-m"), seed=0)


@pytest.fixture
def solved_interval(interval_problem, interval_nodes, mq_kernel):
    """MQ eps=4 solution of the 1D problem with kappa = 2 pi on 30 nodes."""
    return solve(interval_problem, interval_nodes, mq_kernel)


@pytest.fixture
def solved_rect(rect_problem, rect_nodes):
    return solve(rect_problem, rect_nodes, Kernel(family=KernelFamily.MULTIQUADRIC, shape=3.0))


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    """Artifacts of CLI runs go to a temporary directory."""
    monkeypatch.setenv("RBFH_OUTPUT_DIR", str(tmp_path))
    get_settings.cache_clear()
    return tmp_path
