"""
Performance and acceptance tests for the RBF Helmholtz solver.
These tests are driven by performance_test_config.yaml.
"""
from pathlib import Path

import pytest

from tests.framework.case_runner import load_test_cases_from_config
from tests.framework.performance_runner import PerformanceRunner

# Get the path to performance test config
CONFIG_PATH = Path(__file__).parent.parent / "config" / "performance_test_config.yaml"


@pytest.fixture(scope="function")
def performance_runner():
    """Create a performance test runner instance."""
    return PerformanceRunner(str(CONFIG_PATH))


@pytest.mark.performance
class TestSolvePerformance:
    """Wall-clock and accuracy thresholds for single solves."""

    @pytest.mark.parametrize("test_case",
                             load_test_cases_from_config(CONFIG_PATH, 'solve_performance'),
                             ids=lambda tc: tc.get('id', 'UNKNOWN'))
    def test_solve_performance(self, performance_runner, test_case):
        result = performance_runner.execute_test_case(test_case)
        assert result['status'] == 'PASSED', \
            f"Test {result['test_id']} failed: {', '.join(result.get('errors', []))}"

        stats = result['context'].get('statistics')
        if stats:
            print(f"\nSolve timings for {result['test_id']}:")
            print(f"  Average: {stats['average']:.3f}s")
            print(f"  Min: {stats['min']:.3f}s")
            print(f"  Max: {stats['max']:.3f}s")


@pytest.mark.slow
@pytest.mark.acceptance
class TestAcceptance:
    """Scaled reference experiments."""

    @pytest.mark.parametrize("test_case",
                             load_test_cases_from_config(CONFIG_PATH, 'acceptance'),
                             ids=lambda tc: tc.get('id', 'UNKNOWN'))
    def test_acceptance(self, performance_runner, test_case):
        result = performance_runner.execute_test_case(test_case)
        assert result['status'] == 'PASSED', \
            f"Test {result['test_id']} failed: {', '.join(result.get('errors', []))}"


@pytest.mark.performance
def test_inner_product_cache_speeds_up_repeat_solves(benchmark, duct_nodes):
    """A warm DtN projection cache makes the second duct solve cheap."""
    from src.collocation import INNER_PRODUCTS, ProblemSpec, solve
    from src.kernels import Kernel, KernelFamily

    problem = ProblemSpec.duct(source=0.3)
    kernel = Kernel(family=KernelFamily.MULTIQUADRIC, shape=4.0)
    solve(problem, duct_nodes, kernel)
    cached = len(INNER_PRODUCTS)
    approx = benchmark.pedantic(solve, args=(problem, duct_nodes, kernel), rounds=3, iterations=1)
    assert len(INNER_PRODUCTS) == cached
    assert approx.size == duct_nodes.size
