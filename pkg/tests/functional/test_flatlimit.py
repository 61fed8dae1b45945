"""
Functional tests for the flat-limit classification.
"""
import numpy as np
import pytest

from src.errors import InsufficientDataError, InvalidInputError
from src.flatlimit import (EXAMPLES, LimitCase, MonomialBasis, MonomialColumns, build_P, build_Q, classify,
                           degree_for, divergence_probe, graded_exponents, interval_fixture, minimal_basis,
                           floor_degree, nullspace_polynomial, poly_dim, rank_and_nullspace)
from src.collocation import ProblemSpec
from src.geometry import nodes_rectangle
from src.kernels import KernelFamily

pytestmark = pytest.mark.functional

# Graded coefficients of the polynomial annihilated by Q on the example-iii nodes:
# 5/32 x2 (x2 - 1) + x1/16 (8 - 24 x1 + 3 x2 + 16 x1^2 + 4 x1 x2 - 7 x2^2)
EXAMPLE_III_NULL = np.array([0.0, 0.5, -5 / 32, -1.5, 3 / 16, 5 / 32, 1.0, 0.25, -7 / 16, 0.0])


class TestDegrees:
    @pytest.mark.parametrize("degree, dim, expected", [(0, 2, 1), (2, 2, 6), (3, 2, 10), (3, 1, 4), (2, 3, 10)])
    def test_poly_dim(self, degree, dim, expected):
        assert poly_dim(degree, dim) == expected

    @pytest.mark.parametrize("n, expected", [(1, 0), (6, 2), (10, 3), (11, 4), (25, 6)])
    def test_degree_for_2d(self, n, expected):
        assert degree_for(n, 2) == expected

    @pytest.mark.parametrize("n, expected", [(6, 2), (9, 2), (10, 3), (25, 5), (28, 6)])
    def test_floor_degree(self, n, expected):
        assert floor_degree(n) == expected

    def test_bad_arguments(self):
        with pytest.raises(InvalidInputError):
            poly_dim(-1, 2)
        with pytest.raises(InvalidInputError):
            degree_for(0, 2)


class TestMonomials:
    def test_graded_order(self):
        stream = graded_exponents(2)
        assert [next(stream) for _ in range(6)] == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]

    def test_labels(self):
        assert MonomialBasis.graded(6, 2).labels() == ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"]
        assert MonomialBasis.graded(3, 1).labels() == ["1", "x", "x^2"]

    def test_degree(self):
        assert MonomialBasis.graded(7, 2).degree == 3

    def test_column_derivatives(self):
        columns = MonomialColumns(MonomialBasis(dim=2, exponents=((2, 2), (3, 0), (0, 0))))
        point = np.array([[0.5, 2.0]])
        assert np.allclose(columns.values(point), [[1.0, 0.125, 1.0]])
        assert np.allclose(columns.partial(point, 0), [[4.0, 0.75, 0.0]])
        assert np.allclose(columns.partial(point, 1), [[1.0, 0.0, 0.0]])
        assert np.allclose(columns.laplacian(point), [[2 * 4.0 + 2 * 0.25, 3.0, 0.0]])


class TestRank:
    def test_exact_nullspace(self):
        info = rank_and_nullspace(np.diag([1.0, 2.0, 0.0]))
        assert info.rank == 2
        assert np.allclose(info.nullspace, [[0.0, 0.0, 1.0]])
        assert not info.indeterminate

    def test_borderline_singular_value(self):
        info = rank_and_nullspace(np.diag([1.0, 1.0, 5e-10]))
        assert info.rank == 3
        assert info.indeterminate

    def test_full_grid_is_unisolvent_in_1d(self):
        nodes = interval_fixture([0.0, 0.3, 0.7, 1.0])
        assert rank_and_nullspace(build_P(nodes, MonomialBasis.graded(4, 1))).rank == 4


class TestExamples:
    def test_example_ii_p_nullspace_is_the_three_lines(self):
        fixture = EXAMPLES["example-ii"]
        report = classify(fixture.problem(), fixture.nodes())
        assert report.m == 1
        assert report.rank_P == 9
        assert report.case is LimitCase.II
        assert report.M == 4
        points = np.random.default_rng(7).uniform(0.0, 1.0, size=(20, 2))
        expected = points[:, 1] * (points[:, 1] - 0.5) * (points[:, 1] - 1.0)
        values = nullspace_polynomial(report, "P", 0, points)
        ratio = values / expected
        assert np.allclose(ratio, ratio[0], rtol=1e-8, atol=0.0)

    def test_example_ii_minimal_degree(self):
        basis, degree = minimal_basis(EXAMPLES["example-ii"].nodes())
        assert degree == 4
        assert len(basis) == 10
        assert (3, 1) in basis.exponents
        assert (0, 3) not in basis.exponents

    def test_example_iii_q_annihilates_polynomial(self):
        fixture = EXAMPLES["example-iii"]
        nodes = fixture.nodes()
        Q = build_Q(fixture.problem(), nodes, MonomialBasis.graded(10, 2))
        scale = np.linalg.norm(Q) * np.linalg.norm(EXAMPLE_III_NULL)
        assert np.linalg.norm(Q @ EXAMPLE_III_NULL) < 1e-10 * scale
        report = classify(fixture.problem(), nodes)
        assert report.p >= 1
        assert report.case is LimitCase.III

    def test_example_iv_both_singular(self):
        fixture = EXAMPLES["example-iv"]
        report = classify(fixture.problem(), fixture.nodes())
        assert (report.m, report.p) == (2, 2)
        assert report.case is LimitCase.IV
        assert "case: iv" in report.summary()

    def test_interval_three_nodes(self):
        report = classify(ProblemSpec.interval(2 * np.pi), interval_fixture([0.0, 0.5, 1.0]))
        assert report.m == 0
        assert report.K == 2


class TestErrors:
    def test_q_undefined_for_duct(self, duct_problem, duct_nodes):
        with pytest.raises(InvalidInputError):
            build_Q(duct_problem, duct_nodes, MonomialBasis.graded(duct_nodes.size, 2))

    def test_nullspace_polynomial_arguments(self):
        fixture = EXAMPLES["example-ii"]
        report = classify(fixture.problem(), fixture.nodes())
        with pytest.raises(InvalidInputError):
            nullspace_polynomial(report, "R", 0, [[0.5, 0.5]])
        with pytest.raises(InvalidInputError):
            nullspace_polynomial(report, "P", 5, [[0.5, 0.5]])

    def test_probe_needs_three_values(self):
        with pytest.raises(InsufficientDataError):
            divergence_probe(ProblemSpec.rectangle(2.2 * np.pi), nodes_rectangle(4, 4), KernelFamily.GAUSSIAN,
                             eps_list=[0.5, 0.4], threads=1)
