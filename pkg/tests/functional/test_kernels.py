"""
Functional tests for the kernel families and their derivatives.
"""
import numpy as np
import pytest

from src.errors import InvalidInputError
from src.kernels import (Kernel, KernelFamily, cartesian_gradient, cartesian_hessian, derivatives, evaluate,
                         laplacian, line_derivatives, taylor_coefficients)

pytestmark = pytest.mark.functional

FAMILIES = list(KernelFamily)
STEP = 1e-5


class TestKernelValues:
    """Closed-form values and validation."""

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.value)
    def test_value_at_center_is_one(self, family):
        kernel = Kernel(family=family, shape=3.0)
        assert evaluate(kernel, 0.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("family, expected", [
        (KernelFamily.MULTIQUADRIC, np.sqrt(2.0)),
        (KernelFamily.GAUSSIAN, np.exp(-1.0)),
        (KernelFamily.INVERSE_QUADRATIC, 0.5),
    ], ids=["mq", "ga", "iq"])
    def test_value_at_unit_argument(self, family, expected):
        kernel = Kernel(family=family, shape=2.0)
        assert kernel(0.5) == pytest.approx(expected, rel=1e-14)

    def test_array_shape_is_preserved(self, mq_kernel):
        r = np.linspace(0, 1, 12).reshape(3, 4)
        assert evaluate(mq_kernel, r).shape == (3, 4)

    def test_non_positive_shape_is_rejected(self):
        with pytest.raises(ValueError):
            Kernel(family=KernelFamily.GAUSSIAN, shape=0.0)

    def test_with_shape_keeps_family(self, ga_kernel):
        other = ga_kernel.with_shape(1.5)
        assert other.family is KernelFamily.GAUSSIAN
        assert other.shape == 1.5


class TestRadialDerivatives:
    """Regular-form derivative data against finite differences."""

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.value)
    def test_first_derivative(self, family):
        kernel = Kernel(family=family, shape=1.7)
        r = np.linspace(0.05, 1.5, 9)
        fd = (evaluate(kernel, r + STEP) - evaluate(kernel, r - STEP)) / (2 * STEP)
        rd = derivatives(kernel, r)
        assert np.allclose(kernel.shape**2 * r * rd.q1, fd, rtol=1e-6, atol=1e-8)

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.value)
    def test_second_derivative(self, family):
        kernel = Kernel(family=family, shape=1.7)
        r = np.linspace(0.05, 1.5, 9)
        h = 1e-4
        fd = (evaluate(kernel, r + h) - 2 * evaluate(kernel, r) + evaluate(kernel, r - h)) / h**2
        assert np.allclose(kernel.shape**2 * derivatives(kernel, r).d2, fd, rtol=1e-5, atol=1e-6)

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.value)
    def test_q2_matches_its_definition(self, family):
        kernel = Kernel(family=family, shape=1.0)
        r = np.linspace(0.2, 2.0, 7)
        rd = derivatives(kernel, r)
        assert np.allclose(rd.q2, (rd.d2 - rd.q1) / r**2, rtol=1e-10)

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.value)
    def test_regular_at_zero(self, family):
        rd = derivatives(Kernel(family=family, shape=2.0), np.zeros(3))
        for field in (rd.value, rd.q1, rd.d2, rd.q2):
            assert np.all(np.isfinite(field))
        assert np.allclose(rd.q1, rd.d2)


class TestLineDerivatives:
    """Signed derivatives along a line up to fourth order."""

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.value)
    def test_orders_by_finite_differences(self, family):
        kernel = Kernel(family=family, shape=1.3)
        u = np.linspace(-1.2, 1.2, 11)
        h = 1e-5
        stack = line_derivatives(kernel, u)
        upper = line_derivatives(kernel, u + h)
        lower = line_derivatives(kernel, u - h)
        for n in range(4):
            fd = (upper[n] - lower[n]) / (2 * h)
            assert np.allclose(stack[n + 1], fd, rtol=1e-5, atol=1e-6), f"order {n + 1}"

    def test_zeroth_order_is_value(self, mq_kernel):
        u = np.array([-0.4, 0.0, 0.3])
        assert np.allclose(line_derivatives(mq_kernel, u)[0], evaluate(mq_kernel, np.abs(u)))

    def test_odd_orders_are_odd(self, ga_kernel):
        u = np.array([0.1, 0.35])
        stack, mirrored = line_derivatives(ga_kernel, u), line_derivatives(ga_kernel, -u)
        assert np.allclose(stack[1], -mirrored[1])
        assert np.allclose(stack[3], -mirrored[3])
        assert np.allclose(stack[2], mirrored[2])

    def test_order_out_of_range(self, mq_kernel):
        with pytest.raises(InvalidInputError):
            line_derivatives(mq_kernel, [0.1], order=5)


class TestCartesianHelpers:
    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.value)
    def test_laplacian_is_hessian_trace(self, family):
        kernel = Kernel(family=family, shape=1.1)
        delta = np.array([[0.3, -0.2], [0.0, 0.5], [0.7, 0.1]])
        assert np.allclose(np.trace(cartesian_hessian(kernel, delta), axis1=-2, axis2=-1),
                           laplacian(kernel, delta))

    def test_gradient_by_finite_differences(self, mq_kernel):
        point = np.array([0.3, -0.1])
        grad = cartesian_gradient(mq_kernel, point)
        for axis in range(2):
            step = np.zeros(2)
            step[axis] = STEP
            fd = (evaluate(mq_kernel, np.linalg.norm(point + step))
                  - evaluate(mq_kernel, np.linalg.norm(point - step))) / (2 * STEP)
            assert grad[axis] == pytest.approx(fd, rel=1e-6)


class TestTaylorCoefficients:
    def test_multiquadric(self):
        coeffs = taylor_coefficients(Kernel(family=KernelFamily.MULTIQUADRIC, shape=1.0), 4)
        assert np.allclose(coeffs, [1.0, 0.5, -0.125, 0.0625])

    def test_gaussian(self):
        coeffs = taylor_coefficients(Kernel(family=KernelFamily.GAUSSIAN, shape=1.0), 4)
        assert np.allclose(coeffs, [1.0, -1.0, 0.5, -1.0 / 6.0])

    def test_inverse_quadratic(self):
        coeffs = taylor_coefficients(Kernel(family=KernelFamily.INVERSE_QUADRATIC, shape=1.0), 3)
        assert np.allclose(coeffs, [1.0, -1.0, 1.0])

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.value)
    def test_series_matches_value_for_small_argument(self, family):
        kernel = Kernel(family=family, shape=1.0)
        t = 0.1
        series = sum(a * t ** (2 * j) for j, a in enumerate(taylor_coefficients(kernel, 8)))
        assert series == pytest.approx(float(evaluate(kernel, t)), rel=1e-12)

    def test_zero_terms_rejected(self, mq_kernel):
        with pytest.raises(InvalidInputError):
            taylor_coefficients(mq_kernel, 0)
