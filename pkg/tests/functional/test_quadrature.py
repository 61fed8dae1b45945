"""
Functional tests for adaptive quadrature and modal projections.
"""
import numpy as np
import pytest

from src.errors import InvalidInputError
from src.geometry import Rectangle, Waveguide
from src.quadrature import ModeNorm, inner_product_mode, integrate, mode_amplitude, mode_shapes, project_onto_modes

pytestmark = pytest.mark.functional


class TestIntegrate:
    def test_sine(self):
        result = integrate(np.sin, 0.0, np.pi, abstol=1e-12)
        assert result.value == pytest.approx(2.0, abs=1e-11)
        assert result.converged

    def test_low_degree_polynomial_needs_one_panel(self):
        result = integrate(lambda x: x**5, 0.0, 1.0, abstol=1e-12)
        assert result.value == pytest.approx(1.0 / 6.0, rel=1e-14)
        assert result.n_evals == 7

    def test_oscillatory_integrand_refines(self):
        result = integrate(lambda x: np.cos(40 * x), 0.0, 1.0, abstol=1e-10)
        assert result.value == pytest.approx(np.sin(40.0) / 40.0, abs=1e-9)
        assert result.n_evals > 7

    def test_componentwise_values(self):
        result = integrate(lambda x: np.column_stack([x, x**2]), 0.0, 1.0, abstol=1e-12)
        assert np.allclose(result.value, [0.5, 1.0 / 3.0])

    def test_complex_integrand(self):
        result = integrate(lambda x: np.exp(1j * x), 0.0, np.pi, abstol=1e-12)
        assert result.value == pytest.approx(2j, abs=1e-11)

    def test_constant_scalar_return_is_broadcast(self):
        assert integrate(lambda x: 3.0, 0.0, 2.0).value == pytest.approx(6.0)

    @pytest.mark.parametrize("a, b", [(1.0, 1.0), (2.0, 1.0)], ids=["empty", "reversed"])
    def test_bad_bounds(self, a, b):
        with pytest.raises(InvalidInputError):
            integrate(np.sin, a, b)

    def test_bad_tolerance(self):
        with pytest.raises(InvalidInputError):
            integrate(np.sin, 0.0, 1.0, abstol=0.0)


class TestModes:
    def test_orthonormal_on_a_wide_slice(self):
        width = 1.5
        shape = lambda x1: mode_shapes([2], x1, 0.0, width, ModeNorm.ORTHONORMAL)[:, 0]
        result = project_onto_modes(shape, [1, 2, 3], 0.3, Rectangle(width=width), abstol=1e-12,
                                    norm=ModeNorm.ORTHONORMAL)
        assert np.allclose(result.value, [0.0, 1.0, 0.0], atol=1e-9)

    def test_sqrt2_modes_scale_with_width(self):
        # <psi_m, psi_m> = w for psi_m = sqrt(2) sin(m pi x1 / w)
        width = 1.5
        shape = lambda x1: mode_shapes([2], x1, 0.0, width)[:, 0]
        result = project_onto_modes(shape, [1, 2, 3], 0.3, Rectangle(width=width), abstol=1e-12)
        assert np.allclose(result.value, [0.0, width, 0.0], atol=1e-9)

    def test_shifted_slice(self):
        duct = Waveguide(name="shifted", lower=lambda x2: 0.2 + 0 * x2, upper=lambda x2: 0.7 + 0 * x2)
        shape = lambda x1: mode_shapes([1], x1, 0.2, 0.5)[:, 0]
        assert inner_product_mode(shape, 1, 0.5, duct, abstol=1e-12).value == pytest.approx(0.5, abs=1e-9)
        shape = lambda x1: mode_shapes([1], x1, 0.2, 0.5, ModeNorm.ORTHONORMAL)[:, 0]
        value = inner_product_mode(shape, 1, 0.5, duct, abstol=1e-12, norm=ModeNorm.ORTHONORMAL).value
        assert value == pytest.approx(1.0, abs=1e-9)

    def test_amplitudes(self):
        assert mode_amplitude(0.8) == pytest.approx(np.sqrt(2))
        assert mode_amplitude(0.8, ModeNorm.ORTHONORMAL) == pytest.approx(np.sqrt(2 / 0.8))
        assert mode_amplitude(1.0, "orthonormal") == pytest.approx(np.sqrt(2))

    def test_constant_projection(self):
        # <1, psi_1> on (0, 1) is sqrt(2) * 2 / pi
        value = inner_product_mode(lambda x1: np.ones_like(x1), 1, 0.0, Rectangle(), abstol=1e-12).value
        assert value == pytest.approx(2 * np.sqrt(2) / np.pi, rel=1e-10)

    def test_mode_index_must_be_positive(self):
        with pytest.raises(InvalidInputError):
            inner_product_mode(np.ones_like, 0, 0.0, Rectangle())

    def test_shapes_vanish_on_walls(self):
        values = mode_shapes([1, 2, 5], [0.0, 0.8], 0.0, 0.8)
        assert np.allclose(values, 0.0)
