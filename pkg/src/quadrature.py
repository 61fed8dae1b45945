"""
Adaptive Gauss-Lobatto quadrature with absolute tolerance and evaluation
counting, plus projections of slice functions onto the transverse sine modes
sqrt(2) sin(alpha_m (x1 - lower)) (or their orthonormal rescaling).

Each panel uses the 4-point Gauss-Lobatto rule and its 7-point Kronrod
extension; panels whose two values disagree by more than their share of the
tolerance are bisected.
"""
import logging
from enum import Enum
from typing import Any, Callable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.errors import InvalidInputError
from src.geometry import Domain, cross_section
from src.settings import get_settings

logger = logging.getLogger(__name__)

_ALPHA = np.sqrt(2.0 / 3.0)
_BETA = 1.0 / np.sqrt(5.0)
ABSCISSAE = np.array([-1.0, -_ALPHA, -_BETA, 0.0, _BETA, _ALPHA, 1.0])
KRONROD_WEIGHTS = np.array([77.0, 432.0, 625.0, 672.0, 625.0, 432.0, 77.0]) / 1470.0
LOBATTO_WEIGHTS = np.array([1.0, 0.0, 5.0, 0.0, 5.0, 0.0, 1.0]) / 6.0
BASE_NODES = 7
MAX_DEPTH = 50


class QuadResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    value: Any
    n_evals: int
    converged: bool = True
    error: float = 0.0


def _call(f: Callable, x: np.ndarray) -> np.ndarray:
    y = np.asarray(f(x))
    if y.ndim == 0:
        y = np.full(x.shape, y)
    return y


def integrate(f: Callable, a: float, b: float, abstol: Optional[float] = None) -> QuadResult:
    """
    Integrate f over [a, b] to absolute tolerance abstol.

    f takes an array of abscissae and returns values along the first axis
    (extra trailing axes integrate componentwise, sharing the evaluations).
    """
    if abstol is None:
        abstol = get_settings().quad_tol
    if not a < b:
        raise InvalidInputError(f"Integration bounds must satisfy a < b, got [{a}, {b}]")
    if abstol <= 0:
        raise InvalidInputError(f"abstol must be positive, got {abstol}")

    ends = _call(f, np.array([a, b], dtype=float))
    n_evals = 2
    total = 0.0
    error = 0.0
    converged = True
    stack = [(float(a), float(b), ends[0], ends[1], float(abstol), 0)]
    while stack:
        lo, hi, f_lo, f_hi, tol, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        inner = _call(f, mid + half * ABSCISSAE[1:-1])
        n_evals += BASE_NODES - 2
        values = np.concatenate([f_lo[None], inner, f_hi[None]])
        kronrod = half * np.tensordot(KRONROD_WEIGHTS, values, axes=1)
        lobatto = half * np.tensordot(LOBATTO_WEIGHTS, values, axes=1)
        panel_error = float(np.max(np.abs(kronrod - lobatto)))
        roundoff = 50 * np.finfo(float).eps * float(np.max(np.abs(kronrod)))
        unsplittable = mid - _ALPHA * half <= lo or hi <= mid + _ALPHA * half
        if panel_error <= max(tol, roundoff) or unsplittable or depth >= MAX_DEPTH:
            if depth >= MAX_DEPTH and panel_error > tol:
                converged = False
            total = total + kronrod
            error += panel_error
            continue
        f_mid = inner[2]
        stack.append((mid, hi, f_mid, f_hi, 0.5 * tol, depth + 1))
        stack.append((lo, mid, f_lo, f_mid, 0.5 * tol, depth + 1))

    if not converged:
        logger.warning("Quadrature on [%g, %g] hit depth %d; error estimate %.3g", a, b, MAX_DEPTH, error)
    value = np.asarray(total)
    if value.ndim == 0:
        value = value.item()
    return QuadResult(value=value, n_evals=n_evals, converged=converged, error=error)


class ModeNorm(str, Enum):
    """Scaling of the transverse sine modes on a slice of width w."""

    # sqrt(2) sin(...): orthonormal on unit-width slices only
    SQRT2 = "sqrt2"
    # sqrt(2 / w) sin(...)
    ORTHONORMAL = "orthonormal"


def mode_amplitude(width: float, norm: ModeNorm = ModeNorm.SQRT2) -> float:
    return float(np.sqrt(2.0)) if ModeNorm(norm) is ModeNorm.SQRT2 else float(np.sqrt(2.0 / width))


def mode_shapes(modes: Sequence[int], x1, lower: float, width: float,
                norm: ModeNorm = ModeNorm.SQRT2) -> np.ndarray:
    """Sine modes c sin(m pi (x1 - lower) / w) with c from mode_amplitude, shape (len(x1), len(modes))."""
    modes = np.atleast_1d(np.asarray(modes, dtype=float))
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    alpha = modes * np.pi / width
    return mode_amplitude(width, norm) * np.sin(np.outer(x1 - lower, alpha))


def project_onto_modes(g: Callable, modes: Sequence[int], x2: float, domain: Domain,
                       abstol: Optional[float] = None, norm: ModeNorm = ModeNorm.SQRT2) -> QuadResult:
    """
    <g(., x2), psi_m> for every m in modes; g may return (k,) or (k, n) values,
    the result has shape g_shape + (len(modes),).
    """
    lower, upper = cross_section(domain, x2)
    width = upper - lower

    def integrand(x1):
        values = _call(g, x1)
        psi = mode_shapes(modes, x1, lower, width, norm)
        psi = psi.reshape(psi.shape[:1] + (1,) * (values.ndim - 1) + psi.shape[1:])
        return values[..., None] * psi

    return integrate(integrand, lower, upper, abstol)


def inner_product_mode(g: Callable, m: int, x2: float, domain: Domain,
                       abstol: Optional[float] = None, norm: ModeNorm = ModeNorm.SQRT2) -> QuadResult:
    if m < 1:
        raise InvalidInputError(f"Mode index must be >= 1, got {m}")
    result = project_onto_modes(g, [m], x2, domain, abstol, norm)
    return result.model_copy(update={"value": complex(np.asarray(result.value)[..., 0])})
