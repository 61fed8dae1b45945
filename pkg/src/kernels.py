"""
Radial basis function families, their radial derivatives in regular form and
their Taylor coefficients.

    family  token   phi(t), t = eps * r
    ------  -----   -------------------
    MQ      mq      sqrt(1 + t^2)
    GA      ga      exp(-t^2)
    IQ      iq      1 / (1 + t^2)

Derivative data is carried as (phi, phi'(t)/t, phi''(t), (phi'' - phi'/t)/t^2),
all written as functions of s = t^2 so that t = 0 needs no special casing.
"""
import logging
from enum import Enum
from typing import Callable, Dict, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import binom, factorial

from src.errors import InvalidInputError

logger = logging.getLogger(__name__)


class KernelFamily(str, Enum):
    MULTIQUADRIC = "mq"
    GAUSSIAN = "ga"
    INVERSE_QUADRATIC = "iq"


class Kernel(BaseModel):
    """An infinitely smooth radial kernel phi(eps * r)."""

    model_config = ConfigDict(frozen=True)

    family: KernelFamily
    shape: float = Field(gt=0)

    def __call__(self, r):
        return evaluate(self, r)

    def with_shape(self, shape: float) -> "Kernel":
        return Kernel(family=self.family, shape=shape)


class RadialDerivatives(BaseModel):
    """Radial derivative data at t = eps * r (arrays broadcast like r)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    value: np.ndarray
    q1: np.ndarray
    d2: np.ndarray
    q2: np.ndarray


def _mq(s):
    w = 1.0 + s
    root = np.sqrt(w)
    return root, 1.0 / root, 1.0 / (w * root), -1.0 / (w * root)


def _ga(s):
    e = np.exp(-s)
    return e, -2.0 * e, (4.0 * s - 2.0) * e, 4.0 * e


def _iq(s):
    w = 1.0 + s
    return 1.0 / w, -2.0 / w**2, (6.0 * s - 2.0) / w**3, 8.0 / w**3


RADIAL_FORMS: Dict[KernelFamily, Callable[[np.ndarray], Tuple]] = {
    KernelFamily.MULTIQUADRIC: _mq,
    KernelFamily.GAUSSIAN: _ga,
    KernelFamily.INVERSE_QUADRATIC: _iq,
}


def _mq_line(t):
    w = 1.0 + t * t
    root = np.sqrt(w)
    return [
        root,
        t / root,
        1.0 / (w * root),
        -3.0 * t / (w**2 * root),
        (12.0 * t * t - 3.0) / (w**3 * root),
    ]


def _ga_line(t):
    t2 = t * t
    e = np.exp(-t2)
    return [
        e,
        -2.0 * t * e,
        (4.0 * t2 - 2.0) * e,
        (12.0 * t - 8.0 * t2 * t) * e,
        (16.0 * t2 * t2 - 48.0 * t2 + 12.0) * e,
    ]


def _iq_line(t):
    t2 = t * t
    w = 1.0 + t2
    return [
        1.0 / w,
        -2.0 * t / w**2,
        (6.0 * t2 - 2.0) / w**3,
        (24.0 * t - 24.0 * t2 * t) / w**4,
        (24.0 - 240.0 * t2 + 120.0 * t2 * t2) / w**5,
    ]


LINE_FORMS = {
    KernelFamily.MULTIQUADRIC: _mq_line,
    KernelFamily.GAUSSIAN: _ga_line,
    KernelFamily.INVERSE_QUADRATIC: _iq_line,
}

MAX_LINE_ORDER = 4


def evaluate(kernel: Kernel, r) -> np.ndarray:
    """phi(eps * r) for r >= 0 (any array shape)."""
    t = kernel.shape * np.asarray(r, dtype=float)
    return RADIAL_FORMS[kernel.family](t * t)[0]


def derivatives(kernel: Kernel, r) -> RadialDerivatives:
    t = kernel.shape * np.asarray(r, dtype=float)
    value, q1, d2, q2 = (np.asarray(v) for v in RADIAL_FORMS[kernel.family](t * t))
    return RadialDerivatives(value=value, q1=q1, d2=d2, q2=q2)


def line_derivatives(kernel: Kernel, u, order: int = MAX_LINE_ORDER) -> np.ndarray:
    """
    Signed derivatives d^n/du^n phi(eps * u) for n = 0..order along a line.

    Returns an array of shape (order + 1, *u.shape).
    """
    if not 0 <= order <= MAX_LINE_ORDER:
        raise InvalidInputError(f"order must be in [0, {MAX_LINE_ORDER}], got {order}")
    eps = kernel.shape
    t = eps * np.asarray(u, dtype=float)
    stack = LINE_FORMS[kernel.family](t)[: order + 1]
    return np.stack([eps**n * g for n, g in enumerate(stack)])


def cartesian_gradient(kernel: Kernel, delta: np.ndarray) -> np.ndarray:
    """Gradient of phi(eps |x - c|) for delta = x - c with trailing axis d."""
    delta = np.asarray(delta, dtype=float)
    rd = derivatives(kernel, np.linalg.norm(delta, axis=-1))
    return kernel.shape**2 * delta * rd.q1[..., None]


def cartesian_hessian(kernel: Kernel, delta: np.ndarray) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    eps2 = kernel.shape**2
    rd = derivatives(kernel, np.linalg.norm(delta, axis=-1))
    eye = np.eye(delta.shape[-1])
    outer = delta[..., :, None] * delta[..., None, :]
    return eps2 * rd.q1[..., None, None] * eye + eps2**2 * rd.q2[..., None, None] * outer


def laplacian(kernel: Kernel, delta: np.ndarray) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    dim = delta.shape[-1]
    rd = derivatives(kernel, np.linalg.norm(delta, axis=-1))
    return kernel.shape**2 * ((dim - 1) * rd.q1 + rd.d2)


def taylor_coefficients(kernel: Kernel, n: int) -> np.ndarray:
    """Coefficients a_j with phi = sum_j a_j t^(2j), t = eps * r."""
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    j = np.arange(n)
    if kernel.family is KernelFamily.MULTIQUADRIC:
        return binom(0.5, j)
    if kernel.family is KernelFamily.GAUSSIAN:
        return (-1.0) ** j / factorial(j)
    return (-1.0) ** j
