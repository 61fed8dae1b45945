"""
Dense complex matrix core on top of LAPACK (via scipy.linalg).

Matrices are numpy complex128 arrays in row-major (C) order. Factorizations
are reusable for any number of right-hand sides.
"""
import logging
import re
import warnings
from typing import Optional, Union

import numpy as np
import scipy.linalg as sla
from pydantic import BaseModel, ConfigDict

from src.errors import ConvergenceError, InvalidInputError, SingularMatrixError
from src.settings import get_settings

logger = logging.getLogger(__name__)

GROWTH_LIMIT = 1e8
POWER_ITERATIONS = 30
EXACT_COND_LIMIT = 300


class LUFactors(BaseModel):
    """Packed LU factors with LAPACK pivot indices (P A = L U)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    lu: np.ndarray
    piv: np.ndarray
    growth: bool = False

    @property
    def n(self) -> int:
        return self.lu.shape[0]


def as_cmatrix(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=complex)
    if a.ndim != 2:
        raise InvalidInputError(f"Expected a 2D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("Matrix has non-finite entries")
    return a


def _square(a: np.ndarray) -> np.ndarray:
    a = as_cmatrix(a)
    if a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"Expected a square matrix, got shape {a.shape}")
    return a


def lu_factor(a) -> LUFactors:
    a = _square(a)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(a, check_finite=False)
    zero = np.flatnonzero(np.diag(lu) == 0)
    if zero.size:
        raise SingularMatrixError(int(zero[0]))
    scale = np.max(np.abs(a)) if a.size else 1.0
    growth = bool(np.max(np.abs(np.triu(lu))) > GROWTH_LIMIT * scale)
    if growth:
        logger.debug("LU pivot growth above %.0e for n=%d", GROWTH_LIMIT, a.shape[0])
    return LUFactors(lu=lu, piv=piv, growth=growth)


def lu_solve(a: Union[np.ndarray, LUFactors], b, conjugate_transpose: bool = False) -> np.ndarray:
    """Solve A x = b (or A^H x = b); b may hold several columns."""
    factors = a if isinstance(a, LUFactors) else lu_factor(a)
    b = np.asarray(b, dtype=complex)
    if b.shape[0] != factors.n:
        raise InvalidInputError(f"Right-hand side has {b.shape[0]} rows, matrix has {factors.n}")
    return sla.lu_solve((factors.lu, factors.piv), b, trans=2 if conjugate_transpose else 0,
                        check_finite=False)


def _power_norm(apply, apply_adjoint, n: int, rng: np.random.Generator) -> float:
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(POWER_ITERATIONS):
        z = apply_adjoint(apply(v))
        norm = np.linalg.norm(z)
        if not np.isfinite(norm) or norm == 0:
            return float(norm) if np.isfinite(norm) else np.inf
        estimate = np.sqrt(norm)
        v = z / norm
    return float(estimate)


def cond_estimate(a, factors: Optional[LUFactors] = None, exact: Optional[bool] = None,
                  seed: int = 0) -> float:
    """Estimate of the 2-norm condition number; +inf for singular A."""
    a = _square(a)
    n = a.shape[0]
    if exact is None:
        exact = get_settings().exact_cond
    if exact and n <= EXACT_COND_LIMIT:
        return float(np.linalg.cond(a, 2))
    try:
        factors = factors or lu_factor(a)
    except SingularMatrixError:
        return np.inf
    rng = np.random.default_rng(seed)
    with np.errstate(over="ignore", invalid="ignore"):
        largest = _power_norm(lambda v: a @ v, lambda w: a.conj().T @ w, n, rng)
        inverse = _power_norm(lambda v: lu_solve(factors, v),
                              lambda w: lu_solve(factors, w, conjugate_transpose=True), n, rng)
    return float(largest * inverse) if np.isfinite(inverse) else np.inf


def eig(a) -> np.ndarray:
    """All n eigenvalues (LAPACK balancing, Hessenberg reduction, shifted QR)."""
    a = _square(a)
    try:
        return sla.eigvals(a, check_finite=False)
    except np.linalg.LinAlgError as exc:
        match = re.search(r">=\s*(\d+)", str(exc))
        index = int(match.group(1)) if match else -1
        raise ConvergenceError(index, f"Eigenvalue iteration did not converge: {exc}") from exc
