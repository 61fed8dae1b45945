"""
Wavenumbers at which 1D collocation becomes singular.

After multiplying the PDE rows by -1 and the boundary rows by i*kappa, the
collocation matrix is a quadratic matrix polynomial
    M(kappa) = kappa^2 A + i kappa B + C
with real A, B, C. Its eigenvalues are those of the companion matrix
    [[0, I], [-A^-1 C, -i A^-1 B]].
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.collocation import ProblemSpec, assemble_nonsymmetric
from src.errors import InvalidInputError
from src.geometry import INFLOW, INTERIOR, OUTFLOW, NodeSet, nodes_interval
from src.kernels import Kernel, line_derivatives
from src.linalg import eig, lu_factor, lu_solve
from src.settings import get_settings

logger = logging.getLogger(__name__)

ZERO_TOLERANCE = 1e-6
PAIR_TOLERANCE = 1e-6


class Pencil(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    @property
    def size(self) -> int:
        return self.A.shape[0]

    def at(self, kappa: complex) -> np.ndarray:
        return kappa**2 * self.A + 1j * kappa * self.B + self.C


def build_pencil(nodes: NodeSet, kernel: Kernel) -> Pencil:
    """Rows in node order."""
    if nodes.dim != 1:
        raise InvalidInputError("The matrix pencil is defined for 1D node sets only")
    x = nodes.points[:, 0]
    g = line_derivatives(kernel, x[:, None] - x[None, :], order=2)
    A = g[0].copy()
    B = np.zeros_like(A)
    C = np.zeros_like(A)
    interior = nodes.region == INTERIOR
    C[interior] = g[2][interior]
    B[nodes.region == INFLOW] = -g[1][nodes.region == INFLOW]
    B[nodes.region == OUTFLOW] = g[1][nodes.region == OUTFLOW]
    return Pencil(A=A, B=B, C=C)


def rescaled_collocation(kappa: complex, nodes: NodeSet, kernel: Kernel) -> np.ndarray:
    """The 1D collocation matrix in node order with PDE rows * -1 and boundary rows * i kappa."""
    system = assemble_nonsymmetric(ProblemSpec.interval(kappa), nodes, kernel)
    scale = np.where(system.row_regions == INTERIOR, -1.0, 1j * kappa)
    matrix = np.empty_like(system.matrix)
    matrix[system.row_nodes] = scale[:, None] * system.matrix
    return matrix


def companion(pencil: Pencil) -> np.ndarray:
    n = pencil.size
    factors = lu_factor(pencil.A)
    a_inv_c = lu_solve(factors, pencil.C)
    a_inv_b = lu_solve(factors, pencil.B)
    return np.block([[np.zeros((n, n)), np.eye(n)], [-a_inv_c, -1j * a_inv_b]])


def singular_wavenumbers(pencil: Pencil) -> np.ndarray:
    """All 2N eigenvalues sorted by real part (ties by imaginary part)."""
    kappas = eig(companion(pencil))
    order = np.lexsort((kappas.imag, kappas.real))
    return kappas[order]


def _scale(kappas: np.ndarray) -> float:
    return float(np.max(np.abs(kappas))) if kappas.size else 0.0


def structural_zeros(kappas: np.ndarray, rel: float = ZERO_TOLERANCE) -> np.ndarray:
    """Indices of the eigenvalues that are zero up to rel * max|kappa|."""
    return np.flatnonzero(np.abs(kappas) <= rel * _scale(kappas))


def match_pairs(kappas: np.ndarray) -> float:
    """
    Greedy nearest-neighbour matching of kappa against -conj(kappa); returns the
    largest mismatch relative to max|kappa|.
    """
    images = -np.conj(kappas)
    unused = np.ones(kappas.size, dtype=bool)
    worst = 0.0
    for value in kappas:
        distance = np.where(unused, np.abs(images - value), np.inf)
        j = int(np.argmin(distance))
        unused[j] = False
        worst = max(worst, float(distance[j]))
    scale = _scale(kappas)
    return worst / scale if scale else 0.0


def band_candidates(kappas: np.ndarray, band: float = 0.5) -> np.ndarray:
    """Nonzero eigenvalues with Re > 0 and |Im| < band."""
    nonzero = np.abs(kappas) > ZERO_TOLERANCE * _scale(kappas)
    return kappas[nonzero & (kappas.real > 0) & (np.abs(kappas.imag) < band)]


def resolution_of(kappa: complex, n: int) -> float:
    """Points per wavelength 2 pi N / Re(kappa)."""
    if np.real(kappa) <= 0:
        raise InvalidInputError(f"resolution_of needs Re(kappa) > 0, got {kappa}")
    return 2 * np.pi * n / float(np.real(kappa))


def scan(kernel: Kernel, n_values: Sequence[int],
         threads: Optional[int] = None) -> List[Tuple[int, np.ndarray]]:
    """Singular wavenumbers for equispaced 1D node sets of each size."""

    def job(n):
        return n, singular_wavenumbers(build_pencil(nodes_interval(n), kernel))

    threads = threads or get_settings().threads
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(job, n_values))
    logger.info("Scanned %d pencils for %s eps=%g", len(results), kernel.family.value, kernel.shape)
    return results
