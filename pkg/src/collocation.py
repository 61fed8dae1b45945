"""
Collocation operators, system assembly, solving and approximant evaluation for
the three model problems.

Every operator consumes a column basis, i.e. anything that can return the
values, one partial derivative and the Laplacian of its N basis functions at a
set of points. Plain RBF columns give non-symmetric collocation; in 1D the
columns with conjugated operators applied to the kernel's second argument give
the Hermitian symmetric formulation; monomial columns give the flat-limit
matrices.
"""
import hashlib
import logging
import threading
from abc import ABC, abstractmethod
from collections import OrderedDict
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.errors import InvalidInputError
from src.geometry import (INFLOW, INTERIOR, OUTFLOW, WALL, Domain, DomainKind, Interval,
                          NodeSet, Rectangle, Waveguide, cross_section, named_domain)
from src.kernels import Kernel, derivatives, line_derivatives
from src.linalg import cond_estimate, lu_factor, lu_solve
from src.quadrature import ModeNorm, mode_amplitude, mode_shapes, project_onto_modes
from src.settings import get_settings

logger = logging.getLogger(__name__)

NEAR_SINGULAR_COND = 1e17
EVAL_CHUNK = 1024


class ProblemKind(str, Enum):
    INTERVAL = "1d"
    RECTANGLE = "rect"
    DUCT = "duct"


def axial_wavenumber(kappa, alpha) -> np.ndarray:
    """beta = sqrt(kappa^2 - alpha^2) on the branch with Im(beta) >= 0."""
    beta = np.sqrt(np.asarray(kappa, dtype=complex) ** 2 - np.asarray(alpha, dtype=float) ** 2)
    return np.where(beta.imag < 0, -beta, beta)


class ModalBasis(BaseModel):
    """Transverse sine modes of the slice at station x2."""

    model_config = ConfigDict(frozen=True)

    station: float
    lower: float
    width: float = Field(gt=0)
    kappa: complex
    source: Optional[float] = None
    norm: ModeNorm = ModeNorm.SQRT2

    @classmethod
    def at(cls, domain: Domain, x2: float, kappa: complex, source: Optional[float] = None,
           norm: ModeNorm = ModeNorm.SQRT2) -> "ModalBasis":
        lower, upper = cross_section(domain, x2)
        return cls(station=x2, lower=lower, width=upper - lower, kappa=kappa, source=source, norm=norm)

    @property
    def mu(self) -> int:
        """Number of propagating modes."""
        return int(np.floor(self.kappa.real * self.width / np.pi))

    def alpha(self, modes) -> np.ndarray:
        return np.asarray(modes, dtype=float) * np.pi / self.width

    def beta(self, modes) -> np.ndarray:
        return axial_wavenumber(self.kappa, self.alpha(modes))

    @property
    def scale(self) -> float:
        """Amplitude c of psi_m = c sin(alpha_m (x1 - lower))."""
        return mode_amplitude(self.width, self.norm)

    def shapes(self, x1, modes) -> np.ndarray:
        return mode_shapes(modes, x1, self.lower, self.width, self.norm)

    def amplitudes(self, modes) -> np.ndarray:
        if self.source is None:
            raise InvalidInputError("Mode amplitudes need a source location")
        return self.shapes([self.source], modes)[0]

    def propagating(self) -> np.ndarray:
        return np.arange(1, self.mu + 1)


class ColumnBasis(Protocol):
    size: int
    dim: int

    def values(self, points: np.ndarray) -> np.ndarray: ...

    def partial(self, points: np.ndarray, axis: int) -> np.ndarray: ...

    def laplacian(self, points: np.ndarray) -> np.ndarray: ...

    @property
    def cache_key(self) -> Any: ...


class RBFColumns:
    """Columns phi(eps |x - x_j|) for the N centers."""

    def __init__(self, kernel: Kernel, centers: np.ndarray):
        self.kernel = kernel
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float))
        self.size, self.dim = self.centers.shape

    @property
    def cache_key(self):
        digest = hashlib.sha1(self.centers.tobytes()).hexdigest()
        return ("rbf", self.kernel.family.value, self.kernel.shape, digest)

    def _radial(self, points):
        delta = np.asarray(points, dtype=float)[:, None, :] - self.centers[None, :, :]
        return delta, derivatives(self.kernel, np.linalg.norm(delta, axis=-1))

    def values(self, points):
        return self._radial(points)[1].value

    def partial(self, points, axis: int):
        delta, rd = self._radial(points)
        return self.kernel.shape**2 * delta[..., axis] * rd.q1

    def laplacian(self, points):
        _, rd = self._radial(points)
        return self.kernel.shape**2 * ((self.dim - 1) * rd.q1 + rd.d2)


class SymmetricColumns1D:
    """
    1D columns b_j(D) phi(eps (x - x_j)), where b_j is the conjugated operator of
    center j's region written as a polynomial in D = d/dx (d/dxi = -D).
    """

    def __init__(self, kernel: Kernel, centers: np.ndarray, polynomials: np.ndarray):
        self.kernel = kernel
        self.centers = np.asarray(centers, dtype=float).reshape(-1)
        self.polynomials = np.asarray(polynomials, dtype=complex)
        self.size = self.centers.size
        self.dim = 1

    @property
    def cache_key(self):
        digest = hashlib.sha1(self.centers.tobytes() + self.polynomials.tobytes()).hexdigest()
        return ("sym", self.kernel.family.value, self.kernel.shape, digest)

    def _derivative(self, points, shift: int):
        u = np.asarray(points, dtype=float)[:, 0][:, None] - self.centers[None, :]
        stack = line_derivatives(self.kernel, u)
        order = self.polynomials.shape[1]
        return sum(self.polynomials[None, :, n] * stack[n + shift] for n in range(order))

    def values(self, points):
        return self._derivative(points, 0)

    def partial(self, points, axis: int = 0):
        return self._derivative(points, 1)

    def laplacian(self, points):
        return self._derivative(points, 2)


class InnerProductCache:
    """Thread-safe LRU store of slice projections <phi_j(., x2), psi_m>."""

    def __init__(self, maxsize: int = 256):
        self.maxsize = maxsize
        self._store: "OrderedDict[Any, np.ndarray]" = OrderedDict()
        self._lock = threading.Lock()

    def get_or_compute(self, key, compute: Callable[[], np.ndarray]) -> np.ndarray:
        with self._lock:
            if key in self._store:
                self._store.move_to_end(key)
                return self._store[key]
        value = compute()
        with self._lock:
            self._store[key] = value
            while len(self._store) > self.maxsize:
                self._store.popitem(last=False)
        return value

    def __len__(self) -> int:
        return len(self._store)

    def clear(self):
        with self._lock:
            self._store.clear()


INNER_PRODUCTS = InnerProductCache()


class Operator(ABC):
    """Collocation functional L^k with data f^k on one region."""

    def __init__(self, region: int):
        self.region = region
        self.warnings: List[str] = []

    @abstractmethod
    def rows(self, basis: ColumnBasis, points: np.ndarray) -> np.ndarray:
        """L^k applied to every column at every point, shape (n, N)."""

    def data(self, points: np.ndarray) -> np.ndarray:
        return np.zeros(np.asarray(points).shape[0], dtype=complex)

    def line_polynomial(self) -> np.ndarray:
        raise InvalidInputError(f"{type(self).__name__} has no 1D polynomial form")


class Helmholtz(Operator):
    """-Laplacian - kappa^2."""

    def __init__(self, kappa: complex):
        super().__init__(INTERIOR)
        self.kappa = complex(kappa)

    def rows(self, basis, points):
        return -basis.laplacian(points) - self.kappa**2 * basis.values(points)

    def line_polynomial(self):
        return np.array([-self.kappa**2, 0.0, -1.0], dtype=complex)


class Radiation(Operator):
    """sign * d/dx_axis - i beta, with data f(points)."""

    def __init__(self, region: int, sign: int, beta: complex, axis: int,
                 source: Optional[Callable[[np.ndarray], np.ndarray]] = None):
        super().__init__(region)
        self.sign = sign
        self.beta = complex(beta)
        self.axis = axis
        self.source = source

    def rows(self, basis, points):
        return self.sign * basis.partial(points, self.axis) - 1j * self.beta * basis.values(points)

    def data(self, points):
        if self.source is None:
            return super().data(points)
        return np.asarray(self.source(np.asarray(points)), dtype=complex)

    def line_polynomial(self):
        return np.array([-1j * self.beta, self.sign, 0.0], dtype=complex)


class Dirichlet(Operator):
    def __init__(self):
        super().__init__(WALL)

    def rows(self, basis, points):
        return basis.values(points).astype(complex)


class DtN(Operator):
    """
    sign * d/dx2 - i sum_{m <= mu} beta_m <., psi_m> psi_m(x1) at one end of a
    duct; the inflow end carries the modal source data.
    """

    def __init__(self, region: int, sign: int, modal: ModalBasis, domain: Domain,
                 quad_tol: float, with_source: bool = False):
        super().__init__(region)
        self.sign = sign
        self.modal = modal
        self.domain = domain
        self.quad_tol = quad_tol
        self.with_source = with_source

    def inner_products(self, basis: ColumnBasis) -> np.ndarray:
        modes = self.modal.propagating()
        station = self.modal.station
        key = (basis.cache_key, self.modal.lower, self.modal.width, self.modal.norm.value, station, modes.size,
               self.quad_tol)

        def compute():
            def trace(x1):
                pts = np.column_stack([x1, np.full_like(x1, station)])
                return basis.values(pts)

            result = project_onto_modes(trace, modes, station, self.domain, self.quad_tol, self.modal.norm)
            if not result.converged:
                message = f"DtN quadrature at x2={station:g} did not reach tol {self.quad_tol:g}"
                self.warnings.append(message)
                logger.warning(message)
            logger.debug("DtN projections at x2=%g: %d evals", station, result.n_evals)
            return np.asarray(result.value, dtype=complex).reshape(basis.size, modes.size)

        return INNER_PRODUCTS.get_or_compute(key, compute)

    def rows(self, basis, points):
        points = np.asarray(points, dtype=float)
        derivative = self.sign * basis.partial(points, 1)
        modes = self.modal.propagating()
        if modes.size == 0:
            return derivative.astype(complex)
        coupling = (self.modal.shapes(points[:, 0], modes) * self.modal.beta(modes)) @ self.inner_products(basis).T
        return derivative - 1j * coupling

    def data(self, points):
        points = np.asarray(points, dtype=float)
        modes = self.modal.propagating()
        if not self.with_source or modes.size == 0:
            return super().data(points)
        weights = self.modal.amplitudes(modes) * self.modal.beta(modes)
        return -2j * self.modal.shapes(points[:, 0], modes) @ weights


class ProblemSpec(BaseModel):
    """One of the three model problems: wavenumber, domain and operator list."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: ProblemKind
    domain: Any
    kappa: complex
    mode: int = Field(default=1, ge=1)
    source: Optional[float] = None
    mode_norm: ModeNorm = ModeNorm.SQRT2
    quad_tol: float = Field(default_factory=lambda: get_settings().quad_tol, gt=0)

    @model_validator(mode="after")
    def check_problem(self):
        expected = {
            ProblemKind.INTERVAL: DomainKind.INTERVAL,
            ProblemKind.RECTANGLE: DomainKind.RECTANGLE,
            ProblemKind.DUCT: DomainKind.WAVEGUIDE,
        }[self.kind]
        if self.domain.kind is not expected:
            raise InvalidInputError(f"Problem '{self.kind.value}' needs a {expected.value} domain")
        if self.kind is ProblemKind.RECTANGLE and abs(self.beta) < 1e-12:
            raise InvalidInputError(f"beta_{self.mode} vanishes for kappa={self.kappa}; choose another kappa")
        if self.kind is ProblemKind.DUCT:
            if self.source is None:
                raise InvalidInputError("The duct problem needs a source location")
            lower, upper = cross_section(self.domain, 0.0)
            if not lower < self.source < upper:
                raise InvalidInputError(f"Source {self.source} is outside ({lower:.4g}, {upper:.4g})")
        return self

    @classmethod
    def interval(cls, kappa: complex, **kwargs) -> "ProblemSpec":
        return cls(kind=ProblemKind.INTERVAL, domain=Interval(), kappa=kappa, **kwargs)

    @classmethod
    def rectangle(cls, kappa: complex, mode: int = 1, width: float = 1.0, **kwargs) -> "ProblemSpec":
        return cls(kind=ProblemKind.RECTANGLE, domain=Rectangle(width=width), kappa=kappa, mode=mode, **kwargs)

    @classmethod
    def duct(cls, kappa: complex = 6 * np.pi, source: float = 0.3, domain: Optional[Waveguide] = None,
             **kwargs) -> "ProblemSpec":
        return cls(kind=ProblemKind.DUCT, domain=domain or named_domain("duct-m"), kappa=kappa,
                   source=source, **kwargs)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def alpha(self) -> float:
        return self.mode * np.pi / self.domain.width

    @property
    def beta(self) -> complex:
        return complex(axial_wavenumber(self.kappa, self.alpha))

    @property
    def has_analytic(self) -> bool:
        return self.kind is not ProblemKind.DUCT

    def operators(self) -> Dict[int, Operator]:
        """Fresh operator objects keyed by region tag."""
        kappa = self.kappa
        if self.kind is ProblemKind.INTERVAL:
            return {
                INTERIOR: Helmholtz(kappa),
                INFLOW: Radiation(INFLOW, -1, kappa, 0, lambda p: np.full(p.shape[0], -2j * kappa)),
                OUTFLOW: Radiation(OUTFLOW, 1, kappa, 0),
            }
        if self.kind is ProblemKind.RECTANGLE:
            beta, alpha = self.beta, self.alpha
            return {
                INTERIOR: Helmholtz(kappa),
                INFLOW: Radiation(INFLOW, -1, beta, 1, lambda p: -2j * beta * np.sin(alpha * p[:, 0])),
                OUTFLOW: Radiation(OUTFLOW, 1, beta, 1),
                WALL: Dirichlet(),
            }
        inflow = ModalBasis.at(self.domain, 0.0, kappa, self.source, norm=self.mode_norm)
        outflow = ModalBasis.at(self.domain, 1.0, kappa, norm=self.mode_norm)
        return {
            INTERIOR: Helmholtz(kappa),
            INFLOW: DtN(INFLOW, -1, inflow, self.domain, self.quad_tol, with_source=True),
            OUTFLOW: DtN(OUTFLOW, 1, outflow, self.domain, self.quad_tol),
            WALL: Dirichlet(),
        }

    def analytic_solution(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind is ProblemKind.INTERVAL:
            return np.exp(1j * self.kappa * points[:, 0])
        if self.kind is ProblemKind.RECTANGLE:
            return np.exp(1j * self.beta * points[:, 1]) * np.sin(self.alpha * points[:, 0])
        raise InvalidInputError("The duct problem has no closed-form solution")

    def same_as(self, other: "ProblemSpec") -> bool:
        return (self.kind is other.kind and self.kappa == other.kappa and self.mode == other.mode
                and self.source == other.source and self.domain == other.domain
                and self.mode_norm is other.mode_norm)


class AssembledSystem(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    matrix: np.ndarray
    rhs: np.ndarray
    row_nodes: np.ndarray
    row_regions: np.ndarray
    warnings: List[str] = Field(default_factory=list)

    def __iter__(self):
        return iter((self.matrix, self.rhs))


class Approximant(BaseModel):
    """s(x) = sum_j lambda_j * column_j(x)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    kernel: Kernel
    centers: NodeSet
    coefficients: np.ndarray
    basis: Any
    cond: float = float("nan")
    near_singular: bool = False
    warnings: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_length(self):
        if self.coefficients.shape != (self.centers.size,):
            raise InvalidInputError(
                f"Expected {self.centers.size} coefficients, got {self.coefficients.shape}")
        return self

    @property
    def size(self) -> int:
        return self.centers.size

    def evaluate(self, points) -> np.ndarray:
        return _chunked(points, lambda p: self.basis.values(p) @ self.coefficients)

    def residual(self, problem: ProblemSpec, points) -> np.ndarray:
        """L^1 s - f^1 (interior operator)."""
        interior = problem.operators()[INTERIOR]
        return _chunked(points, lambda p: interior.rows(self.basis, p) @ self.coefficients - interior.data(p))


def _chunked(points, fn) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] <= EVAL_CHUNK:
        return fn(points)
    return np.concatenate([fn(points[i:i + EVAL_CHUNK]) for i in range(0, points.shape[0], EVAL_CHUNK)])


def evaluate(approx: Approximant, points) -> np.ndarray:
    return approx.evaluate(points)


def residual(approx: Approximant, problem: ProblemSpec, points) -> np.ndarray:
    return approx.residual(problem, points)


def apply_operator(op: Operator, kernel: Kernel, center, point) -> complex:
    """L^k phi_j at a single point."""
    columns = RBFColumns(kernel, np.atleast_2d(np.asarray(center, dtype=float)))
    return complex(op.rows(columns, np.atleast_2d(np.asarray(point, dtype=float)))[0, 0])


def _check_nodes(problem: ProblemSpec, nodes: NodeSet, operators: Dict[int, Operator]):
    if nodes.dim != problem.dim:
        raise InvalidInputError(f"Node set is {nodes.dim}D, problem is {problem.dim}D")
    unknown = set(np.unique(nodes.region).tolist()) - set(operators)
    if unknown:
        raise InvalidInputError(f"Node tags {sorted(unknown)} have no operator in problem '{problem.kind.value}'")
    if nodes.min_separation() <= 0:
        raise InvalidInputError("Node set contains duplicate points")


def _assemble(problem: ProblemSpec, nodes: NodeSet, basis: ColumnBasis) -> AssembledSystem:
    operators = problem.operators()
    _check_nodes(problem, nodes, operators)
    blocks, data, row_nodes, row_regions = [], [], [], []
    for region in sorted(operators):
        idx = nodes.indices(region)
        if idx.size == 0:
            continue
        op = operators[region]
        points = nodes.points[idx]
        blocks.append(op.rows(basis, points))
        data.append(op.data(points))
        row_nodes.append(idx)
        row_regions.append(np.full(idx.size, region))
    warnings = [w for op in operators.values() for w in op.warnings]
    logger.debug("Assembled %s system of size %d", problem.kind.value, nodes.size)
    return AssembledSystem(matrix=np.vstack(blocks).astype(complex), rhs=np.concatenate(data),
                           row_nodes=np.concatenate(row_nodes), row_regions=np.concatenate(row_regions),
                           warnings=warnings)


def assemble_nonsymmetric(problem: ProblemSpec, nodes: NodeSet, kernel: Kernel) -> AssembledSystem:
    """Rows grouped by region in operator order, columns in node order."""
    return _assemble(problem, nodes, RBFColumns(kernel, nodes.points))


def symmetric_columns(problem: ProblemSpec, nodes: NodeSet, kernel: Kernel) -> SymmetricColumns1D:
    if problem.kind is not ProblemKind.INTERVAL:
        raise InvalidInputError("Symmetric collocation is implemented for the 1D problem only")
    operators = problem.operators()
    signs = (-1.0) ** np.arange(3)
    polynomials = np.array([np.conj(operators[int(k)].line_polynomial()) * signs for k in nodes.region])
    return SymmetricColumns1D(kernel, nodes.points, polynomials)


def assemble_symmetric_1d(problem: ProblemSpec, nodes: NodeSet, kernel: Kernel) -> AssembledSystem:
    """
    Blocks L^j_x conj(L^k_xi) psi. Rows and columns both follow the region
    order so that the matrix is Hermitian.
    """
    order = np.argsort(nodes.region, kind="stable")
    ordered = nodes.permuted(order)
    system = _assemble(problem, ordered, symmetric_columns(problem, ordered, kernel))
    system.row_nodes = order[system.row_nodes]
    return system


def _finish(problem, nodes, kernel, system, basis) -> Approximant:
    factors = lu_factor(system.matrix)
    coefficients = lu_solve(factors, system.rhs)
    cond = cond_estimate(system.matrix, factors)
    near_singular = not cond < NEAR_SINGULAR_COND
    if near_singular:
        logger.warning("Near-singular %s system: N=%d, eps=%g, cond=%.2e",
                       problem.kind.value, nodes.size, kernel.shape, cond)
    logger.debug("Solved %s N=%d eps=%g cond=%.2e", problem.kind.value, nodes.size, kernel.shape, cond)
    return Approximant(kernel=kernel, centers=nodes, coefficients=coefficients, basis=basis, cond=cond,
                       near_singular=near_singular, warnings=list(system.warnings))


def solve(problem: ProblemSpec, nodes: NodeSet, kernel: Kernel) -> Approximant:
    """Non-symmetric collocation solve with a condition estimate attached."""
    system = assemble_nonsymmetric(problem, nodes, kernel)
    return _finish(problem, nodes, kernel, system, RBFColumns(kernel, nodes.points))


def solve_symmetric_1d(problem: ProblemSpec, nodes: NodeSet, kernel: Kernel) -> Approximant:
    order = np.argsort(nodes.region, kind="stable")
    ordered = nodes.permuted(order)
    basis = symmetric_columns(problem, ordered, kernel)
    return _finish(problem, ordered, kernel, _assemble(problem, ordered, basis), basis)
