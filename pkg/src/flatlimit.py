"""
Flat-limit analysis: monomial bases, the interpolation matrix P and the
collocation matrix Q on monomials, their ranks and nullspaces, the minimal
non-degenerate basis and the four-way classification of the eps -> 0 limit.

    case   P           Q
    ----   ---------   ---------
    i      nonsingular nonsingular   limit exists, degree K polynomial
    ii     singular    nonsingular   limit exists, degree M polynomial
    iii    nonsingular singular      diverges like eps^-2
    iv     singular    singular      limit likely, not certain
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import svd, svdvals

from src.collocation import ProblemKind, ProblemSpec, solve
from src.errors import InsufficientDataError, InvalidInputError, SolverError
from src.geometry import NodeSet, eval_grid, interval_regions, rectangle_regions
from src.kernels import Kernel, KernelFamily
from src.settings import get_settings

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10
INDETERMINATE_BAND = 10.0
DEFAULT_PROBE_EPS = (0.5, 0.35, 0.25, 0.18, 0.125)


def poly_dim(degree: int, dim: int) -> int:
    """Dimension of the polynomials of total degree <= degree in dim variables."""
    if degree < 0 or dim < 1:
        raise InvalidInputError(f"poly_dim needs degree >= 0 and dim >= 1, got ({degree}, {dim})")
    return math.comb(degree + dim, degree)


def degree_for(n: int, dim: int) -> int:
    """Smallest K with poly_dim(K, dim) >= n."""
    if n < 1:
        raise InvalidInputError(f"degree_for needs n >= 1, got {n}")
    degree = 0
    while poly_dim(degree, dim) < n:
        degree += 1
    return degree


def floor_degree(n: int) -> int:
    """Largest K with poly_dim(K, 2) <= n, i.e. floor(sqrt(2) sqrt(n + 1/8) - 1.5)."""
    return int(np.floor(np.sqrt(2.0 * n + 0.25) - 1.5))


def graded_exponents(dim: int) -> Iterator[Tuple[int, ...]]:
    """All exponent tuples by total degree; within a degree, lexicographically descending."""

    def of_degree(degree, width):
        if width == 1:
            yield (degree,)
            return
        for first in range(degree, -1, -1):
            for rest in of_degree(degree - first, width - 1):
                yield (first,) + rest

    degree = 0
    while True:
        yield from of_degree(degree, dim)
        degree += 1


class MonomialBasis(BaseModel):
    model_config = ConfigDict(frozen=True)

    dim: int = Field(ge=1)
    exponents: Tuple[Tuple[int, ...], ...]

    @classmethod
    def graded(cls, n: int, dim: int) -> "MonomialBasis":
        stream = graded_exponents(dim)
        return cls(dim=dim, exponents=tuple(next(stream) for _ in range(n)))

    def __len__(self) -> int:
        return len(self.exponents)

    @property
    def degree(self) -> int:
        return sum(self.exponents[-1]) if self.exponents else 0

    def labels(self) -> List[str]:
        names = ["x"] if self.dim == 1 else [f"x{a + 1}" for a in range(self.dim)]
        out = []
        for exps in self.exponents:
            terms = [n if e == 1 else f"{n}^{e}" for n, e in zip(names, exps) if e]
            out.append("*".join(terms) or "1")
        return out


class MonomialColumns:
    """Monomials as a column basis for the collocation operators."""

    def __init__(self, basis: MonomialBasis):
        self.basis = basis
        self.exponents = np.array(basis.exponents, dtype=int).reshape(len(basis), basis.dim)
        self.size = len(basis)
        self.dim = basis.dim

    @property
    def cache_key(self):
        return ("mono", self.basis.exponents)

    def _power(self, points, exponents):
        points = np.asarray(points, dtype=float)
        return np.prod(points[:, None, :] ** np.clip(exponents, 0, None)[None, :, :], axis=2)

    def values(self, points):
        return self._power(points, self.exponents)

    def partial(self, points, axis: int):
        shifted = self.exponents.copy()
        shifted[:, axis] -= 1
        return self.exponents[:, axis] * self._power(points, shifted)

    def laplacian(self, points):
        total = 0.0
        for axis in range(self.dim):
            e = self.exponents[:, axis]
            shifted = self.exponents.copy()
            shifted[:, axis] -= 2
            total = total + e * (e - 1) * self._power(points, shifted)
        return total


def build_P(nodes: NodeSet, basis: MonomialBasis) -> np.ndarray:
    return MonomialColumns(basis).values(nodes.points)


def build_Q(problem: ProblemSpec, nodes: NodeSet, basis: MonomialBasis) -> np.ndarray:
    """Row i applies node i's operator to every monomial (rows in node order)."""
    if problem.kind is ProblemKind.DUCT:
        raise InvalidInputError("Q is not defined for the duct problem")
    operators = problem.operators()
    columns = MonomialColumns(basis)
    Q = np.empty((nodes.size, len(basis)), dtype=complex)
    for region in np.unique(nodes.region):
        if int(region) not in operators:
            raise InvalidInputError(f"Node tag {region} has no operator in problem '{problem.kind.value}'")
        idx = nodes.indices(region)
        Q[idx] = operators[int(region)].rows(columns, nodes.points[idx])
    return Q


class RankInfo(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    rank: int
    nullspace: np.ndarray
    singular_values: np.ndarray
    indeterminate: bool


def _normalize(vector: np.ndarray) -> np.ndarray:
    pivot = vector[np.argmax(np.abs(vector))]
    return vector / pivot


def rank_and_nullspace(matrix: np.ndarray) -> RankInfo:
    """Numerical rank with threshold RANK_TOLERANCE * N * sigma_1."""
    matrix = np.asarray(matrix)
    _, s, vh = svd(matrix)
    n = matrix.shape[1]
    threshold = RANK_TOLERANCE * n * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > threshold))
    near = (s > threshold / INDETERMINATE_BAND) & (s < threshold * INDETERMINATE_BAND)
    nullspace = np.array([_normalize(v) for v in vh[rank:].conj()]).reshape(n - rank, n)
    return RankInfo(rank=rank, nullspace=nullspace, singular_values=s, indeterminate=bool(np.any(near)))


def minimal_basis(nodes: NodeSet) -> Tuple[MonomialBasis, int]:
    """Greedy graded scan keeping monomials that raise the numerical rank of P."""
    n, dim = nodes.size, nodes.dim
    kept: List[Tuple[int, ...]] = []
    columns: List[np.ndarray] = []
    for exps in graded_exponents(dim):
        if len(kept) == n:
            break
        if sum(exps) > n:
            raise SolverError("Monomial scan did not reach full rank")
        column = np.prod(nodes.points ** np.array(exps), axis=1)
        trial = np.column_stack(columns + [column])
        s = svdvals(trial)
        if np.sum(s > RANK_TOLERANCE * n * s[0]) > len(kept):
            kept.append(exps)
            columns.append(column)
    basis = MonomialBasis(dim=dim, exponents=tuple(kept))
    return basis, basis.degree


class LimitCase(str, Enum):
    I = "i"
    II = "ii"
    III = "iii"
    IV = "iv"


class LimitReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    rank_P: int
    rank_Q: int
    nullspace_P: np.ndarray
    nullspace_Q: np.ndarray
    m: int
    p: int
    M: int
    K: int
    case: LimitCase
    basis: MonomialBasis
    minimal: MonomialBasis
    indeterminate: bool = False

    def summary(self) -> str:
        lines = [
            f"case: {self.case.value}",
            f"rank_P: {self.rank_P} (m = {self.m})",
            f"rank_Q: {self.rank_Q} (p = {self.p})",
            f"K: {self.K}",
            f"M: {self.M}",
            f"minimal basis: {', '.join(self.minimal.labels())}",
        ]
        for name, space in (("P", self.nullspace_P), ("Q", self.nullspace_Q)):
            for vector in space:
                terms = [f"({c.real:+.6g}{c.imag:+.6g}j)*{label}"
                         for c, label in zip(vector, self.basis.labels()) if abs(c) > 1e-12]
                lines.append(f"nullspace {name}: {' '.join(terms)}")
        if self.indeterminate:
            lines.append("warning: rank decision is within 10x of the tolerance")
        return "\n".join(lines)


def _case(m: int, p: int) -> LimitCase:
    if m == 0:
        return LimitCase.I if p == 0 else LimitCase.III
    return LimitCase.II if p == 0 else LimitCase.IV


def classify(problem: ProblemSpec, nodes: NodeSet) -> LimitReport:
    n, dim = nodes.size, nodes.dim
    basis = MonomialBasis.graded(n, dim)
    p_info = rank_and_nullspace(build_P(nodes, basis))
    q_info = rank_and_nullspace(build_Q(problem, nodes, basis))
    minimal, M = minimal_basis(nodes)
    m, p = n - p_info.rank, n - q_info.rank
    report = LimitReport(
        rank_P=p_info.rank, rank_Q=q_info.rank,
        nullspace_P=p_info.nullspace, nullspace_Q=q_info.nullspace,
        m=m, p=p, M=M, K=degree_for(n, dim), case=_case(m, p),
        basis=basis, minimal=minimal,
        indeterminate=p_info.indeterminate or q_info.indeterminate,
    )
    if report.indeterminate:
        logger.warning("Borderline rank decision for %d nodes; case %s is indeterminate", n, report.case.value)
    return report


def nullspace_polynomial(report: LimitReport, which: str, k: int, points) -> np.ndarray:
    """Values of the k-th nullspace polynomial of P or Q at points."""
    spaces = {"P": report.nullspace_P, "Q": report.nullspace_Q}
    if which not in spaces:
        raise InvalidInputError(f"which must be 'P' or 'Q', got '{which}'")
    space = spaces[which]
    if not 0 <= k < space.shape[0]:
        raise InvalidInputError(f"{which} has a {space.shape[0]}-dimensional nullspace, no vector {k}")
    return MonomialColumns(report.basis).values(np.atleast_2d(np.asarray(points, dtype=float))) @ space[k]


class ProbeResult(BaseModel):
    slope: float
    eps_used: List[float]
    norms: List[float]


def divergence_probe(problem: ProblemSpec, nodes: NodeSet, family: KernelFamily,
                     eps_list: Sequence[float] = DEFAULT_PROBE_EPS, probe: int = 11,
                     threads: Optional[int] = None) -> ProbeResult:
    """Slope of log max|s| against log eps over the solvable eps values."""
    grid = eval_grid(problem.domain, probe, probe)

    def job(eps):
        try:
            approx = solve(problem, nodes, Kernel(family=family, shape=eps))
        except SolverError as exc:
            logger.warning("Probe solve failed at eps=%g: %s", eps, exc)
            return None
        norm = float(np.max(np.abs(approx.evaluate(grid.points))))
        return norm if np.isfinite(norm) and norm > 0 else None

    threads = threads or get_settings().threads
    with ThreadPoolExecutor(max_workers=threads) as pool:
        norms = list(pool.map(job, eps_list))
    usable = [(e, v) for e, v in zip(eps_list, norms) if v is not None]
    if len(usable) < 3:
        raise InsufficientDataError(f"Only {len(usable)} usable eps values for the divergence fit")
    eps_used, values = zip(*usable)
    slope, _ = np.polyfit(np.log(eps_used), np.log(values), 1)
    return ProbeResult(slope=float(slope), eps_used=list(eps_used), norms=list(values))


class LimitFixture(BaseModel):
    name: str
    points: List[Tuple[float, float]]
    kappa: float
    mode: int = 1

    def problem(self, kappa: Optional[float] = None) -> ProblemSpec:
        return ProblemSpec.rectangle(kappa if kappa is not None else self.kappa, mode=self.mode)

    def nodes(self) -> NodeSet:
        points = np.array(self.points, dtype=float)
        return NodeSet.from_points(points, rectangle_regions(points, 1.0))


_SQRT_9233 = math.sqrt(9233.0)

EXAMPLES: Dict[str, LimitFixture] = {
    "example-ii": LimitFixture(
        name="example-ii",
        points=[(0.5, 0.5), (1.0, 0.5)] + [(k / 4, 0.0) for k in range(4)] + [(k / 4, 1.0) for k in range(4)],
        kappa=2.2 * math.pi,
    ),
    "example-iii": LimitFixture(
        name="example-iii",
        points=[(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (0.0, 1.0), (0.25, 1.0), (1.0, 1.0),
                (1 / 6, (2545 - 23 * _SQRT_9233) / 3936), (0.25, 0.25), (0.75, 0.25), (0.75, 969 / 1804)],
        kappa=4 * math.sqrt(246) / 9,
    ),
    "example-iv": LimitFixture(
        name="example-iv",
        points=[(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] + [(0.5, k / 5) for k in range(6)],
        kappa=2.2 * math.pi,
    ),
}


def interval_fixture(points: Sequence[float]) -> NodeSet:
    x = np.asarray(points, dtype=float)
    return NodeSet.from_points(x[:, None], interval_regions(x))
