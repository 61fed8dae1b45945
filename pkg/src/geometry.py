"""
Domains, collocation node sets and evaluation grids for the three waveguide
model problems.

Region tags follow the operator order of the problems:
    1  interior (Helmholtz equation)
    2  inflow boundary, x = 0 (1D) or x2 = 0
    3  outflow boundary, x = 1 (1D) or x2 = 1
    4  Dirichlet walls, x1 in {0, L1} or x1 on a curved wall
"""
import logging
from enum import Enum
from typing import Callable, Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import cumulative_simpson
from scipy.spatial.distance import pdist

from src.errors import InvalidInputError

logger = logging.getLogger(__name__)

INTERIOR = 1
INFLOW = 2
OUTFLOW = 3
WALL = 4

# Central-difference step for curve slopes and the arc-length table resolution
ARC_STEP = 1e-6
ARC_SAMPLES = 4001

PERTURBATION = 0.25
MAX_PERTURBATION_TRIES = 20


class DomainKind(str, Enum):
    INTERVAL = "interval"
    RECTANGLE = "rectangle"
    WAVEGUIDE = "waveguide"


class Domain(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: DomainKind

    @property
    def dim(self) -> int:
        return 1 if self.kind is DomainKind.INTERVAL else 2


class Interval(Domain):
    """The unit interval (0, 1)."""

    kind: DomainKind = DomainKind.INTERVAL

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        x = np.asarray(points, dtype=float)[:, 0]
        return (x >= -tol) & (x <= 1 + tol)


class Rectangle(Domain):
    """(0, width) x (0, 1); x1 is the cross-section, x2 the propagation axis."""

    kind: DomainKind = DomainKind.RECTANGLE
    width: float = Field(default=1.0, gt=0)

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return ((p[:, 0] >= -tol) & (p[:, 0] <= self.width + tol)
                & (p[:, 1] >= -tol) & (p[:, 1] <= 1 + tol))


class Waveguide(Domain):
    """Duct of unit length enclosed between x1 = lower(x2) and x1 = upper(x2)."""

    kind: DomainKind = DomainKind.WAVEGUIDE
    name: str = "custom"
    lower: Callable[[np.ndarray], np.ndarray]
    upper: Callable[[np.ndarray], np.ndarray]
    # Nominal cross-section used for the node step h1
    reference_width: float = Field(default=0.8, gt=0)

    @model_validator(mode="after")
    def check_width(self):
        x2 = np.linspace(0.0, 1.0, 201)
        if np.any(self.width(x2) <= 0):
            raise InvalidInputError(f"Waveguide '{self.name}' has non-positive width")
        return self

    def gamma1(self, x2):
        x2 = np.asarray(x2, dtype=float)
        return np.asarray(self.lower(x2), dtype=float) + np.zeros_like(x2)

    def gamma2(self, x2):
        x2 = np.asarray(x2, dtype=float)
        return np.asarray(self.upper(x2), dtype=float) + np.zeros_like(x2)

    def width(self, x2):
        return self.gamma2(x2) - self.gamma1(x2)

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        x1, x2 = p[:, 0], p[:, 1]
        return ((x2 >= -tol) & (x2 <= 1 + tol)
                & (x1 >= self.gamma1(x2) - tol) & (x1 <= self.gamma2(x2) + tol))

    @classmethod
    def straight(cls, width: float = 1.0) -> "Waveguide":
        return cls(
            name=f"straight-{width:g}",
            lower=lambda x2: np.zeros_like(x2),
            upper=lambda x2: np.full_like(x2, width),
            reference_width=width,
        )


def _duct_lower(x2):
    return 0.3 * np.exp(-20.0 * (x2 - 0.5) ** 2)


def _duct_upper(x2):
    return 0.8 - 0.3 * (np.exp(-80.0 * (x2 - 0.3) ** 2) + np.exp(-80.0 * (x2 - 0.7) ** 2))


DOMAINS: Dict[str, Callable[[], Waveguide]] = {
    "duct-m": lambda: Waveguide(name="duct-m", lower=_duct_lower, upper=_duct_upper),
}


def named_domain(name: str) -> Waveguide:
    if name not in DOMAINS:
        raise InvalidInputError(f"Unknown domain '{name}', expected one of {sorted(DOMAINS)}")
    return DOMAINS[name]()


class NodeSet(BaseModel):
    """Collocation centers with region tags."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    points: np.ndarray
    region: np.ndarray
    n1: int
    n2: int = 1
    h1: float
    h2: float = 0.0
    seed: Optional[int] = None

    @model_validator(mode="after")
    def check_shapes(self):
        if self.points.ndim != 2 or self.region.shape != (self.points.shape[0],):
            raise InvalidInputError("NodeSet points must be (N, d) with one region tag per point")
        return self

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def h(self) -> float:
        """Fill-distance proxy: max(h1, h2)."""
        return max(self.h1, self.h2)

    def indices(self, region: int) -> np.ndarray:
        return np.flatnonzero(self.region == region)

    def counts(self) -> Dict[int, int]:
        tags, counts = np.unique(self.region, return_counts=True)
        return {int(t): int(c) for t, c in zip(tags, counts)}

    def min_separation(self) -> float:
        if self.size < 2:
            return np.inf
        return float(pdist(self.points).min())

    def permuted(self, order) -> "NodeSet":
        order = np.asarray(order)
        return self.model_copy(update={"points": self.points[order], "region": self.region[order]})

    @classmethod
    def from_points(cls, points, region, h1: Optional[float] = None, h2: float = 0.0) -> "NodeSet":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        region = np.asarray(region, dtype=int)
        if h1 is None:
            h1 = float(pdist(points).min()) if points.shape[0] > 1 else 1.0
        return cls(points=points, region=region, n1=points.shape[0], h1=h1, h2=h2)


class EvalGrid(BaseModel):
    """Evaluation points; `interior` marks points off the domain boundary."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    points: np.ndarray
    shape: tuple
    interior: np.ndarray
    inside: np.ndarray

    @property
    def size(self) -> int:
        return self.points.shape[0]


def cross_section(domain: Domain, x2: float):
    """(lower, upper) x1-bounds of the slice at station x2."""
    if domain.kind is DomainKind.RECTANGLE:
        return 0.0, domain.width
    if domain.kind is DomainKind.WAVEGUIDE:
        return float(domain.gamma1(x2)), float(domain.gamma2(x2))
    raise InvalidInputError("A 1D interval has no cross-section")


def interval_regions(points) -> np.ndarray:
    x = np.asarray(points, dtype=float).reshape(-1)
    region = np.full(x.shape, INTERIOR)
    region[np.isclose(x, 0.0, atol=1e-12)] = INFLOW
    region[np.isclose(x, 1.0, atol=1e-12)] = OUTFLOW
    return region


def rectangle_regions(points, width: float = 1.0, atol: float = 1e-12) -> np.ndarray:
    """Tags for points in [0, width] x [0, 1]; corners go to the walls."""
    p = np.asarray(points, dtype=float)
    region = np.full(p.shape[0], INTERIOR)
    region[np.abs(p[:, 1]) <= atol] = INFLOW
    region[np.abs(p[:, 1] - 1.0) <= atol] = OUTFLOW
    region[(np.abs(p[:, 0]) <= atol) | (np.abs(p[:, 0] - width) <= atol)] = WALL
    return region


def nodes_interval(n: int) -> NodeSet:
    if n < 3:
        raise InvalidInputError(f"Interval node count must be >= 3, got {n}")
    x = np.linspace(0.0, 1.0, n)
    return NodeSet(points=x[:, None], region=interval_regions(x), n1=n, h1=1.0 / (n - 1))


def nodes_rectangle(n1: int, n2: int, width: float = 1.0) -> NodeSet:
    if n1 < 3 or n2 < 3:
        raise InvalidInputError(f"Rectangle node counts must be >= 3, got {n1}x{n2}")
    x1, x2 = np.meshgrid(np.linspace(0.0, width, n1), np.linspace(0.0, 1.0, n2))
    points = np.column_stack([x1.ravel(), x2.ravel()])
    return NodeSet(points=points, region=rectangle_regions(points, width),
                   n1=n1, n2=n2, h1=width / (n1 - 1), h2=1.0 / (n2 - 1))


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _arc_table(curve: Callable):
    """Cumulative arc length of x1 = curve(x2) over x2 in [0, 1]."""
    x2 = np.linspace(0.0, 1.0, ARC_SAMPLES)
    slope = (curve(x2 + ARC_STEP) - curve(x2 - ARC_STEP)) / (2 * ARC_STEP)
    return x2, cumulative_simpson(np.sqrt(1.0 + slope**2), x=x2, initial=0.0)


def _sample_curve(curve: Callable, spacing: float, rng: np.random.Generator) -> np.ndarray:
    x2_table, s_table = _arc_table(curve)
    length = s_table[-1]
    count = max(2, _round_half_up(length / spacing) + 1)
    s = np.linspace(0.0, length, count)
    ds = length / (count - 1)
    s[1:-1] += rng.uniform(-PERTURBATION, PERTURBATION, count - 2) * ds
    x2 = np.interp(s, s_table, x2_table)
    x2[0], x2[-1] = 0.0, 1.0
    return np.column_stack([curve(x2), x2])


def nodes_waveguide(n1: int, n2: int, domain: Waveguide, seed: int = 0) -> NodeSet:
    """
    Vertical lines of nodes at x2 = j*h2 with as even a spacing as possible,
    curved walls sampled at uniform arc length, then a seeded perturbation.
    """
    if n1 < 4 or n2 < 4:
        raise InvalidInputError(f"Waveguide node counts must be >= 4, got {n1}x{n2}")
    if domain.kind is not DomainKind.WAVEGUIDE:
        raise InvalidInputError("nodes_waveguide needs a waveguide domain")

    h1 = domain.reference_width / (n1 - 1)
    h2 = 1.0 / (n2 - 1)
    rng = np.random.default_rng(seed)
    separation = 0.3 * min(h1, h2)
    margin = 0.1 * h1

    points = []
    regions = []
    for curve in (domain.gamma1, domain.gamma2):
        wall = _sample_curve(curve, h2, rng)
        points.extend(wall)
        regions.extend([WALL] * len(wall))

    stations = np.linspace(0.0, 1.0, n2)
    interior = []
    for j, x2 in enumerate(stations):
        lo, hi = float(domain.gamma1(x2)), float(domain.gamma2(x2))
        count = max(2, _round_half_up((hi - lo) / h1) + 1)
        if count <= 2:
            continue
        spacing = (hi - lo) / (count - 1)
        x1 = lo + spacing * np.arange(1, count - 1)
        if j == 0 or j == n2 - 1:
            x1 = x1 + rng.uniform(-PERTURBATION, PERTURBATION, x1.size) * spacing
            points.extend(np.column_stack([x1, np.full_like(x1, x2)]))
            regions.extend([INFLOW if j == 0 else OUTFLOW] * x1.size)
        else:
            interior.extend((a, x2) for a in x1)

    placed = np.array(points)
    accepted = []
    for base in interior:
        base = np.asarray(base)
        chosen = base
        for _ in range(MAX_PERTURBATION_TRIES):
            candidate = base + rng.uniform(-PERTURBATION, PERTURBATION, 2) * (h1, h2)
            lo, hi = domain.gamma1(candidate[1]), domain.gamma2(candidate[1])
            if not lo + margin < candidate[0] < hi - margin:
                continue
            others = np.vstack([placed] + accepted) if accepted else placed
            if np.min(np.linalg.norm(others - candidate, axis=1)) >= separation:
                chosen = candidate
                break
        else:
            logger.debug("Keeping unperturbed interior node at %s", base)
        accepted.append(chosen[None, :])

    all_points = np.vstack([placed] + accepted)
    all_regions = np.array(regions + [INTERIOR] * len(accepted))
    logger.debug("Generated %d waveguide nodes for %dx%d (seed %d)", len(all_regions), n1, n2, seed)
    return NodeSet(points=all_points, region=all_regions, n1=n1, n2=n2, h1=h1, h2=h2, seed=seed)


def eval_grid(domain: Domain, m1: int, m2: int = 1) -> EvalGrid:
    """Tensor grid, station-major (all x1 for the first x2, then the next)."""
    if m1 < 2 or (domain.dim == 2 and m2 < 2):
        raise InvalidInputError(f"Grid resolution must be >= 2 per direction, got {m1}x{m2}")

    if domain.kind is DomainKind.INTERVAL:
        x = np.linspace(0.0, 1.0, m1)
        interior = np.ones(m1, dtype=bool)
        interior[[0, -1]] = False
        points = x[:, None]
        return EvalGrid(points=points, shape=(m1,), interior=interior,
                        inside=domain.contains(points))

    stations = np.linspace(0.0, 1.0, m2)
    if domain.kind is DomainKind.RECTANGLE:
        lower = np.zeros(m2)
        upper = np.full(m2, domain.width)
    else:
        lower, upper = domain.gamma1(stations), domain.gamma2(stations)
    frac = np.linspace(0.0, 1.0, m1)
    x1 = lower[:, None] + (upper - lower)[:, None] * frac[None, :]
    x2 = np.repeat(stations[:, None], m1, axis=1)
    points = np.column_stack([x1.ravel(), x2.ravel()])

    interior = np.ones((m2, m1), dtype=bool)
    interior[[0, -1], :] = False
    interior[:, [0, -1]] = False
    return EvalGrid(points=points, shape=(m1, m2), interior=interior.ravel(),
                    inside=domain.contains(points))
