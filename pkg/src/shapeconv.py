"""
Shape parameter studies: eps sweeps, eps selection from error estimates,
exponential convergence fits, the eps = C h^beta refinement driver and the
small-eps error models.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.collocation import Approximant, ProblemKind, ProblemSpec, solve
from src.errorest import error_report
from src.errors import HelmholtzError, InsufficientDataError, InvalidInputError
from src.flatlimit import floor_degree
from src.geometry import EvalGrid, NodeSet, eval_grid
from src.kernels import Kernel, KernelFamily
from src.settings import get_settings

logger = logging.getLogger(__name__)

ILL_CONDITIONED = 1e16
SPIKE_FACTOR = 10.0
GRID_1D = 201
GRID_2D = 60


class FitKind(str, Enum):
    INVERSE_H = "1/h"
    INVERSE_SQRT_H = "1/sqrt(h)"


def f_of_h(h, kind: FitKind) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    return 1.0 / h if FitKind(kind) is FitKind.INVERSE_H else 1.0 / np.sqrt(h)


class SweepRecord(BaseModel):
    eps: float
    h: float
    N: int
    true_error: float = float("nan")
    estimate: float = float("nan")
    residual_l2: float = float("nan")
    cond: float = float("nan")
    seed: Optional[int] = None
    flags: List[str] = Field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(flag.startswith("failed") for flag in self.flags)

    @property
    def ill_conditioned(self) -> bool:
        return bool(self.cond > ILL_CONDITIONED)

    def as_row(self) -> Dict[str, object]:
        return {
            "eps": self.eps, "N": self.N, "h": self.h, "true_error": self.true_error,
            "estimate": self.estimate, "residual_l2": self.residual_l2, "cond": self.cond,
            "flags": ";".join(self.flags),
        }


class FitResult(BaseModel):
    A_M: float
    C_M: float
    f_kind: FitKind
    r2: float
    points_used: int

    def predict(self, h) -> np.ndarray:
        return self.A_M * np.exp(-self.C_M * f_of_h(h, self.f_kind))


class EpsilonChoice(BaseModel):
    eps_est: float
    eps_res: float
    c_tilde: float
    h: float
    eps_true: Optional[float] = None
    edge_warning: bool = False


class ErrorModel(BaseModel):
    value: float
    unresolved: bool = False


def default_grid(problem: ProblemSpec) -> EvalGrid:
    if problem.dim == 1:
        return eval_grid(problem.domain, GRID_1D)
    return eval_grid(problem.domain, GRID_2D, GRID_2D)


def default_eps_grid(kind: ProblemKind) -> np.ndarray:
    """10^(-2 + 4q/9), q = 1..9 for the model problems; 3..14 in steps of 0.5 for the duct."""
    if ProblemKind(kind) is ProblemKind.DUCT:
        return np.linspace(3.0, 14.0, 23)
    return 10.0 ** (-2 + 4 * np.arange(1, 10) / 9)


def _run_cell(problem: ProblemSpec, nodes: NodeSet, family: KernelFamily, eps: float,
              grid: EvalGrid, reference, approx: Optional[Approximant] = None) -> SweepRecord:
    base = dict(eps=float(eps), h=nodes.h, N=nodes.size, seed=nodes.seed)
    try:
        approx = approx or solve(problem, nodes, Kernel(family=family, shape=eps))
        report = error_report(approx, problem, grid, reference=reference, threads=1)
    except HelmholtzError as exc:
        logger.warning("Sweep cell eps=%g N=%d failed: %s", eps, nodes.size, exc)
        return SweepRecord(**base, flags=[f"failed: {exc}"])
    flags = list(approx.warnings)
    if approx.near_singular:
        flags.append("near_singular")
    return SweepRecord(
        **base,
        true_error=report.true_error if report.true_error is not None else float("nan"),
        estimate=report.relative_estimate,
        residual_l2=report.relative_residual_l2,
        cond=approx.cond,
        flags=flags,
    )


def sweep(problem: ProblemSpec, node_sets: Sequence[NodeSet], family: KernelFamily,
          eps_list: Sequence[float], grid: Optional[EvalGrid] = None, reference=None,
          threads: Optional[int] = None) -> List[SweepRecord]:
    """
    One solve, error report and record per (eps, node set) pair. Estimates and
    residual norms are relative to max|s| on the grid; failed solves are kept as
    flagged records.
    """
    if not node_sets or len(eps_list) == 0:
        raise InvalidInputError("sweep needs at least one node set and one eps value")
    grid = grid or default_grid(problem)
    cells = [(nodes, float(eps)) for nodes in node_sets for eps in eps_list]
    threads = threads or get_settings().threads
    with ThreadPoolExecutor(max_workers=threads) as pool:
        records = list(pool.map(lambda cell: _run_cell(problem, cell[0], family, cell[1], grid, reference), cells))
    records.sort(key=lambda r: (r.eps, r.N, r.seed if r.seed is not None else -1))
    logger.info("Swept %d cells (%d node sets x %d eps), %d failed", len(records), len(node_sets),
                len(eps_list), sum(r.failed for r in records))
    return records


def _argmin(records: List[SweepRecord], field: str) -> Optional[SweepRecord]:
    usable = [r for r in records if not r.failed and np.isfinite(getattr(r, field))]
    return min(usable, key=lambda r: getattr(r, field)) if usable else None


def select_epsilon(records: Sequence[SweepRecord]) -> EpsilonChoice:
    """eps minimizing the estimate and the residual norm; C~ = mean of the two * sqrt(h)."""
    records = list(records)
    if len(records) < 3:
        raise InvalidInputError(f"select_epsilon needs at least 3 records, got {len(records)}")
    if len({r.N for r in records}) != 1:
        raise InvalidInputError("select_epsilon expects records from a single node set")
    best_est = _argmin(records, "estimate")
    best_res = _argmin(records, "residual_l2")
    if best_est is None or best_res is None:
        raise InsufficientDataError("Every record of the sweep failed")
    best_true = _argmin(records, "true_error")
    eps_grid = sorted({r.eps for r in records})
    edge = any(e in (eps_grid[0], eps_grid[-1]) for e in (best_est.eps, best_res.eps))
    if edge:
        logger.warning("eps minimum at the edge of the sweep range [%g, %g]", eps_grid[0], eps_grid[-1])
    h = records[0].h
    return EpsilonChoice(
        eps_est=best_est.eps, eps_res=best_res.eps,
        c_tilde=0.5 * (best_est.eps + best_res.eps) * np.sqrt(h), h=h,
        eps_true=best_true.eps if best_true is not None else None, edge_warning=edge,
    )


def fit_values(h, errors, f_kind: FitKind = FitKind.INVERSE_H) -> FitResult:
    """Least squares of log(error) against f(h)."""
    h = np.asarray(h, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if h.size < 3:
        raise InsufficientDataError(f"Exponential fit needs at least 3 points, got {h.size}")
    if np.ptp(h) == 0:
        raise InvalidInputError("Exponential fit needs at least two distinct h values")
    x = f_of_h(h, f_kind)
    y = np.log(errors)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(residual**2) / total if total > 0 else 1.0
    return FitResult(A_M=float(np.exp(intercept)), C_M=float(-slope), f_kind=f_kind, r2=float(r2),
                     points_used=int(h.size))


def usable_for_fit(records: Sequence[SweepRecord], value: str = "true_error") -> List[SweepRecord]:
    """Drops failed, ill-conditioned and non-positive records and 10x spikes under refinement."""
    candidates = [r for r in records
                  if not r.failed and not r.ill_conditioned
                  and np.isfinite(getattr(r, value)) and getattr(r, value) > 0]
    candidates.sort(key=lambda r: -r.h)
    kept: List[SweepRecord] = []
    for record in candidates:
        if kept and getattr(record, value) > SPIKE_FACTOR * getattr(kept[-1], value):
            logger.debug("Dropping spike at h=%g (eps=%g)", record.h, record.eps)
            continue
        kept.append(record)
    return kept


def fit_exponential(records: Sequence[SweepRecord], f_kind: FitKind = FitKind.INVERSE_H,
                    value: str = "true_error") -> FitResult:
    kept = usable_for_fit(records, value)
    return fit_values([r.h for r in kept], [getattr(r, value) for r in kept], f_kind)


def local_slopes(records: Sequence[SweepRecord], f_kind: FitKind = FitKind.INVERSE_SQRT_H,
                 value: str = "estimate") -> List[float]:
    """Rate between consecutive rungs, -d log(value) / d f(h); NaN for the first rung."""
    ordered = sorted(records, key=lambda r: -r.h)
    slopes = [float("nan")]
    for prev, cur in zip(ordered, ordered[1:]):
        a, b = getattr(prev, value), getattr(cur, value)
        df = f_of_h(cur.h, f_kind) - f_of_h(prev.h, f_kind)
        ok = a > 0 and b > 0 and df != 0
        slopes.append(float(-(np.log(b) - np.log(a)) / df) if ok else float("nan"))
    return slopes


def eps_strategy(C: float, beta: float, h: float) -> float:
    if C <= 0:
        raise InvalidInputError(f"C must be positive, got {C}")
    if h <= 0:
        raise InvalidInputError(f"h must be positive, got {h}")
    return float(C * h**beta)


def small_eps_model(kind: ProblemKind, kappa: float, h: float, n: int) -> ErrorModel:
    """1/2 (kappa h)^(N-1) in 1D; (kappa h)^K in 2D with K the largest complete degree for N nodes."""
    kh = abs(kappa) * h
    if ProblemKind(kind) is ProblemKind.INTERVAL:
        value = 0.5 * kh ** (n - 1)
    else:
        value = kh ** floor_degree(n)
    unresolved = kh >= 1
    if unresolved:
        logger.warning("kappa*h = %.3g >= 1: the small-eps model is outside its resolved regime", kh)
    return ErrorModel(value=float(value), unresolved=unresolved)


class ConvergenceResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    records: List[SweepRecord]
    finest: Approximant
    error_fit: Optional[FitResult] = None
    estimate_fit: Optional[FitResult] = None
    slopes: List[float] = Field(default_factory=list)


def _safe_fit(records, f_kind, value) -> Optional[FitResult]:
    try:
        return fit_exponential(records, f_kind, value)
    except (InsufficientDataError, InvalidInputError) as exc:
        logger.info("No %s fit: %s", value, exc)
        return None


def converge(problem: ProblemSpec, ladder: Sequence[NodeSet], family: KernelFamily, C: float, beta: float,
             f_kind: FitKind = FitKind.INVERSE_SQRT_H, grid: Optional[EvalGrid] = None,
             threads: Optional[int] = None) -> ConvergenceResult:
    """
    Solve every rung with eps = C h^beta. Errors are measured against the
    analytic solution when there is one, otherwise against the finest rung.
    """
    if len(ladder) < 2:
        raise InvalidInputError("A convergence ladder needs at least two node sets")
    ladder = sorted(ladder, key=lambda nodes: nodes.size)
    grid = grid or default_grid(problem)
    finest_nodes = ladder[-1]
    finest = solve(problem, finest_nodes, Kernel(family=family, shape=eps_strategy(C, beta, finest_nodes.h)))
    reference = None if problem.has_analytic else finest

    def job(nodes):
        eps = eps_strategy(C, beta, nodes.h)
        is_finest = nodes is finest_nodes
        record = _run_cell(problem, nodes, family, eps, grid, reference, finest if is_finest else None)
        if is_finest and reference is not None:
            record.true_error = float("nan")
        logger.info("Rung N=%d eps=%.3g: error=%.3e estimate=%.3e", nodes.size, eps, record.true_error,
                    record.estimate)
        return record

    threads = threads or get_settings().threads
    with ThreadPoolExecutor(max_workers=threads) as pool:
        records = list(pool.map(job, ladder))
    return ConvergenceResult(
        records=records, finest=finest,
        error_fit=_safe_fit(records, f_kind, "true_error"),
        estimate_fit=_safe_fit(records, f_kind, "estimate"),
        slopes=local_slopes(records, f_kind, "estimate"),
    )


class RateStudy(BaseModel):
    fits: Dict[float, FitResult]
    # slope of log C_M against log eps over the eps values with C_M > 0
    slope: float


def rate_study(records: Sequence[SweepRecord], f_kind: FitKind = FitKind.INVERSE_H) -> RateStudy:
    by_eps: Dict[float, List[SweepRecord]] = {}
    for record in records:
        by_eps.setdefault(record.eps, []).append(record)
    fits = {}
    for eps in sorted(by_eps):
        fit = _safe_fit(by_eps[eps], f_kind, "true_error")
        if fit is not None:
            fits[eps] = fit
    positive = [(e, f.C_M) for e, f in fits.items() if f.C_M > 0]
    slope = float("nan")
    if len(positive) >= 2:
        eps, rates = zip(*positive)
        slope = float(np.polyfit(np.log(eps), np.log(rates), 1)[0])
    return RateStudy(fits=fits, slope=slope)


def seed_average(records_by_seed: Dict[int, Sequence[SweepRecord]]) -> List[SweepRecord]:
    """Per-eps mean over seeds of the error, estimate and residual norm (failed cells skipped)."""
    if not records_by_seed:
        raise InvalidInputError("seed_average needs at least one seed")
    grouped: Dict[float, List[SweepRecord]] = {}
    for records in records_by_seed.values():
        for record in records:
            grouped.setdefault(record.eps, []).append(record)
    averaged = []
    for eps in sorted(grouped):
        group = grouped[eps]
        ok = [r for r in group if not r.failed]
        flags = sorted({f for r in group for f in r.flags})
        if not ok:
            averaged.append(group[0].model_copy(update={"seed": None, "flags": flags}))
            continue

        def mean(field):
            values = np.array([getattr(r, field) for r in ok])
            values = values[np.isfinite(values)]
            return float(values.mean()) if values.size else float("nan")

        averaged.append(SweepRecord(
            eps=eps, h=ok[0].h, N=ok[0].N, true_error=mean("true_error"), estimate=mean("estimate"),
            residual_l2=mean("residual_l2"), cond=float(max(r.cond for r in ok)),
            flags=[f for f in flags if not f.startswith("failed")],
        ))
    return averaged
