"""
Residual-based a-posteriori error estimates.

1D: the Green's function of the radiating interval problem gives the bound
    |e|_inf <= 1/(2 kappa) * int_0^1 |r(x)| dx.
Rectangle and duct: the residual is decomposed on each slice x2 into the
transverse modes psi_m = c sin(alpha_m (x1 - gamma1)), r_m(x2) = <r(., x2), psi_m>,
and each mode is weighted by the size of its one-dimensional Green's function:
    propagating   c / (2 |beta_m|)
    evanescent    c / |beta_m|^2 * (1 - exp(-|beta_m| / 2))
with c = sqrt(2) by default (sqrt(2 / w) for orthonormal modes).
On a unit-width rectangle this is an estimate of the true error; on a curved
duct it is a heuristic with station-dependent w, alpha_m and beta_m.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import trapezoid

from src.collocation import Approximant, ModalBasis, ProblemKind, ProblemSpec
from src.errors import InvalidInputError
from src.geometry import EvalGrid
from src.quadrature import integrate, project_onto_modes
from src.settings import get_settings

logger = logging.getLogger(__name__)

STATIONS = 60
ESTIMATE_TOL = 1e-10
EXTRA_MODES = 10

ResidualSource = Union[Approximant, Callable[[np.ndarray], np.ndarray]]


class ResidualField(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    points: np.ndarray
    values: np.ndarray
    stations: Optional[np.ndarray] = None
    # (stations, modes) slice coefficients r_m(x2)
    modal: Optional[np.ndarray] = None


class ErrorReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    estimate: float = Field(ge=0)
    residual_l2: float = Field(ge=0)
    residual_max: float = Field(ge=0)
    true_error: Optional[float] = None
    # max |s| on the grid; relative quantities divide by it
    scale: float = 1.0
    mode_breakdown: Dict[int, float] = Field(default_factory=dict)

    @property
    def relative_estimate(self) -> float:
        return self.estimate / self.scale if self.scale > 0 else float("inf")

    @property
    def relative_residual_l2(self) -> float:
        return self.residual_l2 / self.scale if self.scale > 0 else float("inf")

    def as_row(self) -> Dict[str, float]:
        return {
            "estimate": self.estimate,
            "residual_l2": self.residual_l2,
            "residual_max": self.residual_max,
            "true_error": self.true_error if self.true_error is not None else float("nan"),
        }


def residual_function(source: ResidualSource, problem: ProblemSpec) -> Callable[[np.ndarray], np.ndarray]:
    """r(points) for an approximant, or the callable itself."""
    if isinstance(source, Approximant):
        return lambda points: source.residual(problem, points)
    if callable(source):
        return lambda points: np.asarray(source(np.atleast_2d(np.asarray(points, dtype=float))), dtype=complex)
    raise InvalidInputError(f"Expected an Approximant or a callable, got {type(source).__name__}")


def estimate_1d(source: ResidualSource, problem: ProblemSpec, abstol: float = ESTIMATE_TOL) -> float:
    if problem.kind is not ProblemKind.INTERVAL:
        raise InvalidInputError("estimate_1d needs the 1D problem")
    kappa = complex(problem.kappa)
    if kappa.imag != 0 or kappa.real <= 0:
        raise InvalidInputError(f"The 1D bound needs a real positive kappa, got {kappa}")
    r = residual_function(source, problem)
    result = integrate(lambda x: np.abs(r(x[:, None])), 0.0, 1.0, abstol)
    if not result.converged:
        logger.warning("Residual integral did not converge; estimate may be low")
    return float(result.value) / (2 * kappa.real)


def mode_weights(modal: ModalBasis, modes: np.ndarray) -> np.ndarray:
    beta = np.abs(modal.beta(modes))
    scale = modal.scale
    propagating = modes <= modal.mu
    with np.errstate(divide="ignore", invalid="ignore"):
        weights = np.where(propagating, scale / (2 * beta), scale / beta**2 * (1 - np.exp(-beta / 2)))
    if not np.all(np.isfinite(weights)):
        logger.warning("Cut-off mode at x2=%g (beta = 0); its contribution is dropped", modal.station)
        weights = np.where(np.isfinite(weights), weights, 0.0)
    return weights


def _slice_coefficients(r: Callable, problem: ProblemSpec, x2: float,
                        modes: np.ndarray, abstol: float) -> Tuple[np.ndarray, np.ndarray]:
    def trace(x1):
        return r(np.column_stack([x1, np.full_like(x1, x2)]))

    result = project_onto_modes(trace, modes, x2, problem.domain, abstol, problem.mode_norm)
    if not result.converged:
        logger.warning("Modal projection at x2=%g did not converge", x2)
    modal = ModalBasis.at(problem.domain, x2, problem.kappa, norm=problem.mode_norm)
    return np.asarray(result.value, dtype=complex), mode_weights(modal, modes)


def _modal_estimate(r: Callable, problem: ProblemSpec, n_modes: int, stations: int,
                    abstol: float, threads: Optional[int]) -> Tuple[float, Dict[int, float], ResidualField]:
    """Sum over modes of int_0^1 weight_m(x2) |r_m(x2)| dx2 by the trapezoid rule over stations."""
    x2 = np.linspace(0.0, 1.0, stations)
    modes = np.arange(1, n_modes + 1)
    threads = threads or get_settings().threads
    with ThreadPoolExecutor(max_workers=threads) as pool:
        slices = list(pool.map(
            lambda s: _slice_coefficients(r, problem, s, modes, abstol), x2))
    coefficients = np.array([c for c, _ in slices])
    weights = np.array([w for _, w in slices])
    per_mode = trapezoid(weights * np.abs(coefficients), x=x2, axis=0)
    breakdown = {int(m): float(v) for m, v in zip(modes, per_mode)}
    field = ResidualField(points=np.empty((0, 2)), values=np.empty(0, dtype=complex),
                          stations=x2, modal=coefficients)
    return float(per_mode.sum()), breakdown, field


def _max_mu(problem: ProblemSpec, stations: int) -> int:
    return max(ModalBasis.at(problem.domain, s, problem.kappa).mu for s in np.linspace(0.0, 1.0, stations))


def default_modes(problem: ProblemSpec, stations: int = STATIONS) -> int:
    return 2 * _max_mu(problem, stations) + EXTRA_MODES


def estimate_rect(source: ResidualSource, problem: ProblemSpec, n_modes: Optional[int] = None,
                  stations: int = STATIONS, abstol: float = ESTIMATE_TOL,
                  threads: Optional[int] = None, breakdown: bool = False):
    if problem.kind is not ProblemKind.RECTANGLE:
        raise InvalidInputError("estimate_rect needs the rectangle problem")
    mu = _max_mu(problem, 2)
    n_modes = n_modes or default_modes(problem)
    if n_modes < mu + 1:
        raise InvalidInputError(f"n_modes must be >= {mu + 1} (propagating modes + 1), got {n_modes}")
    value, modes, _ = _modal_estimate(residual_function(source, problem), problem, n_modes, stations, abstol, threads)
    return (value, modes) if breakdown else value


def estimate_duct(source: ResidualSource, problem: ProblemSpec, n_modes: Optional[int] = None,
                  stations: int = STATIONS, abstol: float = ESTIMATE_TOL,
                  threads: Optional[int] = None, breakdown: bool = False):
    if problem.kind is not ProblemKind.DUCT:
        raise InvalidInputError("estimate_duct needs the duct problem")
    n_modes = n_modes or default_modes(problem, stations)
    if n_modes < 1:
        raise InvalidInputError(f"n_modes must be positive, got {n_modes}")
    value, modes, _ = _modal_estimate(residual_function(source, problem), problem, n_modes, stations, abstol, threads)
    return (value, modes) if breakdown else value


def residual_norms(source: ResidualSource, problem: ProblemSpec, grid: EvalGrid) -> Tuple[float, float]:
    """(RMS, max) of |r| over the interior grid points."""
    points = grid.points[grid.interior]
    if points.shape[0] == 0:
        raise InvalidInputError("Grid has no interior points")
    values = np.abs(residual_function(source, problem)(points))
    return float(np.sqrt(np.mean(values**2))), float(np.max(values))


def residual_field(source: ResidualSource, problem: ProblemSpec, grid: EvalGrid,
                   n_modes: Optional[int] = None, stations: int = STATIONS) -> ResidualField:
    points = grid.points[grid.interior]
    r = residual_function(source, problem)
    field = ResidualField(points=points, values=r(points))
    if problem.kind is ProblemKind.INTERVAL:
        return field
    _, _, modal = _modal_estimate(r, problem, n_modes or default_modes(problem, stations), stations,
                                  ESTIMATE_TOL, None)
    return field.model_copy(update={"stations": modal.stations, "modal": modal.modal})


def _reference_values(problem: ProblemSpec, reference, points) -> np.ndarray:
    if reference is None:
        return problem.analytic_solution(points)
    if isinstance(reference, Approximant):
        return reference.evaluate(points)
    return np.asarray(reference(points), dtype=complex)


def error_report(approx: Approximant, problem: ProblemSpec, grid: EvalGrid, reference=None,
                 n_modes: Optional[int] = None, threads: Optional[int] = None) -> ErrorReport:
    """Estimate, residual norms and (when available) the relative max error on the grid."""
    values = approx.evaluate(grid.points)
    breakdown: Dict[int, float] = {}
    if problem.kind is ProblemKind.INTERVAL:
        estimate = estimate_1d(approx, problem)
    elif problem.kind is ProblemKind.RECTANGLE:
        estimate, breakdown = estimate_rect(approx, problem, n_modes, threads=threads, breakdown=True)
    else:
        estimate, breakdown = estimate_duct(approx, problem, n_modes, threads=threads, breakdown=True)
    l2, rmax = residual_norms(approx, problem, grid)

    true_error = None
    if reference is not None or problem.has_analytic:
        exact = _reference_values(problem, reference, grid.points)
        true_error = float(np.max(np.abs(values - exact)) / np.max(np.abs(exact)))
    report = ErrorReport(estimate=estimate, residual_l2=l2, residual_max=rmax, true_error=true_error,
                         scale=float(np.max(np.abs(values))), mode_breakdown=breakdown)
    logger.debug("Error report N=%d eps=%g: estimate=%.3e true=%s", approx.size, approx.kernel.shape,
                 estimate, true_error)
    return report
