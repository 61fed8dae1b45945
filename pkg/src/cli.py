#!/usr/bin/env python3
"""
Experiment harness for the RBF Helmholtz solvers.

Subcommands: solve, sweep, converge, singular, limit-classify, estimate,
reproduce and nodes. Settings come from (lowest to highest priority) the
RunConfig defaults, a flat YAML file given by --config and the command line.

Exit codes: 0 success, 2 invalid input, 3 solver failure.
"""
import argparse
import logging
import os
import re
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.collocation import (Approximant, ModalBasis, ProblemKind, ProblemSpec, RBFColumns, solve,
                             solve_symmetric_1d)
from src.errorest import error_report
from src.errors import HelmholtzError, InvalidInputError
from src.flatlimit import EXAMPLES, classify, divergence_probe
from src.geometry import (DOMAINS, EvalGrid, NodeSet, eval_grid, named_domain, nodes_interval,
                          nodes_rectangle, nodes_waveguide)
from src.kernels import Kernel, KernelFamily
from src.quadrature import ModeNorm, integrate, mode_shapes
from src.reporting import Series, read_nodes, render_svg, write_csv, write_nodes
from src.settings import get_settings
from src.shapeconv import (FitKind, SweepRecord, converge, default_eps_grid, eps_strategy, f_of_h,
                           fit_exponential, rate_study, seed_average, select_epsilon, sweep)
from src.singularity import match_pairs, resolution_of, scan, structural_zeros

logger = logging.getLogger(__name__)

DEFAULT_KAPPA = {
    ProblemKind.INTERVAL: 2 * np.pi,
    ProblemKind.RECTANGLE: 2.2 * np.pi,
    ProblemKind.DUCT: 6 * np.pi,
}

# (n1, n2) node-set parameters used by the duct experiments
TABLE1_SIZES = [
    (10, 12), (11, 14), (12, 15), (13, 16), (14, 17), (15, 19), (16, 20),
    (17, 21), (18, 22), (19, 24), (20, 25), (22, 27), (24, 30), (26, 32),
    (28, 35), (30, 37), (32, 40), (34, 42), (36, 45), (38, 47), (40, 50),
]
TABLE3_SIZES = [(10, 12), (11, 14), (12, 15), (13, 16), (14, 17), (15, 19), (16, 20), (20, 25), (30, 37), (40, 50)]
FIG8_LADDER = [(10, 12), (12, 15), (15, 19), (20, 25), (24, 30), (30, 37)]
HIGH_KAPPA_LADDER = [(20, 25), (30, 37), (40, 50)]
TABLE2_TOLERANCES = (1e-4, 1e-6, 1e-8, 1e-10)
TABLE2_EPS = (5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0)
TABLE2_SAMPLES = 12


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: ProblemKind = ProblemKind.INTERVAL
    kappa: Optional[float] = Field(default=None, gt=0)
    mode: int = Field(default=1, ge=1)
    source: float = 0.3
    domain: str = "duct-m"
    mode_norm: ModeNorm = ModeNorm.SQRT2
    kernel: KernelFamily = KernelFamily.MULTIQUADRIC
    eps: Optional[float] = Field(default=None, gt=0)
    c: Optional[float] = Field(default=None, gt=0)
    beta: Optional[float] = None
    n1: int = Field(default=20, ge=3)
    n2: int = Field(default=25, ge=3)
    seed: int = Field(default=0, ge=0)
    quad_tol: float = Field(default_factory=lambda: get_settings().quad_tol, gt=0)
    grid: str = "60x60"
    nodes: Optional[str] = None
    symmetric: bool = False
    out: Optional[str] = None
    plot: Optional[str] = None
    output_dir: str = Field(default_factory=lambda: get_settings().output_dir)

    @field_validator("grid")
    @classmethod
    def check_grid(cls, value: str) -> str:
        if not re.fullmatch(r"\d+(x\d+)?", value):
            raise ValueError(f"grid must look like '60x60', got '{value}'")
        return value

    @field_validator("domain")
    @classmethod
    def check_domain(cls, value: str) -> str:
        if value not in DOMAINS:
            raise ValueError(f"unknown domain '{value}', expected one of {sorted(DOMAINS)}")
        return value

    @model_validator(mode="after")
    def check_shape_choice(self):
        if self.eps is not None and (self.c is not None or self.beta is not None):
            raise ValueError("eps and the (c, beta) strategy are mutually exclusive")
        if (self.c is None) != (self.beta is None):
            raise ValueError("the eps strategy needs both c and beta")
        if self.symmetric and self.problem is not ProblemKind.INTERVAL:
            raise ValueError("symmetric collocation is only available for problem 1d")
        return self

    @property
    def wavenumber(self) -> float:
        return self.kappa if self.kappa is not None else float(DEFAULT_KAPPA[self.problem])

    @property
    def grid_shape(self) -> Tuple[int, int]:
        parts = [int(p) for p in self.grid.split("x")]
        return parts[0], parts[-1]

    @property
    def has_shape(self) -> bool:
        return self.eps is not None or self.c is not None

    def eps_for(self, h: float) -> float:
        if self.eps is not None:
            return self.eps
        if self.c is None:
            raise InvalidInputError("one of eps or (c, beta) is required")
        return eps_strategy(self.c, self.beta, h)

    def problem_spec(self, kappa: Optional[float] = None) -> ProblemSpec:
        kappa = kappa if kappa is not None else self.wavenumber
        if self.problem is ProblemKind.INTERVAL:
            return ProblemSpec.interval(kappa, quad_tol=self.quad_tol)
        if self.problem is ProblemKind.RECTANGLE:
            return ProblemSpec.rectangle(kappa, mode=self.mode, quad_tol=self.quad_tol)
        return ProblemSpec.duct(kappa, source=self.source, domain=named_domain(self.domain),
                                mode_norm=self.mode_norm, quad_tol=self.quad_tol)

    def node_set(self, n1: Optional[int] = None, n2: Optional[int] = None, seed: Optional[int] = None) -> NodeSet:
        if self.nodes and n1 is None:
            return read_nodes(self.nodes, dim=1 if self.problem is ProblemKind.INTERVAL else 2)
        n1, n2 = n1 or self.n1, n2 or self.n2
        if self.problem is ProblemKind.INTERVAL:
            return nodes_interval(n1)
        if self.problem is ProblemKind.RECTANGLE:
            return nodes_rectangle(n1, n2)
        return nodes_waveguide(n1, n2, named_domain(self.domain), self.seed if seed is None else seed)

    def eval_grid(self, problem: ProblemSpec) -> EvalGrid:
        m1, m2 = self.grid_shape
        return eval_grid(problem.domain, m1, m2)

    def output(self, name: str) -> Path:
        return Path(self.out) if self.out else Path(self.output_dir) / name


class Run(BaseModel):
    """One solved configuration with its estimate and error (when known)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    problem: ProblemSpec
    approx: Approximant
    estimate: Optional[float] = None
    error: Optional[float] = None


def reference_compare(coarse: Run, fine: Run, grid: Optional[EvalGrid] = None) -> float:
    """max|s_coarse - s_fine| / max|s_fine| on a shared grid."""
    if not coarse.problem.same_as(fine.problem):
        raise InvalidInputError("reference_compare needs runs of the same problem and kappa")
    if grid is None:
        m = 60 if coarse.problem.dim == 2 else 201
        grid = eval_grid(coarse.problem.domain, m, m)
    s_fine = fine.approx.evaluate(grid.points)
    scale = float(np.max(np.abs(s_fine)))
    if scale == 0:
        raise InvalidInputError("Reference solution vanishes on the grid")
    return float(np.max(np.abs(coarse.approx.evaluate(grid.points) - s_fine)) / scale)


def project_error(estimates: Sequence[Optional[float]], errors: Sequence[Optional[float]]) -> float:
    """
    Finest estimate divided by the smallest estimate/error ratio of the coarser
    runs. Both sequences run coarse to fine; the finest error is ignored.
    """
    if len(estimates) != len(errors) or len(estimates) < 2:
        raise InvalidInputError("project_error needs matching estimate/error lists with at least two runs")
    if any(e is None for e in estimates):
        raise InvalidInputError("project_error needs an estimate for every run")
    coarse = list(zip(estimates[:-1], errors[:-1]))
    if any(err is None or not err > 0 for _, err in coarse):
        raise InvalidInputError("project_error needs a positive reference error for every coarser run")
    worst = min(est / err for est, err in coarse)
    return float(estimates[-1] / worst)


def parse_values(text: str) -> List[float]:
    """Comma separated numbers or start:step:stop ranges (stop included)."""
    values: List[float] = []
    for item in filter(None, (part.strip() for part in text.split(","))):
        try:
            if ":" in item:
                start, step, stop = (float(x) for x in item.split(":"))
                if step <= 0 or stop < start:
                    raise ValueError
                count = int(np.floor((stop - start) / step + 1e-9)) + 1
                values.extend(np.round(start + step * np.arange(count), 12).tolist())
            else:
                values.append(float(item))
        except ValueError:
            raise InvalidInputError(f"Cannot parse '{item}' as a number or start:step:stop range") from None
    if not values:
        raise InvalidInputError(f"No values in '{text}'")
    return values


def parse_sizes(text: str) -> List[Tuple[int, Optional[int]]]:
    sizes = []
    for item in filter(None, (part.strip() for part in text.split(","))):
        match = re.fullmatch(r"(\d+)(?:x(\d+))?", item)
        if not match:
            raise InvalidInputError(f"Cannot parse node-set size '{item}', expected N or n1xn2")
        sizes.append((int(match.group(1)), int(match.group(2)) if match.group(2) else None))
    if not sizes:
        raise InvalidInputError(f"No node-set sizes in '{text}'")
    return sizes


def _solve(config: RunConfig, problem: ProblemSpec, nodes: NodeSet, eps: Optional[float] = None) -> Approximant:
    kernel = Kernel(family=config.kernel, shape=eps if eps is not None else config.eps_for(nodes.h))
    if config.symmetric:
        return solve_symmetric_1d(problem, nodes, kernel)
    return solve(problem, nodes, kernel)


def _reference(config: RunConfig, problem: ProblemSpec, text: Optional[str]) -> Optional[Approximant]:
    """Solve the reference run named by --reference (duct problems only)."""
    if problem.has_analytic or not text:
        return None
    sizes = parse_sizes(text)
    if len(sizes) != 1:
        raise InvalidInputError(f"--reference takes one node-set size, got '{text}'")
    (n1, n2), = sizes
    nodes = config.node_set(n1, n2 or n1)
    eps = config.eps_for(nodes.h) if config.has_shape else eps_strategy(1.5, -0.5, nodes.h)
    logger.info("Reference solve %dx%d (N=%d, eps=%.3g)", n1, n2 or n1, nodes.size, eps)
    return solve(problem, nodes, Kernel(family=config.kernel, shape=eps))


SOLUTION_COLUMNS = ["x1", "x2", "Re(s)", "Im(s)", "|s|", "Re(r)", "Im(r)"]


def _points_rows(points: np.ndarray, values: np.ndarray, residual: np.ndarray) -> List[Dict[str, float]]:
    x2 = points[:, 1] if points.shape[1] > 1 else np.zeros(points.shape[0])
    return [dict(zip(SOLUTION_COLUMNS, (a, b, v.real, v.imag, abs(v), r.real, r.imag)))
            for a, b, v, r in zip(points[:, 0], x2, values, residual)]


def interior_residual(approx: Approximant, problem: ProblemSpec, grid: EvalGrid) -> np.ndarray:
    """PDE residual on the interior grid points, NaN on the boundary."""
    residual = np.full(grid.size, complex(np.nan, np.nan), dtype=complex)
    residual[grid.interior] = approx.residual(problem, grid.points[grid.interior])
    return residual


def cmd_solve(config: RunConfig, args) -> int:
    problem = config.problem_spec()
    nodes = config.node_set()
    approx = _solve(config, problem, nodes)
    grid = config.eval_grid(problem)
    values = approx.evaluate(grid.points)
    rows = _points_rows(grid.points, values, interior_residual(approx, problem, grid))
    path = write_csv(config.output("solution.csv"), rows, SOLUTION_COLUMNS)
    print(f"N={nodes.size} eps={approx.kernel.shape:.6g} cond={approx.cond:.3e}")
    if problem.has_analytic:
        exact = problem.analytic_solution(grid.points)
        print(f"max error vs analytic: {np.max(np.abs(values - exact)):.6e}")
    for warning in approx.warnings:
        print(f"warning: {warning}")
    print(f"wrote {path}")
    return 0


def cmd_estimate(config: RunConfig, args) -> int:
    problem = config.problem_spec()
    nodes = config.node_set()
    approx = _solve(config, problem, nodes)
    report = error_report(approx, problem, config.eval_grid(problem), _reference(config, problem, args.reference),
                          n_modes=args.modes)
    row = {"eps": approx.kernel.shape, **report.as_row()}
    path = write_csv(config.output("estimate.csv"), [row])
    print(" ".join(f"{k}={v:.6g}" for k, v in row.items()))
    print(f"wrote {path}")
    return 0


def _sweep_records(config: RunConfig, problem: ProblemSpec, eps_list, seeds, reference) -> List[SweepRecord]:
    grid = config.eval_grid(problem)
    if len(seeds) == 1:
        return sweep(problem, [config.node_set(seed=seeds[0])], config.kernel, eps_list, grid, reference)
    by_seed = {s: sweep(problem, [config.node_set(seed=s)], config.kernel, eps_list, grid, reference) for s in seeds}
    return seed_average(by_seed)


def _print_choice(records: List[SweepRecord]) -> None:
    choice = select_epsilon(records)
    eps_true = f"{choice.eps_true:.4g}" if choice.eps_true is not None else "-"
    print(f"eps*={eps_true} eps_est={choice.eps_est:.4g} eps_res={choice.eps_res:.4g} C~={choice.c_tilde:.3g}"
          + (" (minimum at the edge of the eps range)" if choice.edge_warning else ""))


def cmd_sweep(config: RunConfig, args) -> int:
    problem = config.problem_spec()
    eps_list = parse_values(args.eps_list) if args.eps_list else default_eps_grid(problem.kind).tolist()
    seeds = [int(s) for s in parse_values(args.seeds)] if args.seeds else [config.seed]
    records = _sweep_records(config, problem, eps_list, seeds, _reference(config, problem, args.reference))
    path = write_csv(config.output("sweep.csv"), [r.as_row() for r in records])
    if len(records) >= 3:
        _print_choice(records)
    if config.plot:
        series = [Series(label=name, x=[r.eps for r in records], y=[getattr(r, field) for r in records], style=style)
                  for name, field, style in (("error", "true_error", "o-"), ("estimate", "estimate", "x-"),
                                             ("residual l2", "residual_l2", ":"))
                  if any(np.isfinite(getattr(r, field)) for r in records)]
        render_svg(config.plot, series, xlabel="eps")
    print(f"wrote {path}")
    return 0


def _ladder(config: RunConfig, sizes) -> List[NodeSet]:
    return [config.node_set(n1, n2 or n1) for n1, n2 in sizes]


def _convergence_plot(path, records, fits, f_kind: FitKind) -> None:
    series = []
    for name, field, style in (("error", "true_error", "o"), ("estimate", "estimate", "x")):
        kept = [r for r in records if np.isfinite(getattr(r, field)) and getattr(r, field) > 0]
        if not kept:
            continue
        x = [float(f_of_h(r.h, f_kind)) for r in kept]
        fit = fits.get(field)
        line = dict(fit_x=x, fit_y=fit.predict([r.h for r in kept]).tolist(), slope=fit.C_M) if fit else {}
        series.append(Series(label=name, x=x, y=[getattr(r, field) for r in kept], style=style, **line))
    render_svg(path, series, xlabel=f_kind.value)


def _print_fit(name, fit) -> None:
    if fit is None:
        print(f"{name}: no fit")
    else:
        print(f"{name}: A_M={fit.A_M:.4g} C_M={fit.C_M:.4g} r2={fit.r2:.4f} ({fit.points_used} points)")


def cmd_converge(config: RunConfig, args) -> int:
    if config.c is None:
        raise InvalidInputError("converge needs --c and --beta")
    problem = config.problem_spec()
    f_kind = FitKind(args.fit)
    result = converge(problem, _ladder(config, parse_sizes(args.ladder)), config.kernel, config.c, config.beta,
                      f_kind, config.eval_grid(problem))
    rows = [{**r.as_row(), "slope": s} for r, s in zip(result.records, result.slopes)]
    path = write_csv(config.output("converge.csv"), rows)
    _print_fit("error", result.error_fit)
    _print_fit("estimate", result.estimate_fit)
    if config.plot:
        _convergence_plot(config.plot, result.records,
                          {"true_error": result.error_fit, "estimate": result.estimate_fit}, f_kind)
    print(f"wrote {path}")
    return 0


def _eigen_rows(kernel: Kernel, n_values) -> List[Dict[str, float]]:
    rows = []
    for n, kappas in scan(kernel, n_values):
        zeros = structural_zeros(kappas)
        logger.info("N=%d: %d structural zeros, pair mismatch %.2e", n, zeros.size, match_pairs(kappas))
        for k, value in enumerate(kappas):
            if k in zeros:
                continue
            ppw = resolution_of(value, n) if value.real > 0 else float("nan")
            rows.append({"N": n, "re": value.real, "im": value.imag, "ppw": ppw})
    return rows


def cmd_singular(config: RunConfig, args) -> int:
    if config.eps is None:
        raise InvalidInputError("singular needs --eps")
    n_values = [int(n) for n in parse_values(args.n_values)]
    rows = _eigen_rows(Kernel(family=config.kernel, shape=config.eps), n_values)
    path = write_csv(config.output("singular.csv"), rows, ["N", "re", "im", "ppw"])
    positive = [r for r in rows if r["re"] > 0]
    if positive:
        print(f"{len(positive)} eigenvalues with Re > 0; max points per wavelength {max(r['ppw'] for r in positive):.3g}")
    print(f"wrote {path}")
    return 0


def cmd_limit_classify(config: RunConfig, args) -> int:
    if args.example:
        fixture = EXAMPLES[args.example]
        problem, nodes = fixture.problem(config.kappa), fixture.nodes()
    elif config.nodes:
        problem = config.problem_spec()
        nodes = read_nodes(config.nodes, dim=problem.dim)
    else:
        raise InvalidInputError("limit-classify needs --example or --nodes")
    report = classify(problem, nodes)
    print(report.summary())
    if args.probe:
        probe = divergence_probe(problem, nodes, config.kernel)
        print(f"divergence slope: {probe.slope:.3f} over eps {', '.join(f'{e:g}' for e in probe.eps_used)}")
    return 0


def cmd_nodes(config: RunConfig, args) -> int:
    nodes = config.node_set()
    name = f"nodes_{config.problem.value}_{config.n1}" + ("" if nodes.dim == 1 else f"x{config.n2}") + ".csv"
    path = write_nodes(config.output(name), nodes)
    print(f"N={nodes.size} " + " ".join(f"tag{t}={c}" for t, c in nodes.counts().items()))
    print(f"wrote {path}")
    return 0


def recipe_table1(config: RunConfig, args) -> int:
    domain = named_domain(config.domain)
    rows = [{"n1": n1, "n2": n2, "N": nodes_waveguide(n1, n2, domain, config.seed).size} for n1, n2 in TABLE1_SIZES]
    for row in rows:
        print(f"{row['n1']}x{row['n2']}: N={row['N']}")
    print(f"wrote {write_csv(config.output('table1.csv'), rows)}")
    return 0


def recipe_table2(config: RunConfig, args) -> int:
    """Average quadrature evaluations per inflow inner product by tolerance and eps."""
    domain = named_domain(config.domain)
    nodes = nodes_waveguide(30, 38, domain, config.seed)
    modal = ModalBasis.at(domain, 0.0, config.kappa or DEFAULT_KAPPA[ProblemKind.DUCT])
    lower, upper = modal.lower, modal.lower + modal.width
    modes = modal.propagating()
    sample = nodes.points[np.linspace(0, nodes.size - 1, TABLE2_SAMPLES).astype(int)]
    rows = []
    for eps in TABLE2_EPS:
        row = {"eps": eps}
        for tol in TABLE2_TOLERANCES:
            counts = []
            for center in sample:
                columns = RBFColumns(Kernel(family=config.kernel, shape=eps), center[None, :])
                for m in modes:
                    def integrand(x1, m=m):
                        pts = np.column_stack([x1, np.zeros_like(x1)])
                        return columns.values(pts)[:, 0] * mode_shapes([m], x1, lower, upper - lower)[:, 0]

                    counts.append(integrate(integrand, lower, upper, tol).n_evals)
            row[f"tol={tol:g}"] = float(np.mean(counts))
        rows.append(row)
        print(" ".join(f"{k}={v:g}" for k, v in row.items()))
    print(f"wrote {write_csv(config.output('table2.csv'), rows)}")
    return 0


def recipe_table3(config: RunConfig, args) -> int:
    if not 1 <= args.col <= len(TABLE3_SIZES):
        raise InvalidInputError(f"--col must be in 1..{len(TABLE3_SIZES)}, got {args.col}")
    n1, n2 = TABLE3_SIZES[args.col - 1]
    config = config.model_copy(update={"problem": ProblemKind.DUCT, "n1": n1, "n2": n2})
    problem = config.problem_spec()
    reference = _reference(config, problem, args.reference or "40x50")
    eps_list = parse_values(args.eps_list) if args.eps_list else default_eps_grid(ProblemKind.DUCT).tolist()
    seeds = [int(s) for s in parse_values(args.seeds)] if args.seeds else [config.seed]
    records = _sweep_records(config, problem, eps_list, seeds, reference)
    print(f"{n1}x{n2} (N={records[0].N})")
    _print_choice(records)
    print(f"wrote {write_csv(config.output(f'table3_{n1}x{n2}.csv'), [r.as_row() for r in records])}")
    return 0


def recipe_fig2(config: RunConfig, args) -> int:
    eps = config.eps or 5.0
    n_values = [int(n) for n in parse_values(args.n_values or "4:2:30")]
    rows = _eigen_rows(Kernel(family=config.kernel, shape=eps), n_values)
    print(f"wrote {write_csv(config.output('fig2.csv'), rows, ['N', 're', 'im', 'ppw'])}")
    return 0


FIG3_SIZES = list(range(6, 22)) + list(range(30, 101, 10))


def recipe_fig3(config: RunConfig, args) -> int:
    """1D fixed-eps convergence with both fit forms."""
    problem = ProblemSpec.interval(config.kappa or 2 * np.pi)
    eps_list = parse_values(args.eps_list) if args.eps_list else default_eps_grid(ProblemKind.INTERVAL).tolist()
    records = sweep(problem, [nodes_interval(n) for n in FIG3_SIZES], config.kernel, eps_list)
    rows, series = [], []
    for eps in eps_list:
        group = [r for r in records if r.eps == eps]
        for kind in FitKind:
            try:
                fit = fit_exponential(group, kind)
            except HelmholtzError as exc:
                logger.info("eps=%g %s: %s", eps, kind.value, exc)
                continue
            rows.append({"eps": eps, "f": kind.value, "A_M": fit.A_M, "C_M": fit.C_M, "r2": fit.r2})
        series.append(Series(label=f"eps={eps:.3g}", x=[1 / r.h for r in group], y=[r.true_error for r in group],
                             style=".-"))
    write_csv(config.output("fig3_records.csv"), [r.as_row() for r in records])
    print(f"wrote {write_csv(config.output('fig3.csv'), rows, ['eps', 'f', 'A_M', 'C_M', 'r2'])}")
    if config.plot:
        render_svg(config.plot, series, xlabel="1/h")
    return 0


def recipe_fig4(config: RunConfig, args) -> int:
    """Fitted A_M and C_M against eps for several wavenumbers."""
    eps_list = parse_values(args.eps_list) if args.eps_list else default_eps_grid(ProblemKind.INTERVAL).tolist()
    rows = []
    for kappa in (np.pi, 2 * np.pi, 4 * np.pi, 6 * np.pi):
        problem = ProblemSpec.interval(kappa)
        records = sweep(problem, [nodes_interval(n) for n in FIG3_SIZES], config.kernel, eps_list)
        study = rate_study(records)
        print(f"kappa={kappa:.4g}: slope of log C_M vs log eps = {study.slope:.3f}")
        rows.extend({"kappa": kappa, "eps": eps, "A_M": fit.A_M, "C_M": fit.C_M} for eps, fit in study.fits.items())
    print(f"wrote {write_csv(config.output('fig4.csv'), rows, ['kappa', 'eps', 'A_M', 'C_M'])}")
    return 0


def recipe_fig8(config: RunConfig, args) -> int:
    config = config.model_copy(update={"problem": ProblemKind.DUCT})
    problem = config.problem_spec()
    c, beta = config.c or 1.5, config.beta if config.beta is not None else -0.5
    result = converge(problem, _ladder(config, FIG8_LADDER), config.kernel, c, beta,
                      FitKind.INVERSE_SQRT_H, config.eval_grid(problem))
    _print_fit("error", result.error_fit)
    _print_fit("estimate", result.estimate_fit)
    print(f"wrote {write_csv(config.output('fig8.csv'), [r.as_row() for r in result.records])}")
    _convergence_plot(config.plot or Path(config.output_dir) / "fig8.svg", result.records,
                      {"true_error": result.error_fit, "estimate": result.estimate_fit}, FitKind.INVERSE_SQRT_H)
    return 0


def _high_kappa(config: RunConfig, kappa: float, name: str) -> int:
    config = config.model_copy(update={"problem": ProblemKind.DUCT, "kappa": kappa})
    problem = config.problem_spec()
    result = converge(problem, _ladder(config, HIGH_KAPPA_LADDER), config.kernel, config.c or 1.5,
                      config.beta if config.beta is not None else -0.5, FitKind.INVERSE_SQRT_H,
                      eval_grid(problem.domain, 100, 100))
    estimates = [r.estimate for r in result.records]
    errors = [r.true_error if np.isfinite(r.true_error) else None for r in result.records]
    projected = project_error(estimates, errors)
    worst = estimates[-1] / projected
    rows = []
    for (n1, n2), record, slope in zip(HIGH_KAPPA_LADDER, result.records, result.slopes):
        ratio = record.estimate / record.true_error if np.isfinite(record.true_error) else float("nan")
        rows.append({"n1xn2": f"{n1}x{n2}", "error": record.true_error, "estimate": record.estimate,
                     "ratio": ratio, "adjusted": record.estimate / worst, "C_M": slope})
        print(" ".join(f"{k}={v}" if isinstance(v, str) else f"{k}={v:.4g}" for k, v in rows[-1].items()))
    print(f"projected error for the finest run: {projected:.4g}")
    print(f"wrote {write_csv(config.output(f'{name}.csv'), rows)}")
    return 0


RECIPES: Dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
    "table1": recipe_table1,
    "table2": recipe_table2,
    "table3": recipe_table3,
    "fig2": recipe_fig2,
    "fig3": recipe_fig3,
    "fig4": recipe_fig4,
    "fig8": recipe_fig8,
    "table4": lambda config, args: _high_kappa(config, 12 * np.pi, "table4"),
    "table5": lambda config, args: _high_kappa(config, 24 * np.pi, "table5"),
}


def cmd_reproduce(config: RunConfig, args) -> int:
    return RECIPES[args.recipe](config, args)


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "converge": cmd_converge,
    "singular": cmd_singular,
    "limit-classify": cmd_limit_classify,
    "estimate": cmd_estimate,
    "reproduce": cmd_reproduce,
    "nodes": cmd_nodes,
}

# RunConfig fields settable from the command line
CONFIG_FLAGS = ("problem", "kappa", "mode", "source", "domain", "mode_norm", "kernel", "eps", "c", "beta",
                "n1", "n2", "seed", "quad_tol", "grid", "nodes", "symmetric", "out", "plot", "output_dir")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Flat YAML file with RunConfig keys")
    common.add_argument("--log-level", help="Logging level (default from RBFH_LOG_LEVEL or INFO)")
    common.add_argument("--threads", type=int, help="Worker threads for sweeps and probes")
    common.add_argument("--problem", choices=[k.value for k in ProblemKind])
    common.add_argument("--kappa", type=float)
    common.add_argument("--mode", "--m", dest="mode", type=int)
    common.add_argument("--source", "--xs", dest="source", type=float, help="Source location x_s (duct)")
    common.add_argument("--domain")
    common.add_argument("--mode-norm", dest="mode_norm", choices=[n.value for n in ModeNorm],
                        help="Transverse mode scaling of the duct DtN rows and estimates (default sqrt2)")
    common.add_argument("--kernel", choices=[f.value for f in KernelFamily])
    common.add_argument("--eps", type=float)
    common.add_argument("--c", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--n1", type=int)
    common.add_argument("--n2", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--quad-tol", dest="quad_tol", type=float)
    common.add_argument("--grid", help="Evaluation grid m1xm2")
    common.add_argument("--nodes", help="Node CSV with columns x1,x2,tag")
    common.add_argument("--symmetric", action="store_const", const=True, help="Symmetric collocation (1D)")
    common.add_argument("--out", help="Output CSV path")
    common.add_argument("--plot", help="Output SVG path")
    common.add_argument("--output-dir", dest="output_dir")

    parser = argparse.ArgumentParser(description="RBF collocation experiments for Helmholtz waveguide problems")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="Solve one problem and write the solution on the grid")
    p = sub.add_parser("estimate", parents=[common], help="Solve and write the error report")
    p.add_argument("--modes", type=int, help="Transverse modes in the estimate (default 2*mu + 10)")
    p.add_argument("--reference", help="Reference node set n1xn2 for duct errors")
    p = sub.add_parser("sweep", parents=[common], help="Sweep eps for one node set")
    p.add_argument("--eps-list", dest="eps_list", help="e.g. 3:0.5:14 or 2,4,8")
    p.add_argument("--seeds", help="Average over node seeds, e.g. 0,1,2")
    p.add_argument("--reference", help="Reference node set n1xn2 for duct errors")
    p = sub.add_parser("converge", parents=[common], help="Refinement ladder with eps = C h^beta")
    p.add_argument("--ladder", required=True, help="e.g. 10,20,40 or 10x12,15x19,20x25")
    p.add_argument("--fit", choices=[k.value for k in FitKind], default=FitKind.INVERSE_SQRT_H.value)
    p = sub.add_parser("singular", parents=[common], help="Singular wavenumbers of 1D collocation")
    p.add_argument("--n-values", "--nrange", dest="n_values", default="6,8,10", help="e.g. 6,8,10 or 6:2:30")
    p = sub.add_parser("limit-classify", parents=[common], help="Classify the flat limit of a node set")
    p.add_argument("--example", choices=sorted(EXAMPLES))
    p.add_argument("--probe", action="store_true", help="Also fit the divergence rate of max|s|")
    p = sub.add_parser("reproduce", parents=[common], help="Rerun a reference experiment")
    p.add_argument("recipe", choices=sorted(RECIPES))
    p.add_argument("--col", type=int, default=1, help="Column of the eps-selection table")
    p.add_argument("--eps-list", dest="eps_list")
    p.add_argument("--seeds")
    p.add_argument("--reference")
    p.add_argument("--n-values", dest="n_values")
    sub.add_parser("nodes", parents=[common], help="Write a node set as CSV")
    return parser


def _parse_key_values(text: str, path) -> Dict[str, object]:
    """Flat `key = value` lines; blank lines and # comments are skipped."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise InvalidInputError(f"Config {path}:{lineno}: expected key=value, got {raw.strip()!r}")
        try:
            values[key.strip()] = yaml.safe_load(value.strip())
        except yaml.YAMLError:
            values[key.strip()] = value.strip()
    return values


def read_config_file(path) -> Dict[str, object]:
    """A YAML mapping, or failing that a flat key=value text file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"Cannot read config {path}: {exc}") from exc
    try:
        loaded = yaml.safe_load(text)
    except yaml.YAMLError:
        loaded = None
    if loaded is None and not text.strip():
        loaded = {}
    if not isinstance(loaded, dict):
        loaded = _parse_key_values(text, path)
    return {str(k).replace("-", "_"): v for k, v in loaded.items()}


def load_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config:
        values.update(read_config_file(args.config))
    values.update({k: getattr(args, k) for k in CONFIG_FLAGS if getattr(args, k, None) is not None})
    return RunConfig(**values)


def configure_logging(level: Optional[str]) -> None:
    level = (level or get_settings().log_level).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return 2
        os.environ["RBFH_THREADS"] = str(args.threads)
        get_settings.cache_clear()
    configure_logging(args.log_level)
    try:
        config = load_config(args)
        return COMMANDS[args.command](config, args)
    except ValidationError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except HelmholtzError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
