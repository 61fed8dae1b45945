"""
Functional tests for the experiment CLI.
"""
import numpy as np
import pytest
import yaml

from src.cli import (RunConfig, Run, build_parser, load_config, main, parse_sizes, parse_values, project_error,
                     reference_compare)
from src.collocation import ProblemKind, ProblemSpec, solve
from src.errors import InvalidInputError
from src.geometry import nodes_interval
from src.kernels import Kernel, KernelFamily
from src.quadrature import ModeNorm
from src.reporting import read_csv, read_nodes

pytestmark = pytest.mark.functional


def write_config(tmp_path, values):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(values))
    return str(path)


class TestParsing:
    def test_values_with_range(self):
        assert parse_values("3:0.5:5,8") == [3.0, 3.5, 4.0, 4.5, 5.0, 8.0]

    def test_range_with_inexact_step(self):
        assert parse_values("0.1:0.1:0.3") == [0.1, 0.2, 0.3]

    @pytest.mark.parametrize("text", ["", "abc", "3:0:5", "5:1:3", "1:2"], ids=["empty", "word", "zero-step",
                                                                            "reversed", "two-parts"])
    def test_bad_values(self, text):
        with pytest.raises(InvalidInputError):
            parse_values(text)

    def test_sizes(self):
        assert parse_sizes("10x12, 20") == [(10, 12), (20, None)]

    def test_bad_sizes(self):
        with pytest.raises(InvalidInputError):
            parse_sizes("10by12")


class TestRunConfig:
    def test_defaults(self):
        config = RunConfig()
        assert config.problem is ProblemKind.INTERVAL
        assert config.wavenumber == pytest.approx(2 * np.pi)
        assert config.grid_shape == (60, 60)

    def test_eps_and_strategy_are_exclusive(self):
        with pytest.raises(ValueError):
            RunConfig(eps=2.0, c=1.5, beta=-0.5)

    def test_strategy_needs_both_parts(self):
        with pytest.raises(ValueError):
            RunConfig(c=1.5)

    def test_strategy_gives_eps(self):
        assert RunConfig(c=1.5, beta=-0.5).eps_for(0.04) == pytest.approx(7.5)

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            RunConfig(wavenumber=3.0)

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            RunConfig(grid="60 by 60")

    def test_yaml_then_flags(self, tmp_path):
        path = write_config(tmp_path, {"problem": "rect", "n1": 12, "eps": 3.0, "quad-tol": 1e-10})
        args = build_parser().parse_args(["solve", "--config", path, "--n1", "15"])
        config = load_config(args)
        assert config.problem is ProblemKind.RECTANGLE
        assert (config.n1, config.eps, config.quad_tol) == (15, 3.0, 1e-10)

    def test_config_must_be_mapping(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(InvalidInputError):
            load_config(build_parser().parse_args(["solve", "--config", str(path)]))

    def test_key_value_config(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# interval run\nproblem = 1d\nn1=10\n\neps = 3   # shape\nsymmetric=true\n")
        config = load_config(build_parser().parse_args(["solve", "--config", str(path)]))
        assert config.problem is ProblemKind.INTERVAL
        assert (config.n1, config.eps, config.symmetric) == (10, 3.0, True)

    def test_key_value_config_names_bad_line(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("problem=1d\nn1 10\n")
        with pytest.raises(InvalidInputError, match=r"run.cfg:2"):
            load_config(build_parser().parse_args(["solve", "--config", str(path)]))

    def test_mode_norm_flag(self):
        config = load_config(build_parser().parse_args(["solve", "--problem", "duct", "--mode-norm", "orthonormal"]))
        assert config.mode_norm is ModeNorm.ORTHONORMAL
        assert config.problem_spec().mode_norm is ModeNorm.ORTHONORMAL
        assert RunConfig(problem="duct").problem_spec().mode_norm is ModeNorm.SQRT2

    def test_flag_aliases(self):
        args = build_parser().parse_args(["solve", "--m", "2", "--xs", "0.4"])
        assert (args.mode, args.source) == (2, 0.4)


class TestRunHelpers:
    def test_project_error_examples(self):
        assert project_error([0.3083, 0.1781, 0.0699], [0.0435, 0.0240, None]) == pytest.approx(0.0099, rel=2e-2)
        assert project_error([1.4909, 0.7941, 0.4756], [0.3842, 0.1292, None]) == pytest.approx(0.1226, rel=2e-2)
        assert project_error([0.8, 0.4], [0.2, None]) == pytest.approx(0.1)

    def test_project_error_needs_estimates(self):
        with pytest.raises(InvalidInputError):
            project_error([0.3, None], [0.1, None])
        with pytest.raises(InvalidInputError):
            project_error([0.3, 0.2], [None, None])

    def test_reference_compare(self, interval_problem, solved_interval):
        run = Run(problem=interval_problem, approx=solved_interval)
        assert reference_compare(run, run) == 0.0
        coarse = solve(interval_problem, nodes_interval(15), Kernel(family=KernelFamily.MULTIQUADRIC, shape=4.0))
        assert reference_compare(Run(problem=interval_problem, approx=coarse), run) > 0

    def test_reference_compare_rejects_other_problem(self, solved_interval):
        other = ProblemSpec.interval(3 * np.pi)
        with pytest.raises(InvalidInputError):
            reference_compare(Run(problem=other, approx=solved_interval),
                              Run(problem=ProblemSpec.interval(2 * np.pi), approx=solved_interval))


class TestCommands:
    def test_solve(self, output_dir, capsys):
        code = main(["solve", "--problem", "1d", "--kappa", "6.2832", "--n1", "30", "--kernel", "mq", "--eps", "4",
                     "--grid", "51"])
        assert code == 0
        rows = read_csv(output_dir / "solution.csv")
        assert len(rows) == 51
        assert list(rows[0]) == ["x1", "x2", "Re(s)", "Im(s)", "|s|", "Re(r)", "Im(r)"]
        assert np.isnan(float(rows[0]["Re(r)"])) and np.isnan(float(rows[-1]["Im(r)"]))
        assert all(np.isfinite(float(r["Re(r)"])) for r in rows[1:-1])
        assert "max error vs analytic" in capsys.readouterr().out

    def test_solve_without_eps(self, output_dir, capsys):
        assert main(["solve", "--problem", "1d", "--n1", "10"]) == 2
        assert "eps" in capsys.readouterr().err

    def test_invalid_config_names_field(self, output_dir, capsys):
        assert main(["solve", "--eps", "2", "--c", "1.5", "--beta", "-0.5"]) == 2
        assert "mutually exclusive" in capsys.readouterr().err

    def test_symmetric_needs_1d(self, output_dir):
        assert main(["solve", "--problem", "rect", "--symmetric", "--eps", "3"]) == 2

    def test_bad_thread_count(self, output_dir):
        assert main(["solve", "--threads", "0", "--eps", "3"]) == 2

    def test_nodes(self, output_dir):
        assert main(["nodes", "--problem", "rect", "--n1", "5", "--n2", "4"]) == 0
        nodes = read_nodes(output_dir / "nodes_rect_5x4.csv")
        assert nodes.size == 20

    def test_estimate(self, output_dir):
        assert main(["estimate", "--problem", "1d", "--n1", "20", "--eps", "3", "--grid", "41"]) == 0
        row = read_csv(output_dir / "estimate.csv")[0]
        assert list(row) == ["eps", "estimate", "residual_l2", "residual_max", "true_error"]
        assert float(row["estimate"]) > 0
        assert np.isfinite(float(row["true_error"]))

    def test_sweep(self, output_dir, capsys):
        assert main(["sweep", "--problem", "1d", "--n1", "15", "--eps-list", "2,4,8", "--grid", "41",
                     "--plot", str(output_dir / "sweep.svg")]) == 0
        rows = read_csv(output_dir / "sweep.csv")
        assert [float(r["eps"]) for r in rows] == [2.0, 4.0, 8.0]
        assert (output_dir / "sweep.svg").exists()
        assert "eps_est=" in capsys.readouterr().out

    def test_converge(self, output_dir, capsys):
        assert main(["converge", "--problem", "1d", "--c", "1", "--beta", "-0.5", "--ladder", "10,15,20",
                     "--grid", "41", "--fit", "1/h"]) == 0
        rows = read_csv(output_dir / "converge.csv")
        assert [int(r["N"]) for r in rows] == [10, 15, 20]
        assert "slope" in rows[0]
        assert "error:" in capsys.readouterr().out

    def test_converge_needs_strategy(self, output_dir):
        assert main(["converge", "--problem", "1d", "--eps", "3", "--ladder", "10,20"]) == 2

    def test_singular(self, output_dir):
        assert main(["singular", "--eps", "3", "--nrange", "6,8"]) == 0
        rows = read_csv(output_dir / "singular.csv")
        assert {int(r["N"]) for r in rows} == {6, 8}
        assert sum(int(r["N"]) == 6 for r in rows) <= 12

    def test_limit_classify_example(self, output_dir, capsys):
        assert main(["limit-classify", "--example", "example-iv"]) == 0
        assert "case: iv" in capsys.readouterr().out

    def test_limit_classify_needs_nodes(self, output_dir):
        assert main(["limit-classify"]) == 2

    def test_limit_classify_from_node_file(self, output_dir, capsys):
        path = output_dir / "nodes.csv"
        path.write_text("x1\n0.0\n0.5\n1.0\n")
        assert main(["limit-classify", "--problem", "1d", "--nodes", str(path)]) == 0
        assert "rank_P: 3 (m = 0)" in capsys.readouterr().out

    def test_reproduce_table1(self, output_dir):
        assert main(["reproduce", "table1"]) == 0
        rows = read_csv(output_dir / "table1.csv")
        assert len(rows) == 21
        assert rows[0]["n1"] == "10" and rows[-1]["n2"] == "50"
