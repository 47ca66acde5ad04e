import argparse
import json
import math

import pytest

from taplab.cli import (
    EXIT_CHECK_FAILED,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    EXIT_USAGE,
    build_config,
    exit_code,
    main,
    output_path,
)
from taplab.exceptions import ConfigError
from taplab.schemas import LambdaVariant, RunConfig, TaskName
from taplab.services.reporting import read_artifact
from taplab.services.tasks import (
    TASKS,
    FreeconvTask,
    ParisiSolveTask,
    TaskResult,
    _thetas,
    get_task,
)


def _make_args(**overrides) -> argparse.Namespace:
    defaults = {
        "config": None,
        "task": None,
        "seed": None,
        "out": None,
        "paths": None,
        "grid_points": None,
        "quad_nodes": None,
    }
    defaults.update(overrides)
    return argparse.Namespace(**defaults)


def _values(rows: list[dict]) -> dict:
    return {r["quantity"]: r["value"] for r in rows}


class TestTaskRegistry:
    """Registry lookup and lazy loading."""

    def test_unknown_task(self):
        with pytest.raises(ValueError, match="Unknown task"):
            get_task("solve-everything")

    def test_verify_suite_is_lazy_loaded(self):
        task = get_task("verify-suite")
        assert task.name == "verify-suite"
        assert TASKS["verify-suite"] is task

    def test_every_task_name_is_registered(self):
        assert set(TASKS) == {t.value for t in TaskName}


class TestTasks:
    """Tasks run against configurations."""

    def test_parisi_solve_defaults(self):
        result = ParisiSolveTask().run(RunConfig())
        values = _values(result.rows)
        assert values["parisi_value"] == pytest.approx(math.log(2.0) + 0.125, abs=1e-8)
        assert values["m2@0"] == pytest.approx(0.0, abs=1e-15)
        assert result.converged and result.passed

    @pytest.mark.parametrize(
        "name, field_path",
        [("tap-eval", "measure.magnetizations"), ("stationary-uq", "task.f"),
         ("legendre", "task.fs")],
    )
    def test_missing_inputs(self, name, field_path):
        config = RunConfig.load(json.dumps({"task": {"name": name}}))
        with pytest.raises(ConfigError) as info:
            get_task(name).run(config)
        assert info.value.field_path == field_path

    def test_freeconv_semicircle(self):
        result = FreeconvTask().run(RunConfig())
        assert len(result.rows) == 41
        assert result.info["edge_left"] == pytest.approx(-2.0, abs=1e-10)
        middle = result.rows[20]
        assert middle["density"] == pytest.approx(1.0 / math.pi, abs=1e-9)
        assert middle["log_potential"] == pytest.approx(-0.5, abs=1e-9)
        assert result.rows[0]["density"] == 0.0

    def test_theta_grid_defaults(self):
        annealed = _thetas(RunConfig())
        quenched = _thetas(RunConfig.load(json.dumps({"task": {"variant": "quenched"}})))
        assert len(annealed) == 20
        assert annealed[-1] == 1.0
        assert quenched[-1] == pytest.approx(0.95)
        assert RunConfig().task.variant == LambdaVariant.ANNEALED


class TestCli:
    """Configuration overrides, exit codes and artifacts."""

    def test_overrides_are_applied(self, tmp_path):
        config = build_config(_make_args(task="freeconv", seed=4, paths=100, grid_points=2049,
                                         out=str(tmp_path / "x.csv")))
        assert config.task.name == TaskName.FREECONV
        assert config.seed() == 4
        assert config.mc.paths == 100
        assert config.grid.points == 2049
        assert output_path(config) == tmp_path / "x.csv"

    def test_override_is_validated(self):
        with pytest.raises(ConfigError) as info:
            build_config(_make_args(grid_points=100))
        assert info.value.field_path == "grid.points"

    def test_default_output_path(self, tmp_path):
        assert output_path(RunConfig()) == tmp_path / "out" / "parisi-solve.csv"

    def test_exit_code_precedence(self):
        assert exit_code(TaskResult("t", [])) == EXIT_OK
        assert exit_code(TaskResult("t", [], passed=False)) == EXIT_CHECK_FAILED
        assert exit_code(TaskResult("t", [], converged=False, passed=False)) == EXIT_NOT_CONVERGED

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["--config", str(tmp_path / "missing.json")])
        assert info.value.code == EXIT_USAGE

    def test_invalid_config_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"xi": {"coeffs": [[3, 1.0]]}}), encoding="utf-8")
        with pytest.raises(SystemExit) as info:
            main(["--config", str(path)])
        assert info.value.code == EXIT_USAGE

    def test_parisi_solve_run_writes_artifact(self, tmp_path):
        out = tmp_path / "parisi.csv"
        with pytest.raises(SystemExit) as info:
            main(["--task", "parisi-solve", "--out", str(out), "--grid-points", "1025",
                  "--quad-nodes", "48"])
        assert info.value.code == EXIT_OK
        header, rows = read_artifact(out)
        assert header["task"] == "parisi-solve"
        assert header["info"]["converged"] is True
        value = float(_values(rows)["parisi_value"])
        assert value == pytest.approx(math.log(2.0) + 0.125, abs=1e-8)
