import ast
import importlib.util
import json
import re
from pathlib import Path

import pytest
from typer.testing import CliRunner

from maxloss.cli import app, main
from maxloss.storage import RECORD_COLUMNS

runner = CliRunner()


@pytest.fixture
def linear_csv(tmp_path):
    path = tmp_path / "lin.csv"
    path.write_text("2,1\n0.6,0.8,0.25\n")
    return path


def test_help():
    result = runner.invoke(app, ["--help"])
    assert result.exit_code == 0
    assert "solve" in result.output


def test_solve_appends_csv_record(tmp_path, linear_csv):
    out = tmp_path / "runs.csv"
    args = ["solve", "--instance", "linear-csv", "--csv", str(linear_csv), "--radius", "1",
            "--method", "subgradient", "--budget", "10", "--out", str(out)]
    assert runner.invoke(app, args).exit_code == 0
    assert runner.invoke(app, args).exit_code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(RECORD_COLUMNS)
    assert len(lines) == 3


def test_solve_json_record(tmp_path, linear_csv):
    out = tmp_path / "runs.json"
    result = runner.invoke(app, ["solve", "--instance", "linear-csv", "--csv", str(linear_csv), "--radius", "1",
                                 "--method", "subgradient", "--out", str(out)])
    assert result.exit_code == 0
    data = json.loads(out.read_text())
    assert data[0]["method"] == "subgradient"
    assert "T" in data[0]


def test_exhausted_budget_exits_two():
    code = main(["solve", "--instance", "hard", "--N", "8", "--T", "4", "--d-cap", "10", "--ell", "16",
                 "--method", "subgradient", "--budget", "1"])
    assert code == 2


def test_missing_csv_exits_one(tmp_path):
    assert main(["solve", "--instance", "linear-csv", "--csv", str(tmp_path / "absent.csv")]) == 1


def test_unknown_flag_exits_one():
    assert main(["solve", "--bogus"]) == 1


def test_unknown_method_exits_one():
    assert main(["solve", "--method", "newton"]) == 1


def test_scaling_needs_four_points(tmp_path):
    assert main(["scaling", "--sweep", "r", "--grid", "0.1,0.2,0.3",
                 "--out", str(tmp_path / "s.csv"), "--summary", str(tmp_path / "s.json")]) == 1


def test_radius_scaling_writes_points_and_fit(tmp_path):
    out, summary = tmp_path / "s.csv", tmp_path / "s.json"
    code = main(["scaling", "--sweep", "r", "--grid", "0.1,0.15,0.2,0.3", "--N", "4", "--eps", "0.1",
                 "--max-outer", "40", "--out", str(out), "--summary", str(summary)])
    assert code == 0
    assert out.read_text().splitlines()[0].startswith("sweep,value,method")
    assert json.loads(summary.read_text())["sweep"] == "r"


def test_verify_softmax_passes():
    assert main(["verify", "--suite", "softmax", "--trials", "1"]) == 0


def test_verify_detects_injected_fault():
    assert main(["verify", "--suite", "softmax", "--trials", "1", "--inject-fault"]) != 0


def test_verify_unknown_suite():
    assert main(["verify", "--suite", "everything"]) == 1


def test_config_round_trip(isolated_config):
    assert runner.invoke(app, ["config", "set", "sgd_first_epoch", "64"]).exit_code == 0
    result = runner.invoke(app, ["config", "get", "sgd_first_epoch"])
    assert result.exit_code == 0
    assert "64" in result.output
    assert json.loads(isolated_config.read_text())["sgd_first_epoch"] == 64


@pytest.mark.parametrize(
    "args",
    [["config", "set", "colour", "blue"], ["config", "get", "colour"], ["config", "set"], ["config", "wipe"]],
)
def test_config_errors(args):
    assert runner.invoke(app, args).exit_code == 1


def _installed_third_party(name):
    spec = importlib.util.find_spec(name)
    origin = (spec.origin or "") if spec else ""
    return "site-packages" in origin or "dist-packages" in origin


def test_imported_packages_are_declared():
    root = Path(__file__).resolve().parents[1]
    declared = {
        re.split(r"[<>=!~ ]", line.strip())[0].lower()
        for line in (root / "requirements.txt").read_text().splitlines()
        if line.strip() and not line.startswith("#")
    }
    imported = set()
    for path in (root / "maxloss").glob("*.py"):
        for node in ast.walk(ast.parse(path.read_text(encoding="utf-8"))):
            if isinstance(node, ast.Import):
                imported |= {alias.name.split(".")[0] for alias in node.names}
            elif isinstance(node, ast.ImportFrom) and node.level == 0 and node.module:
                imported.add(node.module.split(".")[0])
    assert "click" in imported
    assert {name for name in imported if _installed_third_party(name)} <= declared
