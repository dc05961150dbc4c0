"""Bundled LP-file solver: parsing, solving, and the file protocol."""

from __future__ import annotations

import subprocess
import sys

import pytest

from pipesched.lp_io import write_lp
from pipesched.milpmodel import build_model
from pipesched.solver_shim import main, parse_lp, solve_lp, _status_of

TINY_LP = """\
Maximize
 obj: x + 2 y
Subject To
 c1: x + y <= 1
Bounds
 0 <= x <= 1
 0 <= y <= 1
Binary
 x
 y
End
"""


def test_parse_tiny_lp():
    lp = parse_lp(TINY_LP)
    assert lp.maximize
    assert lp.objective == {"x": 1.0, "y": 2.0}
    assert lp.rows == [("c1", {"x": 1.0, "y": 1.0}, "<=", 1.0)]
    assert lp.integers == {"x", "y"}
    assert lp.upper == {"x": 1.0, "y": 1.0}
    assert lp.order == ["x", "y"]


def test_parse_signs_and_implicit_coefficients():
    lp = parse_lp(
        "Minimize\n obj: - 2 a + b\nSubject To\n r0: a - b >= -3\n"
        "Bounds\n -1 <= a <= 4\nEnd\n"
    )
    assert not lp.maximize
    assert lp.objective == {"a": -2.0, "b": 1.0}
    assert lp.rows == [("r0", {"a": 1.0, "b": -1.0}, ">=", -3.0)]
    assert lp.lower["a"] == -1.0 and lp.upper["a"] == 4.0


def test_parse_accepts_model_lp_output(ref1):
    # the shim must accept every LP file the writer emits
    model = build_model(ref1)
    lp = parse_lp(write_lp(model))
    assert lp.maximize
    assert len(lp.order) == len(model.variables)
    assert len(lp.integers) == sum(1 for v in model.variables if v.binary)
    assert len(lp.rows) == sum(1 for c in model.constraints if c.terms)


def test_solve_tiny_maximization():
    lp = parse_lp(TINY_LP)
    res, cols = solve_lp(lp, time_limit=60, gap=0.0)
    status, objective, bound = _status_of(res, lp.maximize, 0.0)
    assert status == "optimal"
    assert objective == pytest.approx(2.0)
    assert res.x[cols["y"]] == pytest.approx(1.0)
    assert res.x[cols["x"]] == pytest.approx(0.0)


def test_solve_reports_infeasible():
    lp = parse_lp(
        "Maximize\n obj: x\nSubject To\n c1: x >= 2\nBounds\n x <= 1\nEnd\n"
    )
    res, _ = solve_lp(lp, time_limit=60, gap=0.0)
    status, objective, bound = _status_of(res, lp.maximize, 0.0)
    assert status == "infeasible"
    assert objective is None


def test_main_writes_solution_file(tmp_path):
    model_path = tmp_path / "m.lp"
    sol_path = tmp_path / "m.sol"
    model_path.write_text(TINY_LP)
    rc = main([str(model_path), str(sol_path), "--time-limit", "60", "--gap", "0"])
    assert rc == 0
    text = sol_path.read_text()
    assert "# Status = optimal" in text
    assert "# Objective value = 2.0" in text
    assert "y 1.0" in text


def test_main_reports_errors_through_the_file(tmp_path):
    sol_path = tmp_path / "bad.sol"
    rc = main([str(tmp_path / "missing.lp"), str(sol_path)])
    assert rc == 1
    assert "# Status = error" in sol_path.read_text()


def test_module_is_invocable_as_subprocess(tmp_path):
    model_path = tmp_path / "m.lp"
    sol_path = tmp_path / "m.sol"
    model_path.write_text(TINY_LP)
    proc = subprocess.run(
        [sys.executable, "-m", "pipesched.solver_shim", str(model_path), str(sol_path)],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    assert "# Status = optimal" in sol_path.read_text()
