"""Solver backend tests: LP duals, MILP statuses, polish, export and the
external-solver seam."""

from __future__ import annotations

import math
import os
import stat
import textwrap

import numpy as np
import pytest

from vppbid.lpformat import apply_solution, lp_string, read_solution, write_lp
from vppbid.milp import BINARY, EQ, GE, LE, LinExpr, ModelBuilder
from vppbid.solve import (check_lp_certificate, is_feasible, polish_solution,
                          solve_lp, solve_milp)


def test_one_dimensional_lp():
    mb = ModelBuilder("tiny")
    x = mb.add_var("x")
    mb.add_row("cap", (), LinExpr().add(x, 1.0), LE, 3.0)
    mb.add_objective(LinExpr().add(x, 1.0))
    model = mb.build()
    sol = solve_lp(model)
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(3.0, abs=1e-9)
    assert sol.objective == pytest.approx(3.0, abs=1e-9)
    assert sol.duals[0] == pytest.approx(1.0, abs=1e-9)
    assert check_lp_certificate(model, sol) == []


def test_infeasible_and_unbounded():
    mb = ModelBuilder("bad")
    x = mb.add_var("x", lb=-math.inf, ub=math.inf)
    mb.add_row("lo", (), LinExpr().add(x, 1.0), GE, 1.0)
    mb.add_row("hi", (), LinExpr().add(x, 1.0), LE, 0.0)
    mb.add_objective(LinExpr().add(x, 1.0))
    assert solve_lp(mb.build()).status == "infeasible"

    mb = ModelBuilder("unbounded")
    x = mb.add_var("x", lb=-math.inf, ub=math.inf)
    mb.add_objective(LinExpr().add(x, 1.0))
    assert solve_lp(mb.build()).status == "unbounded"


def clearing_lp():
    """The hand-solved congested 2-bus instance, written in the model IR.

    min 10 g_A + 30 g_B (as maximize of the negative) with a 20 MW line;
    optimum is g = (20, 30), lambda = (10, 30) on the balance rows.
    """
    mb = ModelBuilder("clearing-2bus")
    ga = mb.add_var("g", ("A",), ub=100.0)
    gb = mb.add_var("g", ("B",), ub=100.0)
    f = mb.add_var("f", (1,), lb=-20.0, ub=20.0)
    t1 = mb.add_var("theta", (1,), lb=-math.inf, ub=math.inf)
    t2 = mb.add_var("theta", (2,), lb=-math.inf, ub=math.inf)
    mb.add_row("flowdef", (1,), LinExpr().add(f, 1.0).add(t1, -10.0).add(t2, 10.0), EQ, 0.0)
    mb.add_row("balance", (1,), LinExpr().add(ga, 1.0).add(f, -1.0), EQ, 0.0)
    mb.add_row("balance", (2,), LinExpr().add(gb, 1.0).add(f, 1.0), EQ, 50.0)
    mb.add_row("ref", (), LinExpr().add(t1, 1.0), EQ, 0.0)
    mb.add_objective(LinExpr().add(ga, -10.0).add(gb, -30.0))
    return mb.build()


def test_clearing_lp_matches_market_oracle():
    model = clearing_lp()
    sol = solve_lp(model)
    assert sol.status == "optimal"
    assert sol.x[model.var_index("g", ("A",))] == pytest.approx(20.0, abs=1e-7)
    assert sol.x[model.var_index("g", ("B",))] == pytest.approx(30.0, abs=1e-7)
    # duals are d(max obj)/d(rhs) = -lambda for the minimize-form prices
    balance_rows = {r.indices: i for i, r in enumerate(model.rows) if r.family == "balance"}
    assert -sol.duals[balance_rows[(1,)]] == pytest.approx(10.0, abs=1e-7)
    assert -sol.duals[balance_rows[(2,)]] == pytest.approx(30.0, abs=1e-7)
    assert check_lp_certificate(model, sol) == []


def knapsack():
    mb = ModelBuilder("knapsack")
    x1 = mb.add_var("x", (1,), kind=BINARY)
    x2 = mb.add_var("x", (2,), kind=BINARY)
    mb.add_row("cap", (), LinExpr().add(x1, 1.0).add(x2, 1.0), LE, 1.5)
    mb.add_objective(LinExpr().add(x1, 1.0).add(x2, 1.0))
    return mb.build()


def test_tiny_knapsack():
    sol = solve_milp(knapsack())
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0, abs=1e-9)
    assert sol.gap == 0.0
    assert np.allclose(sol.x, np.round(sol.x), atol=1e-9)
    assert sol.bound >= sol.objective - 1e-9


def test_integral_relaxation_solves_at_root():
    mb = ModelBuilder("integral")
    x = mb.add_var("x", (1,), kind=BINARY)
    mb.add_row("cap", (), LinExpr().add(x, 1.0), LE, 1.0)
    mb.add_objective(LinExpr().add(x, 1.0))
    sol = solve_milp(mb.build())
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0)
    assert sol.node_count <= 1


def test_milp_infeasible():
    mb = ModelBuilder("impossible")
    x = mb.add_var("x", (1,), kind=BINARY)
    mb.add_row("lo", (), LinExpr().add(x, 1.0), GE, 2.0)
    mb.add_objective(LinExpr().add(x, 1.0))
    sol = solve_milp(mb.build())
    assert sol.status == "infeasible"
    assert sol.x is None


def test_determinism():
    a = solve_milp(knapsack())
    b = solve_milp(knapsack())
    assert np.array_equal(a.x, b.x)
    assert a.node_count == b.node_count
    assert a.objective == b.objective


def storage_like_model():
    mb = ModelBuilder("polish")
    z = mb.add_var("z", (1,), kind=BINARY)
    x = mb.add_var("x", (1,))
    mb.add_row("link", (), LinExpr().add(x, 1.0).add(z, -10.0), LE, 0.0)
    mb.add_objective(LinExpr().add(x, 1.0))
    return mb.build()


def point(model, **by_symbol):
    x = np.zeros(len(model.variables))
    for symbol, value in by_symbol.items():
        x[model.var_index(symbol, (1,))] = value
    return x


def test_polish_cleans_integrality_noise():
    model = storage_like_model()
    noisy = point(model, z=0.9999997, x=9.999997)
    polished = polish_solution(model, noisy)
    assert polished is not None and polished.status == "optimal"
    assert polished.x[model.var_index("z", (1,))] == 1.0
    assert polished.x[model.var_index("x", (1,))] == pytest.approx(10.0, abs=1e-12)


def test_is_feasible():
    model = storage_like_model()
    assert is_feasible(model, point(model, z=1.0, x=10.0))
    assert is_feasible(model, point(model, z=0.0, x=0.0))
    assert not is_feasible(model, point(model, z=0.0, x=5.0))   # violates link row
    assert not is_feasible(model, point(model, z=0.5, x=5.0))   # fractional binary
    assert not is_feasible(model, point(model, z=1.0, x=-1.0))  # bound violation


def test_lp_string_deterministic_and_complete():
    a, b = lp_string(clearing_lp()), lp_string(clearing_lp())
    assert a == b
    assert "Maximize" in a and "Subject To" in a and "End" in a
    assert "balance(2): " in a
    assert "theta(1) free" in a
    k = lp_string(knapsack())
    assert "Binaries" in k and "x(1)" in k


def test_solution_file_round_trip(tmp_path):
    path = tmp_path / "sol.txt"
    path.write_text("# comment\nx(1) 1\nx(2) 0.0\n\n")
    values = read_solution(path)
    assert values == {"x(1)": 1.0, "x(2)": 0.0}
    model = knapsack()
    x = apply_solution(model, values)
    assert np.array_equal(x, [1.0, 0.0])


def test_solution_file_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("x 1 2\n")
    with pytest.raises(ValueError):
        read_solution(bad)
    bad.write_text("x abc\n")
    with pytest.raises(ValueError):
        read_solution(bad)


def test_external_solver_seam(tmp_path, monkeypatch):
    script = tmp_path / "fake_solver.py"
    script.write_text(textwrap.dedent("""\
        import sys
        model_path, solution_path = sys.argv[1], sys.argv[2]
        assert open(model_path).readline().startswith("\\\\")
        with open(solution_path, "w") as fh:
            fh.write("x(1) 1\\nx(2) 0\\n")
    """))
    monkeypatch.setenv("VPPBID_SOLVER_CMD", f"python3 {script} {{model}} {{solution}}")
    sol = solve_milp(knapsack())
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0)
    assert np.array_equal(sol.x, [1.0, 0.0])
