"""End-to-end orchestration tests on the compact desk case.

Covers the full solve chain (assemble, solve, polish, audit, verify), the
escalation loop under a deliberately tight adequacy margin, warm-start
bookkeeping, limit-hit fallbacks, infeasibility handling and backend routing.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from vppbid import pipeline
from vppbid.caseio import case_to_document, document_to_case
from vppbid.defaults import desk_case
from vppbid.mpec import BigMConfig
from vppbid.pipeline import SolveOptions, solve_case
from vppbid.solve import MilpSolution, SolverError


@pytest.fixture(scope="module")
def desk():
    return desk_case()


@pytest.fixture(scope="module")
def solved(desk):
    return solve_case(desk)


def test_desk_case_solves_and_verifies(desk, solved):
    assert solved.status == "optimal"
    assert solved.ok
    assert solved.escalations == 0
    assert solved.x is not None
    assert solved.schedule is not None
    assert solved.report.passed
    assert solved.report.verification.passed
    assert solved.report.case_name == desk.name


def test_recomputed_objective_matches_solver(solved):
    scale = max(1.0, abs(solved.milp.objective))
    assert abs(solved.report.objective - solved.milp.objective) <= 1e-6 * scale


def test_model_stats_shape(solved):
    stats = solved.model_stats()
    assert stats["status"] == "optimal"
    assert stats["variables"] > stats["binaries"] > 0
    assert stats["rows"] > 0
    assert stats["escalations"] == 0
    assert stats["gap"] == 0.0


def test_solver_stats_recorded(solved):
    stats = solved.report.solver_stats
    assert stats["backend"] == "bundled"
    assert stats["warm_start"] == "none"
    assert stats["status"] == "optimal"
    assert stats["escalations"] == 0
    assert stats["solve_seconds"] >= 0.0


def test_schedule_dimensions(desk, solved):
    sched = solved.schedule
    assert sched.bid.shape == (desk.T, desk.S)
    assert float(sched.bid.min()) >= -1e-9
    assert float(sched.bid.max()) <= desk.max_bid() + 1e-9


def test_repeat_solve_is_deterministic(desk, solved):
    again = solve_case(desk)
    assert again.milp.objective == solved.milp.objective
    assert np.array_equal(again.x, solved.x)


def test_warm_start_feasibility_is_recorded(desk, solved):
    warm = solve_case(desk, warm_start=solved.x)
    assert warm.report.solver_stats["warm_start"] == "feasible"
    stale = solve_case(desk, warm_start=np.zeros(3))
    assert stale.report.solver_stats["warm_start"] == "stale"


def test_tight_margin_escalates_and_settles(desk, solved):
    # margin 0.95 flags any multiplier above a twentieth of its M, so the
    # first pass is audited as inadequate and the dual Ms are raised tenfold
    tight = replace(BigMConfig.from_case(desk), margin=0.95)
    sol = solve_case(desk, config=tight)
    assert sol.escalations >= 1
    assert sol.ok
    scale = max(1.0, abs(solved.report.objective))
    assert abs(sol.report.objective - solved.report.objective) <= 1e-6 * scale


def test_exhausted_escalation_budget_fails_verification(desk):
    tight = replace(BigMConfig.from_case(desk), margin=0.95)
    sol = solve_case(desk, SolveOptions(max_escalations=0), config=tight)
    assert sol.status == "optimal"
    assert sol.escalations == 0
    assert sol.report.verification.big_m_flags
    assert not sol.ok


def test_infeasible_case_short_circuits(desk):
    doc = case_to_document(desk)
    for load in doc["loads"]:
        load["demand"] = [[100.0 * v for v in row] for row in load["demand"]]
    heavy = document_to_case(doc, source="inflated")
    sol = solve_case(heavy)
    assert sol.status == "infeasible"
    assert sol.x is None
    assert sol.schedule is None
    assert sol.report is None
    assert not sol.ok


def test_limit_hit_falls_back_to_feasible_warm_start(monkeypatch, desk, solved):
    def never_finds(model, **kwargs):
        return MilpSolution("node-limit", None, None, math.inf, math.inf, 7)

    monkeypatch.setattr(pipeline, "solve_milp", never_finds)
    sol = solve_case(desk, warm_start=solved.x)
    assert sol.status == "node-limit"
    assert not sol.ok
    assert sol.x is not None
    assert sol.report is not None and sol.report.passed
    assert sol.report.solver_stats["warm_start"] == "feasible"
    scale = max(1.0, abs(solved.report.objective))
    assert abs(sol.report.objective - solved.report.objective) <= 1e-6 * scale


def test_limit_hit_without_warm_start_returns_empty(monkeypatch, desk):
    def never_finds(model, **kwargs):
        return MilpSolution("node-limit", None, None, math.inf, math.inf, 0)

    monkeypatch.setattr(pipeline, "solve_milp", never_finds)
    sol = solve_case(desk, warm_start=np.zeros(3))
    assert sol.status == "node-limit"
    assert sol.x is None
    assert sol.report is None
    assert not sol.ok


def test_external_backend_requires_command(monkeypatch, desk):
    monkeypatch.delenv("VPPBID_SOLVER_CMD", raising=False)
    with pytest.raises(SolverError, match="VPPBID_SOLVER_CMD"):
        solve_case(desk, SolveOptions(backend="external"))


def test_bundled_backend_ignores_external_command(monkeypatch, desk):
    monkeypatch.setenv("VPPBID_SOLVER_CMD", "/nonexistent {model} {solution}")
    sol = solve_case(desk, SolveOptions(backend="bundled"))
    assert sol.ok
