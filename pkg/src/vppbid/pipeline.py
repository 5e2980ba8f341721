"""Case-level orchestration: assemble, solve, polish, audit, escalate, verify.

``solve_case`` runs the whole chain for one problem instance. After the
branch-and-bound incumbent comes back, binaries are fixed and the remaining LP
re-solved, restoring a clean vertex before any residual is measured. The big-M
audit then inspects every complementarity pair: a multiplier inside the
validation margin of its dual M means the linearization may have truncated the
optimum, so the dual Ms are escalated tenfold and the case reassembled and
re-solved, at most ``max_escalations`` times. Only then is the solution handed
to the independent verification layer and the report recomputed from raw
values.

Warm starts: the bundled solver cannot ingest a starting point, so a caller
supplied ``warm_start`` vector serves two lesser roles — it is checked for
feasibility in the new model (recorded in the solver stats, useful across
beta-sweep steps where the previous optimum often stays feasible) and it
stands in as the incumbent when a limit-hit solve returns none.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import CaseData
from .milp import MilpModel
from .mpec import AssemblyInfo, BigMConfig, assemble_with_info
from .solve import MilpSolution, is_feasible, polish_solution, solve_milp
from .upper import VppSchedule, extract_schedule
from .verify import (SolveReport, Tolerances, audit_big_m, recompute_report,
                     verify_solution)


@dataclass(frozen=True)
class SolveOptions:
    backend: str = "bundled"           # bundled | external
    node_limit: int | None = None
    gap: float | None = None
    time_limit: float | None = None
    max_escalations: int = 3
    verify: bool = True
    tolerances: Tolerances = field(default_factory=Tolerances)


@dataclass(frozen=True)
class CaseSolution:
    """Everything one solve produced, from raw vector to verified report."""

    case: CaseData
    model: MilpModel
    info: AssemblyInfo
    milp: MilpSolution
    x: np.ndarray | None
    schedule: VppSchedule | None
    report: SolveReport | None
    escalations: int

    @property
    def status(self) -> str:
        return self.milp.status

    @property
    def ok(self) -> bool:
        """Solved to the requested tolerance and fully verified."""
        return (self.milp.status in ("optimal", "gap-limit")
                and self.report is not None and self.report.passed)

    def model_stats(self) -> dict:
        model = self.model
        binaries = int(model.integrality_vector().sum())
        return {"variables": len(model.variables), "binaries": binaries,
                "rows": len(model.rows), "escalations": self.escalations,
                "status": self.milp.status, "node_count": self.milp.node_count,
                "gap": self.milp.gap}


def solve_case(case: CaseData, options: SolveOptions = SolveOptions(),
               warm_start: np.ndarray | None = None,
               config: BigMConfig | None = None) -> CaseSolution:
    """Solve one case end to end; see the module docstring for the stages."""
    case = case.validated()
    config = config or BigMConfig.from_case(case)
    escalations = 0
    started = time.perf_counter()
    while True:
        model, info = assemble_with_info(case, config)
        milp = solve_milp(model, node_limit=options.node_limit, gap=options.gap,
                          time_limit=options.time_limit, backend=options.backend)
        warm_start_state = "none"
        if warm_start is not None:
            warm_start_state = ("feasible" if is_feasible(model, warm_start)
                                else "stale")
        if milp.status == "infeasible":
            return CaseSolution(case, model, info, milp, None, None, None, escalations)
        x = milp.x
        if x is None:
            if warm_start_state != "feasible":
                return CaseSolution(case, model, info, milp, None, None, None,
                                    escalations)
            x = np.array(warm_start, dtype=float)
            milp = MilpSolution(milp.status, x, model.objective_value(x),
                                milp.bound, milp.gap, milp.node_count)
        polished = polish_solution(model, x)
        if polished is not None:
            x = polished.x
        dual_flags = [flag for flag in audit_big_m(info, model, x)
                      if "M_dual" in flag]
        if dual_flags and escalations < options.max_escalations:
            escalations += 1
            config = config.escalate()
            continue
        break
    schedule = extract_schedule(case, model, x)
    stats = {"backend": options.backend, "warm_start": warm_start_state,
             "solve_seconds": round(time.perf_counter() - started, 3),
             "status": milp.status, "node_count": milp.node_count,
             "gap": milp.gap, "bound": milp.bound, "escalations": escalations}
    report = recompute_report(case, model, x, solver_stats=stats,
                              tol=options.tolerances)
    if options.verify:
        verification = verify_solution(case, model, info, x, options.tolerances)
        report = report.with_verification(verification)
    return CaseSolution(case, model, info, milp, x, schedule, report, escalations)
