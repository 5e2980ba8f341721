"""Solver backend for the model IR.

LPs go through scipy's HiGHS interface with dual extraction; MILPs through
scipy's branch-and-cut wrapper. Both return solutions in the maximize
convention of :class:`vppbid.milp.MilpModel`: duals are d(objective)/d(rhs),
so ``<=`` rows carry nonnegative duals and ``>=`` rows nonpositive ones.

An external MILP solver can be swapped in through the ``VPPBID_SOLVER_CMD``
environment variable, a command template receiving the exported model file and
a solution-file path; see :mod:`vppbid.lpformat` for both formats.
"""

from __future__ import annotations

import math
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize, sparse

from .milp import EQ, GE, LE, MilpModel

INT_TOL = 1e-6


@dataclass(frozen=True)
class LpSolution:
    status: str                    # optimal | infeasible | unbounded
    x: np.ndarray | None
    duals: np.ndarray | None       # one per row, maximize convention
    reduced_costs: np.ndarray | None
    objective: float | None


@dataclass(frozen=True)
class MilpSolution:
    status: str                    # optimal | infeasible | gap-limit | node-limit
    x: np.ndarray | None
    objective: float | None
    bound: float                   # best proven upper bound (maximize)
    gap: float                     # relative gap between bound and incumbent
    node_count: int


class SolverError(RuntimeError):
    pass


def _split_rows(model: MilpModel):
    """Partition rows into A_ub x <= b_ub and A_eq x = b_eq for linprog."""
    n = len(model.variables)
    ub = {"r": [], "c": [], "v": [], "rhs": [], "src": []}  # src: (row index, sign)
    eq = {"r": [], "c": [], "v": [], "rhs": [], "src": []}
    for i, row in enumerate(model.rows):
        part = eq if row.sense == EQ else ub
        sign = -1.0 if row.sense == GE else 1.0
        r = len(part["rhs"])
        for pos, coef in row.coeffs:
            part["r"].append(r)
            part["c"].append(pos)
            part["v"].append(sign * coef)
        part["rhs"].append(sign * row.rhs)
        part["src"].append((i, sign))

    def matrix(part):
        if not part["rhs"]:
            return None
        return sparse.csr_matrix((part["v"], (part["r"], part["c"])),
                                 shape=(len(part["rhs"]), n))

    return (matrix(ub), np.array(ub["rhs"]), ub["src"],
            matrix(eq), np.array(eq["rhs"]), eq["src"])


def solve_lp(model: MilpModel) -> LpSolution:
    """Solve the continuous relaxation as given (integrality markers ignored)."""
    n = len(model.variables)
    c = -model.objective_vector()  # scipy minimizes
    A_ub, b_ub, ub_src, A_eq, b_eq, eq_src = _split_rows(model)
    lb, ub = model.bounds_arrays()
    bounds = list(zip(lb, ub))
    res = optimize.linprog(c, A_ub=A_ub, b_ub=b_ub if A_ub is not None else None,
                           A_eq=A_eq, b_eq=b_eq if A_eq is not None else None,
                           bounds=bounds, method="highs")
    if res.status == 2:
        return LpSolution("infeasible", None, None, None, None)
    if res.status == 3:
        return LpSolution("unbounded", None, None, None, None)
    if res.status != 0:
        raise SolverError(f"LP solve failed: {res.message}")
    duals = np.zeros(len(model.rows))
    if ub_src:
        for (i, sign), marg in zip(ub_src, res.ineqlin.marginals):
            # min-problem marginal of a <= row is <= 0; flip to maximize convention
            duals[i] = -sign * marg
    if eq_src:
        for (i, _), marg in zip(eq_src, res.eqlin.marginals):
            duals[i] = -marg
    reduced = -(res.lower.marginals + res.upper.marginals)
    return LpSolution("optimal", res.x, duals, reduced, model.objective_value(res.x))


def check_lp_certificate(model: MilpModel, sol: LpSolution, tol: float = 1e-7) -> list:
    """Independent optimality check with fresh arithmetic over the original rows.

    Verifies primal feasibility, dual sign conditions, stationarity
    c = A'y + rc and complementary slackness, all scaled by the instance's
    magnitude. Returns a list of violation descriptions, empty when clean.
    """
    if sol.status != "optimal":
        return [f"certificate requested for status {sol.status}"]
    problems = []
    x, y, rc = sol.x, sol.duals, sol.reduced_costs
    lb, ub = model.bounds_arrays()
    scale = max(1.0, float(np.max(np.abs(x), initial=0.0)))
    if np.any(x < lb - tol * scale) or np.any(x > ub + tol * scale):
        problems.append("primal bounds violated")
    activities = model.row_activities(x)
    c_residual = model.objective_vector().astype(float)
    for i, row in enumerate(model.rows):
        act, rhs = activities[i], row.rhs
        rscale = max(1.0, abs(rhs))
        if row.sense == LE:
            if act > rhs + tol * rscale:
                problems.append(f"row {row.name} violated: {act} > {rhs}")
            if y[i] < -tol:
                problems.append(f"row {row.name} dual sign: {y[i]}")
            if abs(y[i] * (rhs - act)) > tol * max(1.0, abs(y[i]) * rscale):
                problems.append(f"row {row.name} complementarity: y={y[i]}, slack={rhs - act}")
        elif row.sense == GE:
            if act < rhs - tol * rscale:
                problems.append(f"row {row.name} violated: {act} < {rhs}")
            if y[i] > tol:
                problems.append(f"row {row.name} dual sign: {y[i]}")
            if abs(y[i] * (act - rhs)) > tol * max(1.0, abs(y[i]) * rscale):
                problems.append(f"row {row.name} complementarity: y={y[i]}, slack={act - rhs}")
        else:
            if abs(act - rhs) > tol * rscale:
                problems.append(f"row {row.name} violated: {act} != {rhs}")
        for pos, coef in row.coeffs:
            c_residual[pos] -= coef * y[i]
    c_residual -= rc
    cscale = max(1.0, float(np.max(np.abs(model.objective_vector()), initial=0.0)))
    worst = float(np.max(np.abs(c_residual), initial=0.0))
    if worst > tol * cscale:
        problems.append(f"stationarity residual {worst}")
    for j, v in enumerate(model.variables):
        away_lo = x[j] - lb[j]
        away_up = ub[j] - x[j]
        if rc[j] > tol * cscale and (not math.isfinite(away_up) or away_up > tol * scale):
            if away_lo > tol * scale:
                problems.append(f"variable {v.name} reduced cost {rc[j]} but interior")
        if rc[j] < -tol * cscale and (not math.isfinite(away_lo) or away_lo > tol * scale):
            if away_up > tol * scale:
                problems.append(f"variable {v.name} reduced cost {rc[j]} but interior")
    return problems


def _limits_options(node_limit, gap, time_limit):
    options = {"disp": False, "presolve": True}
    if node_limit is not None:
        options["node_limit"] = int(node_limit)
    if gap is not None:
        options["mip_rel_gap"] = float(gap)
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    return options


def _rescale_rows(model: MilpModel, factor: float) -> MilpModel:
    """Multiply every row through by ``factor``; the feasible set is identical."""
    rows = tuple(replace(r, coeffs=tuple((p, factor * c) for p, c in r.coeffs),
                         rhs=factor * r.rhs) for r in model.rows)
    return replace(model, rows=rows)


def solve_milp(model: MilpModel, node_limit=None, gap=None, time_limit=None,
               backend: str | None = None) -> MilpSolution:
    """Branch-and-bound solve; deterministic for fixed model and limits.

    ``backend`` forces the route: "bundled" ignores ``VPPBID_SOLVER_CMD``,
    "external" requires it, None lets the environment decide.
    """
    if backend not in (None, "bundled", "external"):
        raise ValueError(f"unknown backend {backend!r}")
    cmd = None if backend == "bundled" else os.environ.get("VPPBID_SOLVER_CMD")
    if backend == "external" and not cmd:
        raise SolverError("external backend requested but VPPBID_SOLVER_CMD is not set")
    if cmd:
        return _solve_external(model, cmd)
    c = -model.objective_vector()
    lb, ub = model.bounds_arrays()
    options = _limits_options(node_limit, gap, time_limit)

    def run(m: MilpModel):
        A, rlo, rup = m.constraint_matrix()
        constraints = optimize.LinearConstraint(A, rlo, rup) if A.shape[0] else ()
        return optimize.milp(c, constraints=constraints,
                             integrality=model.integrality_vector(),
                             bounds=optimize.Bounds(lb, ub), options=options)

    res = run(model)
    # The vendored HiGHS presolve occasionally misclassifies a feasible
    # instance as infeasible. Before accepting the verdict, re-present the
    # identical system with every row rescaled by a power of two (exact in
    # floating point, so the feasible set is unchanged); incumbents are
    # revalidated by the caller's certificate checks either way.
    for factor in (2.0, 4.0):
        if res.status != 2:
            break
        res = run(_rescale_rows(model, factor))
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 2:
        return MilpSolution("infeasible", None, None, -math.inf, math.inf, nodes)
    if res.x is None:
        if res.status == 1:  # limit hit before any incumbent was found
            dual_bound = getattr(res, "mip_dual_bound", None)
            bound = math.inf
            if dual_bound is not None and math.isfinite(dual_bound):
                bound = -float(dual_bound) + model.objective_constant
            return MilpSolution("node-limit", None, None, bound, math.inf, nodes)
        raise SolverError(f"MILP solve returned no incumbent: {res.message}")
    objective = model.objective_value(res.x)
    dual_bound = getattr(res, "mip_dual_bound", None)
    bound = objective if dual_bound is None else -float(dual_bound) + model.objective_constant
    bound = max(bound, objective)  # incumbent is itself a valid lower bound
    rel_gap = abs(bound - objective) / max(1.0, abs(objective))
    if res.status == 0:
        status = "gap-limit" if gap is not None and rel_gap > 1e-9 else "optimal"
    elif res.status == 1:
        status = "node-limit"
    else:
        raise SolverError(f"MILP solve failed: {res.message}")
    if status == "optimal":
        rel_gap = 0.0
    return MilpSolution(status, res.x, objective, bound, rel_gap, nodes)


def polish_solution(model: MilpModel, x: np.ndarray) -> LpSolution | None:
    """Fix binaries at their rounded values and re-solve the remaining LP.

    Branch-and-bound incumbents carry integrality noise of order the solver
    tolerance, which big-M rows amplify; the fixed LP restores a clean vertex.
    Returns None when the rounded fixing is infeasible (caller keeps the raw x).
    """
    integrality = model.integrality_vector()
    fixes = {j: float(round(x[j])) for j in np.nonzero(integrality)[0]}
    fixed = model.fix_variables(fixes).relax_integrality()
    sol = solve_lp(fixed)
    if sol.status != "optimal":
        return None
    return sol


def is_feasible(model: MilpModel, x: np.ndarray, tol: float = 1e-6) -> bool:
    """Point feasibility for warm-start reuse across related models."""
    lb, ub = model.bounds_arrays()
    if x.shape != lb.shape:
        return False
    scale = max(1.0, float(np.max(np.abs(x))))
    if np.any(x < lb - tol * scale) or np.any(x > ub + tol * scale):
        return False
    integrality = model.integrality_vector()
    if np.any(np.abs(x[integrality == 1] - np.round(x[integrality == 1])) > INT_TOL):
        return False
    activities = model.row_activities(x)
    for i, row in enumerate(model.rows):
        rscale = max(1.0, abs(row.rhs))
        act = activities[i]
        if row.sense == LE and act > row.rhs + tol * rscale:
            return False
        if row.sense == GE and act < row.rhs - tol * rscale:
            return False
        if row.sense == EQ and abs(act - row.rhs) > tol * rscale:
            return False
    return True


def _solve_external(model: MilpModel, cmd_template: str) -> MilpSolution:
    from . import lpformat

    with tempfile.TemporaryDirectory(prefix="vppbid-") as tmp:
        model_path = os.path.join(tmp, "model.lp")
        solution_path = os.path.join(tmp, "solution.txt")
        lpformat.write_lp(model, model_path)
        command = [part.format(model=model_path, solution=solution_path)
                   for part in shlex.split(cmd_template)]
        proc = subprocess.run(command, capture_output=True, text=True)
        if proc.returncode != 0:
            raise SolverError(f"external solver failed ({proc.returncode}): {proc.stderr.strip()}")
        values = lpformat.read_solution(solution_path)
        x = lpformat.apply_solution(model, values)
    integrality = model.integrality_vector()
    frac = np.abs(x[integrality == 1] - np.round(x[integrality == 1]))
    if frac.size and float(frac.max()) > INT_TOL:
        raise SolverError("external solution is not integer-feasible")
    objective = model.objective_value(x)
    return MilpSolution("optimal", x, objective, objective, 0.0, 0)
