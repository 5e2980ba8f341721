"""Independent verification of solved bidding models.

Every check here recomputes quantities from the case data and raw solution
values rather than reusing the assembled rows, so an assembly bug and a
verification bug would have to agree to slip through. The brute-force oracle
builds its own clearing and dual LPs from scratch for the same reason.

Degenerate clearing LPs need care in two places. The re-solve comparison
accepts any re-solved dual vector that is complementary to the model's primal
point, because LP duals are set-valued under degeneracy. The brute-force
oracle evaluates a candidate bid at its *optimistic* value, maximizing first
the strategic dispatch over the optimal primal face and then the price over
the optimal dual face; any primal optimum pairs with any dual optimum, so the
two one-dimensional maximizations are exact and match what the single-level
model is allowed to claim.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.optimize

from .data import CaseData
from .market import clear_market
from .mpec import AssemblyInfo
from .risk import evaluate_cvar
from .upper import (SOC_BOUNDARY_FRAC, SOC_MAX_FRAC, SOC_MIN_FRAC,
                    TANK_MAX_FRAC, TANK_MIN_FRAC, VppSchedule, ess_soc_step,
                    extract_schedule, hss_tank_step, scenario_revenue)


@dataclass(frozen=True)
class Tolerances:
    """Shared defaults for all verification comparisons (natural units)."""

    residual: float = 1e-6
    objective: float = 1e-6
    complementarity: float = 1e-6
    binding: float = 1e-5      # how close to a limit counts as binding
    price_floor: float = -1e-9


class BudgetExceededError(RuntimeError):
    pass


@dataclass(frozen=True)
class KktSection:
    max_stationarity_residual: float
    max_complementarity_product: float
    max_primal_infeasibility: float
    passed: bool


@dataclass(frozen=True)
class ResolveSection:
    objective_deltas: np.ndarray   # (T, S)
    max_objective_delta: float
    max_dispatch_delta: float
    max_price_delta: float
    degenerate: bool
    prices_consistent: bool
    passed: bool


@dataclass(frozen=True)
class VerificationReport:
    kkt: KktSection
    resolve: ResolveSection
    cvar_delta: float
    big_m_flags: tuple
    nonnegative_prices: bool
    notes: tuple
    passed: bool

    def to_text(self) -> str:
        lines = [
            "verification report",
            f"  overall: {'PASS' if self.passed else 'FAIL'}",
            f"  max stationarity residual:    {self.kkt.max_stationarity_residual:.3e}",
            f"  max complementarity product:  {self.kkt.max_complementarity_product:.3e}",
            f"  max primal infeasibility:     {self.kkt.max_primal_infeasibility:.3e}",
            f"  max re-solve objective delta: {self.resolve.max_objective_delta:.3e}",
            f"  max re-solve dispatch delta:  {self.resolve.max_dispatch_delta:.3e}",
            f"  max re-solve price delta:     {self.resolve.max_price_delta:.3e}",
            f"  degenerate clearing:          {'yes' if self.resolve.degenerate else 'no'}",
            f"  prices consistent:            {'yes' if self.resolve.prices_consistent else 'no'}",
            f"  CVaR recomputation delta:     {self.cvar_delta:.3e}",
            f"  nonnegative VPP prices:       {'yes' if self.nonnegative_prices else 'no'}",
            f"  big-M adequacy flags:         {len(self.big_m_flags)}",
        ]
        for flag in self.big_m_flags:
            lines.append(f"    {flag}")
        for note in self.notes:
            lines.append(f"  note: {note}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SolveReport:
    """Objective decomposition of one solved case, recomputed from raw values."""

    case_name: str
    objective: float
    revenues: tuple          # per scenario, fresh lambda*g + REC arithmetic
    expected: float
    var: float
    cvar: float
    alpha: float
    beta: float
    solver_stats: dict
    notes: tuple
    passed: bool
    verification: VerificationReport | None = None

    def decomposition_delta(self) -> float:
        return abs(self.objective - (self.expected + self.beta * self.cvar))

    def with_verification(self, report: VerificationReport) -> "SolveReport":
        return replace(self, verification=report,
                       passed=self.passed and report.passed)

    def to_text(self) -> str:
        lines = [
            f"solve report: {self.case_name}",
            f"  overall: {'PASS' if self.passed else 'FAIL'}",
            f"  objective:        {self.objective:.6f}",
            f"  expected revenue: {self.expected:.6f}",
            f"  VaR  (alpha={self.alpha:g}): {self.var:.6f}",
            f"  CVaR (alpha={self.alpha:g}): {self.cvar:.6f}",
            f"  beta:             {self.beta:g}",
            "  revenue by scenario: "
            + ", ".join(f"s{i}={r:.2f}" for i, r in enumerate(self.revenues, 1)),
        ]
        stats = self.solver_stats
        if stats:
            keys = [k for k in ("status", "node_count", "gap", "escalations",
                                "warm_start") if k in stats]
            lines.append("  solver: " + ", ".join(f"{k}={stats[k]}" for k in keys))
        lines += [f"  note: {note}" for note in self.notes]
        text = "\n".join(lines)
        if self.verification is not None:
            text += "\n" + self.verification.to_text()
        return text


def _values_3d(case, model, x, symbol, ids):
    """Solution values as an (len(ids), T, S) array."""
    out = np.empty((len(ids), case.T, case.S))
    for i, ident in enumerate(ids):
        for t in range(1, case.T + 1):
            for s in range(1, case.S + 1):
                out[i, t - 1, s - 1] = model.value(x, symbol, (ident, t, s))
    return out


def check_kkt(case: CaseData, model, x, tol: Tolerances = Tolerances()) -> KktSection:
    """Recompute stationarity, primal feasibility, and complementarity products.

    All residuals come from fresh arithmetic over the case data; the model is
    used only as an index into the solution vector.
    """
    case = case.validated()
    network = case.network
    offer_ids = [u.id for u in case.offers]
    line_ids = [ln.id for ln in network.lines]
    g = _values_3d(case, model, x, "g", offer_ids)
    f = _values_3d(case, model, x, "f", line_ids)
    theta = _values_3d(case, model, x, "theta", list(network.buses))
    lam = _values_3d(case, model, x, "lam", list(network.buses))
    xi = _values_3d(case, model, x, "xi", line_ids)
    gbar = np.array([[model.value(x, "gbar", (t, s))
                      for s in range(1, case.S + 1)]
                     for t in range(1, case.T + 1)])
    demand = case.demand_array()
    bus_of = network.bus_index()

    primal = 0.0
    stationarity = 0.0
    comp = 0.0

    # flow definition, balance, and the reference fix
    for li, ln in enumerate(network.lines):
        x_mw = network.reactance_mw(ln)
        lhs = f[li] - (theta[bus_of[ln.from_bus]] - theta[bus_of[ln.to_bus]]) / x_mw
        primal = max(primal, float(np.max(np.abs(lhs))))
    for b in network.buses:
        bi = bus_of[b]
        acc = -demand[bi]
        for ui, u in enumerate(case.offers):
            if u.bus == b:
                acc = acc + g[ui]
        for li, ln in enumerate(network.lines):
            if ln.from_bus == b:
                acc = acc - f[li]
            if ln.to_bus == b:
                acc = acc + f[li]
        primal = max(primal, float(np.max(np.abs(acc))))
    primal = max(primal, float(np.max(np.abs(theta[bus_of[network.reference_bus]]))))

    # variable bounds and capacity caps of the embedded clearing
    for ui, u in enumerate(case.offers):
        cap = gbar if u.strategic else np.asarray(u.capacity_array())
        primal = max(primal, float(np.max(-g[ui])), float(np.max(g[ui] - cap)))
    for li, ln in enumerate(network.lines):
        if math.isfinite(ln.lower):
            primal = max(primal, float(np.max(ln.lower - f[li])))
        if math.isfinite(ln.upper):
            primal = max(primal, float(np.max(f[li] - ln.upper)))

    # stationarity in flows, generation, and angles; complementarity products
    zeros = np.zeros((case.T, case.S))
    dlo, dup = {}, {}
    for li, ln in enumerate(network.lines):
        dlo[li] = (_values_3d(case, model, x, "dlo", [ln.id])[0]
                   if math.isfinite(ln.lower) else zeros)
        dup[li] = (_values_3d(case, model, x, "dup", [ln.id])[0]
                   if math.isfinite(ln.upper) else zeros)
    glo = _values_3d(case, model, x, "glo", offer_ids)
    gup = _values_3d(case, model, x, "gup", offer_ids)

    for li, ln in enumerate(network.lines):
        res = (xi[li] - lam[bus_of[ln.from_bus]] + lam[bus_of[ln.to_bus]]
               + dlo[li] - dup[li])
        stationarity = max(stationarity, float(np.max(np.abs(res))))
        if math.isfinite(ln.lower):
            comp = max(comp, float(np.max((f[li] - ln.lower) * dlo[li])))
        if math.isfinite(ln.upper):
            comp = max(comp, float(np.max((ln.upper - f[li]) * dup[li])))
    for ui, u in enumerate(case.offers):
        cost = case.strategic_cost if u.strategic else u.cost
        res = lam[bus_of[u.bus]] + glo[ui] - gup[ui] - cost
        stationarity = max(stationarity, float(np.max(np.abs(res))))
        cap = gbar if u.strategic else np.asarray(u.capacity_array())
        comp = max(comp, float(np.max(g[ui] * glo[ui])))
        comp = max(comp, float(np.max((cap - g[ui]) * gup[ui])))
    for b in network.buses:
        acc = np.zeros((case.T, case.S))
        for li, ln in enumerate(network.lines):
            x_mw = network.reactance_mw(ln)
            if ln.from_bus == b:
                acc = acc - xi[li] / x_mw
            if ln.to_bus == b:
                acc = acc + xi[li] / x_mw
        stationarity = max(stationarity, float(np.max(np.abs(acc))))

    # upper-level physics: device recursions, bands, endpoints, bid definition
    schedule = extract_schedule(case, model, x)
    for j in case.ess_units:
        sched = schedule.ess[j.id]
        e = sched["e"]
        for t in range(case.T):
            stepped = ess_soc_step(e[t], sched["p_ch"][t], sched["p_dis"][t], j)
            primal = max(primal, abs(e[t + 1] - stepped))
        band_lo = SOC_MIN_FRAC * j.energy_capacity
        band_hi = SOC_MAX_FRAC * j.energy_capacity
        primal = max(primal, float(np.max(band_lo - e[1:])),
                     float(np.max(e[1:] - band_hi)),
                     abs(e[-1] - SOC_BOUNDARY_FRAC * j.energy_capacity))
    for k in case.hss_units:
        sched = schedule.hss[k.id]
        tank = sched["tank"]
        for t in range(case.T):
            stepped = hss_tank_step(tank[t], sched["p_el"][t], sched["h_fc"][t], k)
            primal = max(primal, abs(tank[t + 1] - stepped))
        band_lo = TANK_MIN_FRAC * k.tank_capacity
        band_hi = TANK_MAX_FRAC * k.tank_capacity
        primal = max(primal, float(np.max(band_lo - tank[1:])),
                     float(np.max(tank[1:] - band_hi)),
                     abs(tank[-1] - tank[0]))
    forecast = case.forecast_total()
    for t in range(case.T):
        for s in range(case.S):
            agg = forecast[t, s]
            for j in case.ess_units:
                agg += schedule.ess[j.id]["p_dis"][t] - schedule.ess[j.id]["p_ch"][t]
            for k in case.hss_units:
                agg += (k.eta_fuel_cell * k.heat_value * schedule.hss[k.id]["h_fc"][t]
                        - schedule.hss[k.id]["p_el"][t])
            primal = max(primal, abs(gbar[t, s] - agg))

    passed = (stationarity <= tol.residual and comp <= tol.complementarity
              and primal <= tol.residual)
    return KktSection(stationarity, comp, primal, passed)


def verify_by_resolve(case: CaseData, schedule: VppSchedule, model, x,
                      tol: Tolerances = Tolerances()) -> ResolveSection:
    """Re-clear every (t, s) at the solved bids and compare both levels.

    The lower-level cost must agree to tolerance always. Dispatch may differ
    only when the clearing is degenerate (equal cost); re-solved prices are
    accepted if they are complementary to the model's primal point.
    """
    case = case.validated()
    outcome = clear_market(case, schedule.bid)
    offer_ids = [u.id for u in case.offers]
    g = _values_3d(case, model, x, "g", offer_ids)
    f = _values_3d(case, model, x, "f", [ln.id for ln in case.network.lines])
    lam = _values_3d(case, model, x, "lam", list(case.network.buses))

    costs = np.array([case.strategic_cost if u.strategic else u.cost
                      for u in case.offers])
    model_cost = np.einsum("u,uts->ts", costs, g)
    deltas = np.abs(model_cost - outcome.cost)
    scale = np.maximum(1.0, np.abs(outcome.cost))
    max_objective_delta = float(np.max(deltas / scale))

    dispatch_delta = float(np.max(np.abs(g - outcome.dispatch)))
    price_delta = float(np.max(np.abs(lam - outcome.prices)))
    degenerate = dispatch_delta > tol.binding or price_delta > tol.binding

    # degeneracy-aware acceptance: the re-solved multipliers must be
    # complementary to the model's own primal point
    consistent = True
    for ui, u in enumerate(case.offers):
        cap = schedule.bid if u.strategic else np.asarray(u.capacity_array())
        active_up = outcome.gamma_upper[ui] > tol.binding
        active_lo = outcome.gamma_lower[ui] > tol.binding
        if np.any(active_up & (cap - g[ui] > tol.binding)):
            consistent = False
        if np.any(active_lo & (g[ui] > tol.binding)):
            consistent = False
    for li, ln in enumerate(case.network.lines):
        if math.isfinite(ln.upper) and np.any(
                (outcome.delta_upper[li] > tol.binding)
                & (ln.upper - f[li] > tol.binding)):
            consistent = False
        if math.isfinite(ln.lower) and np.any(
                (outcome.delta_lower[li] > tol.binding)
                & (f[li] - ln.lower > tol.binding)):
            consistent = False

    passed = max_objective_delta <= tol.objective and consistent
    return ResolveSection(deltas, max_objective_delta, dispatch_delta,
                          price_delta, degenerate, consistent, passed)


def audit_big_m(info: AssemblyInfo, model, x) -> tuple:
    """Flag multipliers near M_dual and slacks beyond M_primal.

    Primal Ms bound the geometric range of each slack by construction (a
    symmetric line at one limit puts the opposite pair's slack exactly at
    2*cap), so touching M_primal is legitimate and only exceeding it marks a
    broken model. Dual Ms genuinely truncate the multiplier set, so a value
    within the margin of M_dual means the linearization may have cut the
    optimum and the configuration must escalate.
    """
    flags = []
    margin = info.config.margin
    for pair in info.pairs:
        slack = pair.slack_value(model, x)
        mult = pair.mult_value(model, x)
        if slack > pair.m_primal + 1e-6:
            flags.append(f"slack beyond M_primal: {pair.family}{pair.indices}"
                         f" value {slack:.6g} vs M {pair.m_primal:.6g}")
        if mult >= (1.0 - margin) * pair.m_dual:
            flags.append(f"multiplier near M_dual: {pair.family}{pair.indices}"
                         f" value {mult:.6g} vs M {pair.m_dual:.6g}")
    return tuple(flags)


def recompute_report(case: CaseData, model, x, solver_stats: dict | None = None,
                     tol: Tolerances = Tolerances()) -> SolveReport:
    """Rebuild the objective decomposition from raw prices and dispatch."""
    case = case.validated()
    vpp = case.strategic_offer
    forecast = case.forecast_total()
    kappa = case.risk.rec_coupling
    notes = []
    revenues = []
    price_ok = True
    for s in range(1, case.S + 1):
        lam = [model.value(x, "lam", (case.vpp_bus, t, s)) for t in range(1, case.T + 1)]
        disp = [model.value(x, "g", (vpp.id, t, s)) for t in range(1, case.T + 1)]
        if min(lam) < tol.price_floor:
            price_ok = False
        rec_price = [kappa * l for l in lam]
        pg = [float(forecast[t - 1, s - 1]) for t in range(1, case.T + 1)]
        revenues.append(scenario_revenue(lam, disp, rec_price, pg))
    weights = np.asarray(case.probabilities())
    revenues_arr = np.asarray(revenues)
    expected = float(weights @ revenues_arr)
    var, cvar = evaluate_cvar(revenues_arr, weights, case.risk.alpha)
    objective = model.objective_value(x)
    recomputed = expected + case.risk.beta * cvar
    delta = abs(objective - recomputed)
    passed = delta <= tol.objective * max(1.0, abs(objective)) and price_ok
    if not price_ok:
        notes.append("negative price at the VPP bus")
    if delta > tol.objective * max(1.0, abs(objective)):
        notes.append("objective decomposition mismatch: "
                     f"model {objective:.9g} vs expected {expected:.9g}"
                     f" + beta {case.risk.beta:g} * cvar {cvar:.9g}"
                     f" = {recomputed:.9g}")
        for s, (rv, mv) in enumerate(zip(
                revenues, (model.value(x, "rev", (s,)) for s in range(1, case.S + 1))),
                start=1):
            notes.append(f"  scenario {s}: fresh revenue {rv:.9g}, model revenue {mv:.9g}")
    return SolveReport(
        case_name=case.name, objective=objective, revenues=tuple(revenues),
        expected=expected, var=var, cvar=cvar, alpha=case.risk.alpha,
        beta=case.risk.beta, solver_stats=dict(solver_stats or {}),
        notes=tuple(notes), passed=passed)


def verify_solution(case: CaseData, model, info: AssemblyInfo, x,
                    tol: Tolerances = Tolerances()) -> VerificationReport:
    """Full audit: KKT, re-solve, CVaR recomputation, big-M, price sign."""
    case = case.validated()
    kkt = check_kkt(case, model, x, tol)
    schedule = extract_schedule(case, model, x)
    resolve = verify_by_resolve(case, schedule, model, x, tol)
    report = recompute_report(case, model, x, tol=tol)
    cvar_delta = report.decomposition_delta()
    flags = audit_big_m(info, model, x)
    notes = list(report.notes)
    if resolve.degenerate:
        notes.append("clearing degenerate at the solved bids; "
                     "dispatch/price deltas are informational")
    nonneg = all(model.value(x, "lam", (case.vpp_bus, t, s)) >= tol.price_floor
                 for t in range(1, case.T + 1) for s in range(1, case.S + 1))
    passed = (kkt.passed and resolve.passed and report.passed
              and not flags and nonneg)
    return VerificationReport(kkt=kkt, resolve=resolve, cvar_delta=cvar_delta,
                              big_m_flags=flags, nonnegative_prices=nonneg,
                              notes=tuple(notes), passed=passed)


# -- brute-force bilevel oracle ----------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Enumeration grid for the oracle's continuous decisions."""

    power_step: float = 1.0          # MW grid for charge/discharge/electrolyzer
    h2_step: float = 50.0            # kg grid for fuel-cell draw
    tank0_fracs: tuple = (0.5,)      # initial tank level as fractions of capacity
    budget: int = 10_000_000

    def refined(self, factor: float = 2.0) -> "GridSpec":
        return replace(self, power_step=self.power_step / factor,
                       h2_step=self.h2_step / factor)


@dataclass(frozen=True)
class BruteForceResult:
    objective: float
    bound: float                 # objective + grid slack (sandwich upper side)
    bids: np.ndarray             # (T, S)
    ess_actions: dict            # id -> net MW per hour (+charge / -discharge)
    hss_actions: dict            # id -> (p_el, h_fc) arrays
    evaluations: int
    grid: GridSpec


def _grid_points(limit: float, step: float):
    n = int(math.floor(limit / step + 1e-9))
    pts = [i * step for i in range(n + 1)]
    if pts[-1] < limit - 1e-9:
        pts.append(limit)
    return pts


def _ess_candidates(params, horizon, step):
    """Net actions per hour; the final hour repays the exact energy drift."""
    charge = _grid_points(params.charge_limit, step)
    discharge = _grid_points(params.discharge_limit, step)
    actions = sorted(set([-d for d in discharge] + charge))
    e0 = SOC_BOUNDARY_FRAC * params.energy_capacity
    lo = SOC_MIN_FRAC * params.energy_capacity
    hi = SOC_MAX_FRAC * params.energy_capacity
    out = []
    for head in itertools.product(actions, repeat=horizon - 1):
        e = e0
        ok = True
        for a in head:
            e = e + params.eta_charge * a if a >= 0 else e + a / params.eta_discharge
            if not lo - 1e-9 <= e <= hi + 1e-9:
                ok = False
                break
        if not ok:
            continue
        drift = e - e0
        if drift >= 0:
            last = -drift * params.eta_discharge      # discharge to repay
            if -last > params.discharge_limit + 1e-9:
                continue
        else:
            last = -drift / params.eta_charge         # charge to repay
            if last > params.charge_limit + 1e-9:
                continue
        out.append(tuple(head) + (last,))
    return out


def _hss_candidates(params, horizon, power_step, h2_step, tank0_fracs):
    """(p_el, h_fc) per hour; the final fuel-cell draw closes the tank loop."""
    el = _grid_points(params.electrolyzer_limit, power_step)
    fc = _grid_points(params.fuel_cell_limit, h2_step)
    lo = TANK_MIN_FRAC * params.tank_capacity
    hi = TANK_MAX_FRAC * params.tank_capacity
    rate = params.eta_electrolyzer / params.heat_value
    out = []
    head_hours = horizon - 1
    for frac in tank0_fracs:
        tank0 = frac * params.tank_capacity
        for head in itertools.product(itertools.product(el, fc), repeat=head_hours):
            tank = tank0
            ok = True
            for pel, hfc in head:
                tank = tank + rate * pel - hfc
                if not lo - 1e-9 <= tank <= hi + 1e-9:
                    ok = False
                    break
            if not ok:
                continue
            for pel_last in el:
                hfc_last = tank + rate * pel_last - tank0
                if not -1e-9 <= hfc_last <= params.fuel_cell_limit + 1e-9:
                    continue
                if not lo - 1e-9 <= tank0 <= hi + 1e-9:
                    continue
                plan = tuple(head) + ((pel_last, max(hfc_last, 0.0)),)
                out.append((tank0, plan))
    return out


def _clearing_arrays(case, t, s, bid):
    """Equality system and bounds of one hourly clearing, built from scratch."""
    network = case.network
    U, L, B = len(case.offers), len(network.lines), len(network.buses)
    bus_of = network.bus_index()
    n = U + L + B
    rows = []
    rhs = []
    for li, ln in enumerate(network.lines):
        row = np.zeros(n)
        row[U + li] = 1.0
        x_mw = network.reactance_mw(ln)
        row[U + L + bus_of[ln.from_bus]] = -1.0 / x_mw
        row[U + L + bus_of[ln.to_bus]] = 1.0 / x_mw
        rows.append(row)
        rhs.append(0.0)
    demand = case.demand_array()
    for b in network.buses:
        row = np.zeros(n)
        for ui, u in enumerate(case.offers):
            if u.bus == b:
                row[ui] = 1.0
        for li, ln in enumerate(network.lines):
            if ln.from_bus == b:
                row[U + li] = -1.0
            if ln.to_bus == b:
                row[U + li] = 1.0
        rows.append(row)
        rhs.append(float(demand[bus_of[b], t - 1, s - 1]))
    row = np.zeros(n)
    row[U + L + bus_of[network.reference_bus]] = 1.0
    rows.append(row)
    rhs.append(0.0)

    costs = np.zeros(n)
    bounds = []
    for ui, u in enumerate(case.offers):
        if u.strategic:
            costs[ui] = case.strategic_cost
            bounds.append((0.0, bid))
        else:
            costs[ui] = u.cost
            bounds.append((0.0, float(u.capacity[s - 1][t - 1])))
    for ln in network.lines:
        bounds.append((ln.lower if math.isfinite(ln.lower) else -np.inf,
                       ln.upper if math.isfinite(ln.upper) else np.inf))
    for _ in network.buses:
        bounds.append((-np.inf, np.inf))
    return np.array(rows), np.array(rhs), costs, bounds


def _optimistic_revenue(case, t, s, bid):
    """lambda+ * (g+ + REC coefficient) maximized over the optimal faces."""
    A, b, costs, bounds = _clearing_arrays(case, t, s, bid)
    res = scipy.optimize.linprog(costs, A_eq=A, b_eq=b, bounds=bounds, method="highs")
    if res.status != 0:
        return None
    value = float(res.fun)
    # pin the optimal face as tightly as the base solve allows; widen only if
    # roundoff makes the cut infeasible
    slacks = [tol * max(1.0, abs(value)) for tol in (1e-9, 1e-7)]
    U = len(case.offers)
    vpp_col = next(i for i, u in enumerate(case.offers) if u.strategic)

    # widest strategic dispatch on the optimal primal face
    sense = np.zeros_like(costs)
    sense[vpp_col] = -1.0
    g_plus = float(res.x[vpp_col])
    for slack in slacks:
        res_g = scipy.optimize.linprog(
            sense, A_ub=costs[None, :], b_ub=[value + slack],
            A_eq=A, b_eq=b, bounds=bounds, method="highs")
        if res_g.status == 0:
            g_plus = float(-res_g.fun)
            break

    # highest VPP price on the optimal dual face, from a fresh dual system
    network = case.network
    L, B = len(network.lines), len(network.buses)
    bus_of = network.bus_index()
    # columns: lam(B), xi(L), dlo(L), dup(L), glo(U), gup(U), rho
    n = B + 3 * L + 2 * U + 1
    eq_rows, eq_rhs = [], []
    for ui, u in enumerate(case.offers):
        row = np.zeros(n)
        row[bus_of[u.bus]] = 1.0
        row[B + 3 * L + ui] = 1.0
        row[B + 3 * L + U + ui] = -1.0
        eq_rows.append(row)
        eq_rhs.append(case.strategic_cost if u.strategic else u.cost)
    for li, ln in enumerate(network.lines):
        row = np.zeros(n)
        row[B + li] = 1.0
        row[bus_of[ln.from_bus]] = -1.0
        row[bus_of[ln.to_bus]] = 1.0
        row[B + L + li] = 1.0
        row[B + 2 * L + li] = -1.0
        eq_rows.append(row)
        eq_rhs.append(0.0)
    for bus in network.buses:
        row = np.zeros(n)
        for li, ln in enumerate(network.lines):
            x_mw = network.reactance_mw(ln)
            if ln.from_bus == bus:
                row[B + li] -= 1.0 / x_mw
            if ln.to_bus == bus:
                row[B + li] += 1.0 / x_mw
        if bus == network.reference_bus:
            row[-1] = 1.0
        eq_rows.append(row)
        eq_rhs.append(0.0)

    dual_obj = np.zeros(n)
    demand = case.demand_array()
    for bus in network.buses:
        dual_obj[bus_of[bus]] = float(demand[bus_of[bus], t - 1, s - 1])
    for li, ln in enumerate(network.lines):
        if math.isfinite(ln.lower):
            dual_obj[B + L + li] = ln.lower
        if math.isfinite(ln.upper):
            dual_obj[B + 2 * L + li] = -ln.upper
    for ui, u in enumerate(case.offers):
        cap = bid if u.strategic else float(u.capacity[s - 1][t - 1])
        dual_obj[B + 3 * L + U + ui] = -cap

    dual_bounds = [(-np.inf, np.inf)] * B + [(-np.inf, np.inf)] * L
    for ln in network.lines:
        dual_bounds.append((0.0, 0.0 if not math.isfinite(ln.lower) else np.inf))
    for ln in network.lines:
        dual_bounds.append((0.0, 0.0 if not math.isfinite(ln.upper) else np.inf))
    dual_bounds += [(0.0, np.inf)] * (2 * U) + [(-np.inf, np.inf)]

    sense = np.zeros(n)
    sense[bus_of[case.vpp_bus]] = -1.0
    lam_plus = None
    for slack in slacks:
        res_lam = scipy.optimize.linprog(
            sense, A_ub=-dual_obj[None, :], b_ub=[-(value - slack)],
            A_eq=np.array(eq_rows), b_eq=np.array(eq_rhs),
            bounds=dual_bounds, method="highs")
        if res_lam.status == 0:
            lam_plus = float(-res_lam.fun)
            break
    if lam_plus is None:
        return None
    rec = case.risk.rec_coupling * float(case.forecast_total()[t - 1, s - 1])
    return lam_plus * (g_plus + rec)


def brute_force_bilevel(case: CaseData, grid: GridSpec = GridSpec()):
    """Enumerate device schedules on a grid and price each bid optimistically.

    Device schedules determine the bids exactly (the bid definition is an
    equality), so the grid covers only the physical decisions; the last hour
    of each device repays the storage drift so endpoint constraints hold by
    construction. Returns the best candidate found, a lower bound on the true
    optimum that converges from below as the grid refines when the optimal
    bids lie on the grid lattice.
    """
    case = case.validated()
    ess_lists = [_ess_candidates(j, case.T, grid.power_step) for j in case.ess_units]
    hss_lists = [_hss_candidates(k, case.T, grid.power_step, grid.h2_step,
                                 grid.tank0_fracs) for k in case.hss_units]
    n_cand = 1
    for lst in ess_lists + hss_lists:
        n_cand *= max(len(lst), 1)
    if n_cand * case.T * case.S > grid.budget:
        raise BudgetExceededError(
            f"{n_cand} candidates x {case.T * case.S} clearings exceeds budget")

    forecast = case.forecast_total()
    weights = np.asarray(case.probabilities())
    memo = {}
    evaluations = 0

    def bid_value(t, s, bid):
        nonlocal evaluations
        key = (t, s, round(bid, 9))
        if key not in memo:
            evaluations += 1
            memo[key] = _optimistic_revenue(case, t, s, bid)
        return memo[key]

    best = None
    for ess_combo in itertools.product(*ess_lists) if ess_lists else [()]:
        for hss_combo in itertools.product(*hss_lists) if hss_lists else [()]:
            net = np.zeros(case.T)
            for actions in ess_combo:
                for t, a in enumerate(actions):
                    net[t] -= a  # positive action is charge, which lowers the bid
            for k, (tank0, plan) in zip(case.hss_units, hss_combo):
                for t, (pel, hfc) in enumerate(plan):
                    net[t] += k.eta_fuel_cell * k.heat_value * hfc - pel
            bids = forecast + net[:, None]
            if np.min(bids) < -1e-9:
                continue
            bids = np.maximum(bids, 0.0)
            revs = np.zeros(case.S)
            feasible = True
            for t in range(1, case.T + 1):
                for s in range(1, case.S + 1):
                    val = bid_value(t, s, float(bids[t - 1, s - 1]))
                    if val is None:
                        feasible = False
                        break
                    revs[s - 1] += val
                if not feasible:
                    break
            if not feasible:
                continue
            expected = float(weights @ revs)
            objective = expected
            if case.risk.beta > 0:
                _, cvar = evaluate_cvar(revs, weights, case.risk.alpha)
                objective += case.risk.beta * cvar
            if best is None or objective > best[0]:
                best = (objective, bids.copy(),
                        {j.id: np.array(a) for j, a in zip(case.ess_units, ess_combo)},
                        {k.id: (tank0, plan) for k, (tank0, plan)
                         in zip(case.hss_units, hss_combo)})
    if best is None:
        raise BudgetExceededError("no feasible candidate on the grid")
    objective, bids, ess_actions, hss_actions = best
    price_cap = 10.0 * max([case.strategic_cost]
                           + [o.cost for o in case.competitor_offers] + [1.0])
    slack = price_cap * case.T * (
        grid.power_step * (2 * len(case.ess_units) + len(case.hss_units))
        + grid.h2_step * sum(k.eta_fuel_cell * k.heat_value for k in case.hss_units))
    return BruteForceResult(objective=objective, bound=objective + slack,
                            bids=bids, ess_actions=ess_actions,
                            hss_actions=hss_actions, evaluations=evaluations,
                            grid=grid)
