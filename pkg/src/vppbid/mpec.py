"""Single-level MILP reformulation of the bi-level bidding problem.

The lower-level clearing LP is replaced by its KKT system: primal equalities,
stationarity rows, and complementary slackness linearized with big-M binaries.
The bilinear revenue term price*dispatch is replaced exactly via stationarity
of the strategic unit plus the lower level's strong-duality identity:

    lam_vpp * g_vpp = C_vpp * g_vpp + gup_vpp * gbar            (stationarity
                                                      + complementarity)
    gup_vpp * gbar  = sum_b lam_b D_b + sum_l (dlo F_lo - dup F_up)
                      - sum_{u != vpp} gup_u cap_u - sum_u C_u g_u   (duality)

which combine to a linear expression; both identities hold exactly whenever
the complementarity binaries are integral. Only lines with a finite limit get
multipliers and binaries: a constraint that cannot bind has a zero multiplier,
so dropping its complementarity pair is exact, not a relaxation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .data import CaseData
from .milp import BINARY, EQ, LE, LinExpr, MilpModel, ModelBuilder
from .risk import build_cvar_block
from .upper import (build_bid_aggregation, build_ess_block, build_hss_block,
                    build_rec_and_pg_block)


@dataclass(frozen=True)
class BigMConfig:
    """Per-family constants for the complementarity linearization.

    Primal values bound slacks (MW); dual values bound multipliers ($/MWh).
    ``margin`` is the adequacy headroom: a solution with any slack or
    multiplier within margin * M of its M is rejected and M escalated.
    """

    flow_primal: float
    gen_primal: float
    flow_dual: float
    gen_dual: float
    margin: float = 0.01

    def __post_init__(self):
        if min(self.flow_primal, self.gen_primal, self.flow_dual, self.gen_dual) <= 0:
            raise ValueError("all big-M values must be > 0")
        if not 0.0 < self.margin < 1.0:
            raise ValueError("margin must lie in (0, 1)")

    @staticmethod
    def from_case(case: CaseData) -> "BigMConfig":
        costs = [case.strategic_cost] + [o.cost for o in case.competitor_offers]
        m_dual = 10.0 * max(max(costs), 1.0)
        limits = [abs(v) for ln in case.network.lines
                  for v in (ln.lower, ln.upper) if math.isfinite(v)]
        caps = [v for o in case.competitor_offers for row in o.capacity for v in row]
        caps.append(case.max_bid())
        return BigMConfig(
            flow_primal=2.0 * max(limits) if limits else 1.0,
            gen_primal=2.0 * max(max(caps), 1.0),
            flow_dual=m_dual,
            gen_dual=m_dual,
        )

    def escalate(self, factor: float = 10.0) -> "BigMConfig":
        """Raise the dual constants; the primal ones are valid bounds already."""
        return replace(self, flow_dual=self.flow_dual * factor,
                       gen_dual=self.gen_dual * factor)


@dataclass(frozen=True)
class CompPair:
    """One complementarity pair slack >= 0 _|_ multiplier >= 0, with its big-Ms."""

    family: str          # flow_lo | flow_up | gen_lo | gen_up
    indices: tuple       # (line or offer id, t, s)
    slack_terms: tuple   # ((var key, coefficient), ...)
    slack_constant: float
    mult_key: tuple
    binary_key: tuple
    m_primal: float
    m_dual: float

    def slack_value(self, model: MilpModel, x) -> float:
        return self.slack_constant + math.fsum(
            coef * x[model.var_index(*key)] for key, coef in self.slack_terms)

    def mult_value(self, model: MilpModel, x) -> float:
        return float(x[model.var_index(*self.mult_key)])


@dataclass(frozen=True)
class AssemblyInfo:
    config: BigMConfig
    pairs: tuple             # CompPair
    revenue_keys: tuple      # one per scenario
    cvar: dict               # handles from build_cvar_block
    rec_price_coeff: np.ndarray  # (T, S) coefficient on lam(vpp) per hour


def build_kkt_block(mb: ModelBuilder, case: CaseData, config: BigMConfig) -> None:
    """Lower-level primal equalities plus stationarity, per (t, s).

    Registers the primal variables (g, f, theta) and duals (lam, xi, dlo, dup,
    glo, gup). The angle stationarity row is emitted for every bus including
    the reference: summed over buses those rows telescope to zero, so the
    reference fix needs no dual of its own and the system is not restricted.
    """
    network = case.network
    lines = network.lines
    for t in range(1, case.T + 1):
        for s in range(1, case.S + 1):
            for u in case.offers:
                ub = case.max_bid() if u.strategic else u.capacity[s - 1][t - 1]
                mb.add_var("g", (u.id, t, s), ub=float(ub))
                mb.add_var("glo", (u.id, t, s), ub=config.gen_dual)
                mb.add_var("gup", (u.id, t, s), ub=config.gen_dual)
            for ln in lines:
                mb.add_var("f", (ln.id, t, s), lb=ln.lower, ub=ln.upper)
                mb.add_var("xi", (ln.id, t, s), lb=-math.inf, ub=math.inf)
                if math.isfinite(ln.lower):
                    mb.add_var("dlo", (ln.id, t, s), ub=config.flow_dual)
                if math.isfinite(ln.upper):
                    mb.add_var("dup", (ln.id, t, s), ub=config.flow_dual)
            for b in network.buses:
                mb.add_var("theta", (b, t, s), lb=-math.inf, ub=math.inf)
                mb.add_var("lam", (b, t, s), lb=-math.inf, ub=math.inf)

    demand = case.demand_array()
    index = network.bus_index()
    for t in range(1, case.T + 1):
        for s in range(1, case.S + 1):
            for ln in lines:
                x = network.reactance_mw(ln)
                row = LinExpr().add(("f", (ln.id, t, s)), 1.0)
                row.add(("theta", (ln.from_bus, t, s)), -1.0 / x)
                row.add(("theta", (ln.to_bus, t, s)), 1.0 / x)
                mb.add_row("flow_def", (ln.id, t, s), row, EQ, 0.0)
            for b in network.buses:
                row = LinExpr()
                for u in case.offers:
                    if u.bus == b:
                        row.add(("g", (u.id, t, s)), 1.0)
                for ln in lines:
                    if ln.from_bus == b:
                        row.add(("f", (ln.id, t, s)), -1.0)
                    if ln.to_bus == b:
                        row.add(("f", (ln.id, t, s)), 1.0)
                mb.add_row("balance", (b, t, s), row, EQ,
                           float(demand[index[b], t - 1, s - 1]))
            mb.add_row("ref_fix", (t, s),
                       LinExpr().add(("theta", (network.reference_bus, t, s)), 1.0),
                       EQ, 0.0)
            vpp = case.strategic_offer
            cap_row = LinExpr().add(("g", (vpp.id, t, s)), 1.0).add(("gbar", (t, s)), -1.0)
            mb.add_row("gen_cap_vpp", (t, s), cap_row, LE, 0.0)

            for ln in lines:
                row = LinExpr().add(("xi", (ln.id, t, s)), 1.0)
                row.add(("lam", (ln.from_bus, t, s)), -1.0)
                row.add(("lam", (ln.to_bus, t, s)), 1.0)
                if math.isfinite(ln.lower):
                    row.add(("dlo", (ln.id, t, s)), 1.0)
                if math.isfinite(ln.upper):
                    row.add(("dup", (ln.id, t, s)), -1.0)
                mb.add_row("stat_flow", (ln.id, t, s), row, EQ, 0.0)
            for u in case.offers:
                cost = case.strategic_cost if u.strategic else u.cost
                row = LinExpr().add(("lam", (u.bus, t, s)), 1.0)
                row.add(("glo", (u.id, t, s)), 1.0)
                row.add(("gup", (u.id, t, s)), -1.0)
                mb.add_row("stat_gen", (u.id, t, s), row, EQ, cost)
            for b in network.buses:
                row = LinExpr()
                for ln in lines:
                    x = network.reactance_mw(ln)
                    if ln.from_bus == b:
                        row.add(("xi", (ln.id, t, s)), -1.0 / x)
                    if ln.to_bus == b:
                        row.add(("xi", (ln.id, t, s)), 1.0 / x)
                mb.add_row("stat_angle", (b, t, s), row, EQ, 0.0)


def complementarity_pairs(case: CaseData, config: BigMConfig) -> tuple:
    """Descriptors for every slack/multiplier pair of the lower level."""
    pairs = []
    vpp = case.strategic_offer
    for t in range(1, case.T + 1):
        for s in range(1, case.S + 1):
            for ln in case.network.lines:
                if math.isfinite(ln.lower):
                    pairs.append(CompPair(
                        "flow_lo", (ln.id, t, s),
                        ((("f", (ln.id, t, s)), 1.0),), -ln.lower,
                        ("dlo", (ln.id, t, s)), ("y_flo", (ln.id, t, s)),
                        config.flow_primal, config.flow_dual))
                if math.isfinite(ln.upper):
                    pairs.append(CompPair(
                        "flow_up", (ln.id, t, s),
                        ((("f", (ln.id, t, s)), -1.0),), ln.upper,
                        ("dup", (ln.id, t, s)), ("y_fup", (ln.id, t, s)),
                        config.flow_primal, config.flow_dual))
            for u in case.offers:
                pairs.append(CompPair(
                    "gen_lo", (u.id, t, s),
                    ((("g", (u.id, t, s)), 1.0),), 0.0,
                    ("glo", (u.id, t, s)), ("y_glo", (u.id, t, s)),
                    config.gen_primal, config.gen_dual))
                if u.strategic:
                    slack = ((("gbar", (t, s)), 1.0), (("g", (u.id, t, s)), -1.0))
                    constant = 0.0
                else:
                    slack = ((("g", (u.id, t, s)), -1.0),)
                    constant = float(u.capacity[s - 1][t - 1])
                pairs.append(CompPair(
                    "gen_up", (u.id, t, s), slack, constant,
                    ("gup", (u.id, t, s)), ("y_gup", (u.id, t, s)),
                    config.gen_primal, config.gen_dual))
    return tuple(pairs)


def linearize_complementarity(mb: ModelBuilder, pairs, config: BigMConfig) -> None:
    """slack <= M_primal * y and multiplier <= M_dual * (1 - y) per pair.

    With y integral exactly one side is forced to zero, so the pair's product
    vanishes; every KKT point whose slack and multiplier fit under the Ms
    survives the linearization unchanged.
    """
    for pair in pairs:
        y = mb.add_var(pair.binary_key[0], pair.binary_key[1], kind=BINARY)
        slack_row = LinExpr(dict(pair.slack_terms)).add(y, -pair.m_primal)
        mb.add_row(f"cs_{pair.family}", pair.indices, slack_row, LE,
                   -pair.slack_constant)
        mult_row = LinExpr().add(pair.mult_key, 1.0).add(y, pair.m_dual)
        mb.add_row(f"cm_{pair.family}", pair.indices, mult_row, LE, pair.m_dual)


def linearize_strategic_revenue(case: CaseData) -> dict:
    """Linear expression equal to lam_vpp * g_vpp at every integral KKT point.

    Per (t, s): sum_b lam_b D_b - sum_{u != vpp} C_u g_u
    - sum_{u != vpp} gup_u cap_u + sum_l (dlo F_lo - dup F_up).
    """
    demand = case.demand_array()
    index = case.network.bus_index()
    out = {}
    for t in range(1, case.T + 1):
        for s in range(1, case.S + 1):
            expr = LinExpr()
            for b in case.network.buses:
                d = float(demand[index[b], t - 1, s - 1])
                if d:
                    expr.add(("lam", (b, t, s)), d)
            for u in case.competitor_offers:
                expr.add(("g", (u.id, t, s)), -u.cost)
                cap = float(u.capacity[s - 1][t - 1])
                if cap:
                    expr.add(("gup", (u.id, t, s)), -cap)
            for ln in case.network.lines:
                if math.isfinite(ln.lower) and ln.lower:
                    expr.add(("dlo", (ln.id, t, s)), ln.lower)
                if math.isfinite(ln.upper) and ln.upper:
                    expr.add(("dup", (ln.id, t, s)), -ln.upper)
            out[(t, s)] = expr
    return out


def assemble_with_info(case: CaseData, config: BigMConfig | None = None,
                       strict_cvar: bool = False):
    """Build the complete MILP plus the bookkeeping verification needs."""
    case = case.validated()
    if config is None:
        config = BigMConfig.from_case(case)
    mb = ModelBuilder(case.name)
    for j in case.ess_units:
        build_ess_block(mb, j, case.T)
    for k in case.hss_units:
        build_hss_block(mb, k, case.T)
    build_bid_aggregation(mb, case)
    build_kkt_block(mb, case, config)
    pairs = complementarity_pairs(case, config)
    linearize_complementarity(mb, pairs, config)

    revenue = linearize_strategic_revenue(case)
    rec = build_rec_and_pg_block(case)
    coeff = rec["rec_price_coeff"]
    vpp_bus = case.vpp_bus
    revenue_keys = []
    for s in range(1, case.S + 1):
        rev = mb.add_var("rev", (s,), lb=-math.inf, ub=math.inf)
        revenue_keys.append(rev)
        row = LinExpr().add(rev, 1.0)
        for t in range(1, case.T + 1):
            row.add_expr(revenue[(t, s)], -1.0)
            c = float(coeff[t - 1, s - 1])
            if c:
                row.add(("lam", (vpp_bus, t, s)), -c)
        mb.add_row("revenue_def", (s,), row, EQ, 0.0)
    cvar = build_cvar_block(mb, case.probabilities(), case.risk.alpha,
                            case.risk.beta, revenue_keys, strict=strict_cvar)
    model = mb.build()
    info = AssemblyInfo(config=config, pairs=pairs,
                        revenue_keys=tuple(revenue_keys), cvar=cvar,
                        rec_price_coeff=coeff)
    return model, info


def assemble_milp(case: CaseData, config: BigMConfig | None = None) -> MilpModel:
    model, _ = assemble_with_info(case, config)
    return model
