"""Upper-level blocks: ESS, HSS, renewable accounting and bid aggregation.

Builders emit variables and rows into a :class:`~vppbid.milp.ModelBuilder`;
the matching pure functions (soc step, tank step, fuel-cell conversion, bid
aggregation, scenario revenue) are used by tests and by the verification
pipeline to recompute everything outside the MILP.

Band and boundary fractions are fixed by the formulation, not parameters:
SoC stays within [0.2, 0.8] of capacity with both endpoints at 0.5; the tank
stays within [0.2, 0.8] with endpoints tied together inside [0.4, 0.6].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import CaseData, EssParams, HssParams
from .milp import BINARY, EQ, LE, LinExpr, ModelBuilder

SOC_MIN_FRAC, SOC_MAX_FRAC, SOC_BOUNDARY_FRAC = 0.2, 0.8, 0.5
TANK_MIN_FRAC, TANK_MAX_FRAC = 0.2, 0.8
TANK_ENDPOINT_MIN_FRAC, TANK_ENDPOINT_MAX_FRAC = 0.4, 0.6


# -- pure evaluation -----------------------------------------------------------

def ess_soc_step(e_prev: float, p_ch: float, p_dis: float, params: EssParams) -> float:
    """One hour of SoC accounting: charging scaled down, discharging scaled up."""
    return e_prev + params.eta_charge * p_ch - p_dis / params.eta_discharge


def hss_tank_step(h_prev: float, p_el: float, h_fc: float, params: HssParams) -> float:
    """One hour of tank accounting in kg; electrolyzer input converted via the heat value."""
    return h_prev + params.eta_electrolyzer * p_el / params.heat_value - h_fc


def fuel_cell_power(h_fc: float, params: HssParams) -> float:
    """Electric output in MW for a hydrogen draw in kg/h."""
    return params.eta_fuel_cell * params.heat_value * h_fc


def bid_quantity(p_hat_total: float, ess_ops, hss_ops, hss_params) -> float:
    """Aggregated bid: forecasts plus net ESS discharge plus net HSS output.

    ``ess_ops`` holds (p_ch, p_dis) pairs, ``hss_ops`` holds (p_el, h_fc)
    pairs aligned with ``hss_params``. The result may be negative (net buyer);
    the MILP separately constrains the bid variable to be nonnegative.
    """
    out = float(p_hat_total)
    for p_ch, p_dis in ess_ops:
        out += p_dis - p_ch
    for (p_el, h_fc), params in zip(hss_ops, hss_params):
        out += fuel_cell_power(h_fc, params) - p_el
    return out


def scenario_revenue(lmp, dispatch, rec_price, pg) -> float:
    """Sum over hours of energy revenue lambda*g plus REC revenue kappa*pg."""
    if not len(lmp) == len(dispatch) == len(rec_price) == len(pg):
        raise ValueError("hourly series must have equal length")
    return float(math.fsum(l * g + k * p for l, g, k, p in zip(lmp, dispatch, rec_price, pg)))


# -- constraint builders ---------------------------------------------------------

def build_ess_block(mb: ModelBuilder, params: EssParams, horizon: int) -> dict:
    """Charge/discharge with exclusivity binaries, SoC recursion, band and boundary.

    Per hour: p_ch <= cap * z and p_dis <= cap * (1 - z); the SoC variable is
    bounded to the operable band, hour 0 is the fixed boundary constant (no
    variable) and the final hour is pinned back to it by an equality row.
    """
    if horizon <= 0:
        raise ValueError("horizon must be >= 1")
    j = params.id
    e0 = SOC_BOUNDARY_FRAC * params.energy_capacity
    keys = {"p_ch": {}, "p_dis": {}, "z": {}, "e": {}, "e0": e0}
    for t in range(1, horizon + 1):
        keys["p_ch"][t] = mb.add_var("ess_ch", (j, t), ub=params.charge_limit)
        keys["p_dis"][t] = mb.add_var("ess_dis", (j, t), ub=params.discharge_limit)
        keys["z"][t] = mb.add_var("ess_z", (j, t), kind=BINARY)
        keys["e"][t] = mb.add_var("ess_e", (j, t),
                                  lb=SOC_MIN_FRAC * params.energy_capacity,
                                  ub=SOC_MAX_FRAC * params.energy_capacity)
    for t in range(1, horizon + 1):
        step = LinExpr().add(keys["e"][t], 1.0)
        step.add(keys["p_ch"][t], -params.eta_charge)
        step.add(keys["p_dis"][t], 1.0 / params.eta_discharge)
        if t > 1:
            step.add(keys["e"][t - 1], -1.0)
        mb.add_row("ess_soc", (j, t), step, EQ, e0 if t == 1 else 0.0)
        ch = LinExpr().add(keys["p_ch"][t], 1.0).add(keys["z"][t], -params.charge_limit)
        mb.add_row("ess_ch_excl", (j, t), ch, LE, 0.0)
        dis = LinExpr().add(keys["p_dis"][t], 1.0).add(keys["z"][t], params.discharge_limit)
        mb.add_row("ess_dis_excl", (j, t), dis, LE, params.discharge_limit)
    mb.add_row("ess_boundary", (j,), LinExpr().add(keys["e"][horizon], 1.0), EQ, e0)
    return keys


def build_hss_block(mb: ModelBuilder, params: HssParams, horizon: int) -> dict:
    """Electrolyzer/fuel cell with tank recursion; no exclusivity binary.

    Simultaneous electrolysis and fuel-cell draw is deliberately feasible. The
    initial tank level is a decision variable inside the endpoint window, tied
    to the final level so daily operation repeats.
    """
    if horizon <= 0:
        raise ValueError("horizon must be >= 1")
    k = params.id
    keys = {"p_el": {}, "h_fc": {}, "tank": {}}
    keys["tank0"] = mb.add_var("hss_tank0", (k,),
                               lb=TANK_ENDPOINT_MIN_FRAC * params.tank_capacity,
                               ub=TANK_ENDPOINT_MAX_FRAC * params.tank_capacity)
    for t in range(1, horizon + 1):
        keys["p_el"][t] = mb.add_var("hss_el", (k, t), ub=params.electrolyzer_limit)
        keys["h_fc"][t] = mb.add_var("hss_fc", (k, t), ub=params.fuel_cell_limit)
        keys["tank"][t] = mb.add_var("hss_tank", (k, t),
                                     lb=TANK_MIN_FRAC * params.tank_capacity,
                                     ub=TANK_MAX_FRAC * params.tank_capacity)
    for t in range(1, horizon + 1):
        step = LinExpr().add(keys["tank"][t], 1.0)
        step.add(keys["p_el"][t], -params.eta_electrolyzer / params.heat_value)
        step.add(keys["h_fc"][t], 1.0)
        step.add(keys["tank"][t - 1] if t > 1 else keys["tank0"], -1.0)
        mb.add_row("hss_tank_step", (k, t), step, EQ, 0.0)
    tie = LinExpr().add(keys["tank"][horizon], 1.0).add(keys["tank0"], -1.0)
    mb.add_row("hss_endpoint", (k,), tie, EQ, 0.0)
    return keys


def build_bid_aggregation(mb: ModelBuilder, case: CaseData) -> dict:
    """Bid variables per (t, s) defined from forecasts and storage actions.

    The bid enters the lower level as the strategic unit's capacity; it is
    bounded below by zero (net buying is out of scope) and above by the static
    maximum the fleet can deliver.
    """
    p_hat = case.forecast_total()
    cap = case.max_bid()
    gbar = {}
    for t in range(1, case.T + 1):
        for s in range(1, case.S + 1):
            key = mb.add_var("gbar", (t, s), lb=0.0, ub=cap)
            gbar[(t, s)] = key
            expr = LinExpr().add(key, 1.0)
            for j in case.ess_units:
                expr.add(("ess_dis", (j.id, t)), -1.0)
                expr.add(("ess_ch", (j.id, t)), 1.0)
            for k in case.hss_units:
                expr.add(("hss_fc", (k.id, t)), -k.eta_fuel_cell * k.heat_value)
                expr.add(("hss_el", (k.id, t)), 1.0)
            mb.add_row("bid_def", (t, s), expr, EQ, float(p_hat[t - 1, s - 1]))
    return gbar


def build_rec_and_pg_block(case: CaseData) -> dict:
    """Renewable accounting with pg fixed at the forecast.

    pg appears only in the REC revenue with a nonnegative price coefficient
    and not in the bid, so pg = p_hat is optimal; fixing it keeps the
    objective linear. Returns the fixed pg series and the coefficient that
    multiplies the VPP nodal price in the REC revenue (rec_coupling * total
    forecast, per (t, s)). The nonnegative-price assumption behind this is
    audited at every solution by the verify module.
    """
    pg = {unit.id: unit.forecast_array() for unit in case.scenarios.units}
    return {"pg": pg, "rec_price_coeff": case.risk.rec_coupling * case.forecast_total()}


# -- solution extraction -----------------------------------------------------------

@dataclass(frozen=True)
class VppSchedule:
    """Physical decisions of one solution, in plain arrays (hour-major)."""

    horizon: int
    ess: dict    # id -> {"p_ch","p_dis","z": (T,), "e": (T+1,) with hour-0 first}
    hss: dict    # id -> {"p_el","h_fc": (T,), "tank": (T+1,) with hour-0 first}
    pg: dict     # renewable unit id -> (T, S)
    bid: np.ndarray  # (T, S)


def extract_schedule(case: CaseData, model, x) -> VppSchedule:
    T, S = case.T, case.S
    hours = range(1, T + 1)
    ess = {}
    for j in case.ess_units:
        e0 = SOC_BOUNDARY_FRAC * j.energy_capacity
        ess[j.id] = {
            "p_ch": np.array([model.value(x, "ess_ch", (j.id, t)) for t in hours]),
            "p_dis": np.array([model.value(x, "ess_dis", (j.id, t)) for t in hours]),
            "z": np.array([round(model.value(x, "ess_z", (j.id, t))) for t in hours]),
            "e": np.array([e0] + [model.value(x, "ess_e", (j.id, t)) for t in hours]),
        }
    hss = {}
    for k in case.hss_units:
        tank0 = model.value(x, "hss_tank0", (k.id,))
        hss[k.id] = {
            "p_el": np.array([model.value(x, "hss_el", (k.id, t)) for t in hours]),
            "h_fc": np.array([model.value(x, "hss_fc", (k.id, t)) for t in hours]),
            "tank": np.array([tank0] + [model.value(x, "hss_tank", (k.id, t)) for t in hours]),
        }
    bid = np.array([[model.value(x, "gbar", (t, s)) for s in range(1, S + 1)] for t in hours])
    return VppSchedule(horizon=T, ess=ess, hss=hss,
                       pg={u.id: u.forecast_array() for u in case.scenarios.units},
                       bid=bid)
