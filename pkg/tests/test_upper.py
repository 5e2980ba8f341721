"""Device block and pure-evaluation tests.

Derived values were computed by hand from the nameplate parameters
(ESS: 10 MW / 40 MWh at 0.8 efficiency both ways; HSS: 10 MW electrolyzer,
400 kg/h fuel cell, 2000 kg tank, 0.7 / 0.6 efficiencies, 0.033 MWh/kg):
the net-zero tank fixed point solves eta_el * p_el / M = h_fc, i.e.
0.7 * 10 / 0.033 = 212.1212 kg/h, and inverting the fuel-cell conversion
for 10 MW gives 10 / (0.6 * 0.033) = 505.05 kg/h.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from vppbid.data import EssParams, HssParams
from vppbid.milp import BINARY, LinExpr, ModelBuilder
from vppbid.solve import is_feasible, solve_lp, solve_milp
from vppbid.upper import (bid_quantity, build_bid_aggregation, build_ess_block,
                          build_hss_block, build_rec_and_pg_block,
                          ess_soc_step, fuel_cell_power, hss_tank_step,
                          scenario_revenue)

from util_cases import series, two_bus_case

ESS = EssParams("ess1", charge_limit=10.0, discharge_limit=10.0,
                energy_capacity=40.0, eta_charge=0.8, eta_discharge=0.8)
HSS = HssParams("hss1", electrolyzer_limit=10.0, fuel_cell_limit=400.0,
                tank_capacity=2000.0, eta_electrolyzer=0.7, eta_fuel_cell=0.6,
                heat_value=0.033)


def test_ess_soc_step_values():
    assert ess_soc_step(20.0, 10.0, 0.0, ESS) == pytest.approx(28.0, abs=1e-12)
    assert ess_soc_step(20.0, 0.0, 8.0, ESS) == pytest.approx(10.0, abs=1e-12)
    assert ess_soc_step(20.0, 0.0, 0.0, ESS) == 20.0


def test_hss_tank_step_values():
    assert hss_tank_step(1000.0, 10.0, 0.0, HSS) == pytest.approx(1212.12, abs=0.01)
    assert hss_tank_step(1000.0, 0.0, 400.0, HSS) == pytest.approx(600.0, abs=1e-12)
    fixed_point = HSS.eta_electrolyzer * 10.0 / HSS.heat_value
    assert fixed_point == pytest.approx(212.1212, abs=1e-4)
    assert hss_tank_step(1000.0, 10.0, fixed_point, HSS) == pytest.approx(1000.0, abs=1e-9)


def test_fuel_cell_power_values():
    assert fuel_cell_power(400.0, HSS) == pytest.approx(7.92, abs=1e-12)
    assert fuel_cell_power(0.0, HSS) == 0.0
    assert fuel_cell_power(505.05, HSS) == pytest.approx(10.0, abs=0.01)


def test_bid_quantity_values():
    assert bid_quantity(15.0, [(0.0, 10.0)], [(0.0, 400.0)], [HSS]) == pytest.approx(32.92, abs=1e-9)
    assert bid_quantity(25.0, [(0.0, 0.0)], [(0.0, 0.0)], [HSS]) == 25.0
    assert bid_quantity(5.0, [(10.0, 0.0)], [(10.0, 0.0)], [HSS]) == pytest.approx(-15.0, abs=1e-12)


def test_scenario_revenue():
    assert scenario_revenue([50.0], [30.0], [25.0], [20.0]) == pytest.approx(2000.0)
    assert scenario_revenue([0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]) == 0.0
    one = scenario_revenue([50.0], [30.0], [25.0], [20.0])
    two = scenario_revenue([40.0], [10.0], [30.0], [5.0])
    both = scenario_revenue([50.0, 40.0], [30.0, 10.0], [25.0, 30.0], [20.0, 5.0])
    assert both == pytest.approx(one + two)
    with pytest.raises(ValueError):
        scenario_revenue([1.0], [1.0, 2.0], [1.0], [1.0])


def test_ess_block_shape():
    mb = ModelBuilder("ess")
    build_ess_block(mb, ESS, 24)
    model = mb.build()
    assert model.num_binaries == 24
    assert model.num_continuous == 72
    assert model.stats()["rows_by_family"] == {
        "ess_boundary": 1, "ess_ch_excl": 24, "ess_dis_excl": 24, "ess_soc": 24,
    }
    # hour-0 SoC enters as the constant 0.5 * 40 on the first recursion row
    first = next(r for r in model.rows if r.family == "ess_soc" and r.indices == ("ess1", 1))
    assert first.rhs == 20.0
    boundary = next(r for r in model.rows if r.family == "ess_boundary")
    assert boundary.rhs == 20.0
    for t in range(1, 25):
        lb, ub = model.variables[model.var_index("ess_e", ("ess1", t))].lb, \
                 model.variables[model.var_index("ess_e", ("ess1", t))].ub
        assert (lb, ub) == (8.0, 32.0)
    with pytest.raises(ValueError):
        build_ess_block(ModelBuilder("bad"), ESS, 0)


def test_ess_zero_charge_limit():
    mb = ModelBuilder("ess0")
    params = EssParams("e", 0.0, 10.0, 40.0, 0.8, 0.8)
    keys = build_ess_block(mb, params, 4)
    model = mb.build()
    for t in range(1, 5):
        v = model.variables[model.var_index("ess_ch", ("e", t))]
        assert v.ub == 0.0


def test_ess_exclusivity_and_telescoping_at_optimum():
    """Push toward simultaneous charge and discharge; binaries must forbid it."""
    mb = ModelBuilder("ess-opt")
    keys = build_ess_block(mb, ESS, 6)
    obj = LinExpr()
    for t in range(1, 7):
        obj.add(keys["p_ch"][t], 1.0).add(keys["p_dis"][t], 1.0)
    mb.add_objective(obj)
    model = mb.build()
    sol = solve_milp(model)
    assert sol.status == "optimal"
    p_ch = [model.value(sol.x, "ess_ch", ("ess1", t)) for t in range(1, 7)]
    p_dis = [model.value(sol.x, "ess_dis", ("ess1", t)) for t in range(1, 7)]
    assert all(c * d <= 1e-6 for c, d in zip(p_ch, p_dis))
    net = math.fsum(ESS.eta_charge * c - d / ESS.eta_discharge for c, d in zip(p_ch, p_dis))
    assert abs(net) < 1e-9  # boundary pins e_T = e_0
    soc = 20.0
    for t in range(1, 7):
        soc = ess_soc_step(soc, p_ch[t - 1], p_dis[t - 1], ESS)
        assert soc == pytest.approx(model.value(sol.x, "ess_e", ("ess1", t)), abs=1e-7)
        assert 8.0 - 1e-7 <= soc <= 32.0 + 1e-7


def test_hss_block_shape_and_bounds():
    mb = ModelBuilder("hss")
    build_hss_block(mb, HSS, 24)
    model = mb.build()
    assert model.num_binaries == 0
    assert model.num_continuous == 3 * 24 + 1
    assert model.stats()["rows_by_family"] == {"hss_endpoint": 1, "hss_tank_step": 24}
    el = model.variables[model.var_index("hss_el", ("hss1", 1))]
    fc = model.variables[model.var_index("hss_fc", ("hss1", 1))]
    tank = model.variables[model.var_index("hss_tank", ("hss1", 1))]
    tank0 = model.variables[model.var_index("hss_tank0", ("hss1",))]
    assert (el.lb, el.ub) == (0.0, 10.0)
    assert (fc.lb, fc.ub) == (0.0, 400.0)
    assert (tank.lb, tank.ub) == (400.0, 1600.0)
    assert (tank0.lb, tank0.ub) == (800.0, 1200.0)


def test_hss_concurrent_operation_is_feasible():
    """The net-zero fixed point (both devices running, tank flat) is feasible."""
    mb = ModelBuilder("hss-conc")
    build_hss_block(mb, HSS, 4)
    model = mb.build()
    fixed_point = HSS.eta_electrolyzer * 10.0 / HSS.heat_value
    x = np.zeros(len(model.variables))
    x[model.var_index("hss_tank0", ("hss1",))] = 1000.0
    for t in range(1, 5):
        x[model.var_index("hss_el", ("hss1", t))] = 10.0
        x[model.var_index("hss_fc", ("hss1", t))] = fixed_point
        x[model.var_index("hss_tank", ("hss1", t))] = 1000.0
    assert is_feasible(model, x, tol=1e-9)


def test_hss_degenerate_device():
    mb = ModelBuilder("hss-deg")
    params = HssParams("h", 0.0, 0.0, 2000.0, 0.7, 0.6, 0.033)
    keys = build_hss_block(mb, params, 5)
    mb.add_objective(LinExpr().add(keys["tank"][5], 1.0))
    model = mb.build()
    sol = solve_lp(model)
    assert sol.status == "optimal"
    levels = [model.value(sol.x, "hss_tank0", ("h",))]
    levels += [model.value(sol.x, "hss_tank", ("h", t)) for t in range(1, 6)]
    assert np.ptp(levels) < 1e-9
    assert 800.0 - 1e-9 <= levels[0] <= 1200.0 + 1e-9


def test_bid_aggregation_rows():
    case = two_bus_case()
    mb = ModelBuilder("bid")
    for j in (ESS,):
        build_ess_block(mb, j, case.T)
    for k in (HSS,):
        build_hss_block(mb, k, case.T)
    from dataclasses import replace
    case = replace(case, ess_units=(ESS,), hss_units=(HSS,)).validated()
    gbar = build_bid_aggregation(mb, case)
    model = mb.build()
    assert model.count_rows("bid_def") == case.T * case.S
    assert len(gbar) == case.T * case.S
    v = model.variables[model.var_index("gbar", (1, 1))]
    assert v.lb == 0.0
    assert v.ub == pytest.approx(case.max_bid())
    row = next(r for r in model.rows if r.family == "bid_def")
    coefs = {model.variables[pos].symbol: c for pos, c in row.coeffs}
    assert coefs["gbar"] == 1.0
    assert coefs["ess_dis"] == -1.0 and coefs["ess_ch"] == 1.0
    assert coefs["hss_fc"] == pytest.approx(-0.6 * 0.033)
    assert coefs["hss_el"] == 1.0


def test_rec_and_pg_block():
    case = two_bus_case()
    from dataclasses import replace
    from vppbid.data import RenewableUnit, ScenarioSet
    unit = RenewableUnit("pv", case.vpp_bus, 20.0, series([[12.0]]))
    case = replace(case, scenarios=ScenarioSet((1.0,), (unit,))).validated()
    block = build_rec_and_pg_block(case)
    assert set(block["pg"]) == {"pv"}
    assert block["pg"]["pv"][0, 0] == 12.0
    assert block["rec_price_coeff"][0, 0] == pytest.approx(0.5 * 12.0)
