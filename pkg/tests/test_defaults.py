"""Bundled dataset checks: fleet parameters, scenario shape, generator drift."""

from __future__ import annotations

import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from vppbid.caseio import loads_case, serialize_case
from vppbid.defaults import case_for_profile, default_case, desk_case

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="module")
def case():
    return default_case()


class TestDefaultCase:
    def test_dimensions(self, case):
        assert len(case.network.buses) == 14
        assert case.T == 24 and case.S == 5
        assert case.vpp_bus == 14
        assert case.scenarios.probabilities == (0.3, 0.25, 0.2, 0.15, 0.1)
        assert math.fsum(case.scenarios.probabilities) == 1.0

    def test_fleet_parameters(self, case):
        (ess,) = case.ess_units
        assert ess.energy_capacity == 40.0
        assert ess.charge_limit == ess.discharge_limit == 10.0
        assert ess.eta_charge == ess.eta_discharge == 0.8
        (hss,) = case.hss_units
        assert hss.tank_capacity == 2000.0
        assert hss.electrolyzer_limit == 10.0
        assert hss.fuel_cell_limit == 400.0
        assert (hss.eta_electrolyzer, hss.eta_fuel_cell) == (0.7, 0.6)
        assert hss.heat_value == 0.033

    def test_renewables_fan_is_ordered(self, case):
        capacities = {"pv1": 37.5, "wt1": 25.0}
        for unit in case.scenarios.units:
            assert unit.capacity == capacities[unit.id] and unit.bus == 14
            rows = unit.forecast_array()  # (T, S)
            assert rows.min() >= 0.0 and rows.max() <= unit.capacity
            diffs = np.diff(rows, axis=1)
            assert (diffs <= 1e-12).all(), "scenario levels must be ordered s1 >= ... >= s5"
        pv = next(u for u in case.scenarios.units if u.id == "pv1").forecast_array()
        assert pv[0].max() == 0.0 and pv[12].min() > 0.0

    def test_rated_corridors(self, case):
        limits = {ln.id: (ln.lower, ln.upper) for ln in case.network.lines if ln.limited}
        assert limits == {"9-14": (-12.0, 12.0), "13-14": (-8.0, 8.0)}

    def test_round_trip(self, case):
        assert loads_case(serialize_case(case)) == case

    def test_generator_script_matches_bundled_file(self):
        """The YAML is generated; regeneration must be drift-free."""
        script = ROOT / "scripts" / "make_default_case.py"
        bundled = ROOT / "src" / "vppbid" / "cases" / "ieee14_vpp.yaml"
        before = bundled.read_bytes()
        proc = subprocess.run([sys.executable, str(script)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert bundled.read_bytes() == before


class TestDeskCase:
    def test_shape_and_fleet(self):
        case = desk_case()
        assert case.T == 6 and case.S == 3
        assert len(case.network.buses) == 5
        assert case.vpp_bus == 5
        assert len(case.ess_units) == 1 and len(case.hss_units) == 1
        assert sum(ln.limited for ln in case.network.lines) == 1

    def test_round_trip(self):
        case = desk_case()
        assert loads_case(serialize_case(case)) == case

    def test_profile_selector(self):
        assert case_for_profile("desk").name == "desk-5bus"
        assert case_for_profile("full").name == "ieee14-vpp"
        with pytest.raises(ValueError, match="unknown profile"):
            case_for_profile("giant")
