#!/usr/bin/env python3
"""Generate the bundled default case from the IEEE 14-bus tables.

The network topology, branch reactances and snapshot bus loads come straight
from scripts/ieee14.cdf via the common-data-format converter. Everything the
standard tables do not carry is set here and documented in
docs/default_case.md: the hourly load shaping, the thermal offer stack, the
two line ratings that bound the VPP's export pocket around bus 14, the
scenario forecast fan, the storage fleet and the risk block.

Regenerating must reproduce src/vppbid/cases/ieee14_vpp.yaml byte for byte;
tests/test_defaults.py enforces that, so edit this script (not the YAML) and
rerun it when changing the dataset.
"""

from __future__ import annotations

import math
import pathlib

import yaml

from vppbid.caseio import convert_ieee_cdf, document_to_case

ROOT = pathlib.Path(__file__).resolve().parents[1]
CDF = ROOT / "scripts" / "ieee14.cdf"
OUT = ROOT / "src" / "vppbid" / "cases" / "ieee14_vpp.yaml"

HORIZON = 24
VPP_BUS = 14

# Diurnal demand shape applied to every bus's snapshot load (quiet night,
# morning ramp, midday plateau, evening peak at hour 20).
HOURLY_SHAPE = [0.62, 0.60, 0.58, 0.58, 0.60, 0.66, 0.78, 0.88,
                0.95, 0.99, 1.00, 0.99, 0.97, 0.96, 0.96, 0.97,
                1.03, 1.13, 1.20, 1.21, 1.17, 1.06, 0.88, 0.74]

# Ratings for the two corridors feeding the VPP bus; everything else unrated.
# Sized so high-output scenarios overrun the pocket's 20 MW export headroom
# around midday unless the fleet absorbs the excess.
LINE_LIMITS = {"9-14": 12.0, "13-14": 8.0}

# Thermal offer stack: (id, bus, $/MWh, MW). Merit order sets the price ladder
# the VPP's withholding climbs: G1 alone carries the night, G2 tops up the
# midday plateau, G3 prices the evening peak. P1 is a local peaker at the VPP
# bus; it never runs in merit, but it caps the nodal price whenever the
# corridors saturate, so scarcity at the pocket is priced rather than open.
THERMAL_OFFERS = [
    ("G1", 1, 6.0, 180.0),
    ("G2", 2, 10.0, 80.0),
    ("G3", 3, 17.0, 120.0),
    ("P1", 14, 60.0, 20.0),
]

PV_CAPACITY = 37.5
WT_CAPACITY = 25.0

# Scenario fan: output levels ordered s1 >= ... >= s5, highest level most likely.
SCENARIO_SCALES = [1.1, 1.0, 0.85, 0.7, 0.55]
PROBABILITIES = [0.3, 0.25, 0.2, 0.15, 0.1]

ESS = {"id": "ess1", "charge_limit": 10.0, "discharge_limit": 10.0,
       "energy_capacity": 40.0, "eta_charge": 0.8, "eta_discharge": 0.8}
HSS = {"id": "hss1", "electrolyzer_limit": 10.0, "fuel_cell_limit": 400.0,
       "tank_capacity": 2000.0, "eta_electrolyzer": 0.7, "eta_fuel_cell": 0.6,
       "heat_value": 0.033}

RISK = {"alpha": 0.95, "beta": 0.0, "rec_coupling": 0.5}


def pv_shape(t: int) -> float:
    """Bell over daylight hours, zero at night, peak around hour 12."""
    return max(0.0, math.sin((t - 5.0) / 14.0 * math.pi))


def wt_shape(t: int) -> float:
    """Fluctuating wind, strongest overnight, trough in the afternoon."""
    return 0.5 + 0.3 * math.cos(2.0 * math.pi * t / 24.0)


def forecast_rows(capacity: float, shape) -> list:
    return [[round(min(capacity, capacity * scale * shape(t)), 4)
             for t in range(HORIZON)]
            for scale in SCENARIO_SCALES]


def build_document() -> dict:
    doc = convert_ieee_cdf(CDF.read_text(), name="ieee14-vpp")
    for entry in doc["network"]["lines"]:
        if entry["id"] in LINE_LIMITS:
            entry["limit"] = LINE_LIMITS[entry["id"]]
    for entry in doc["loads"]:
        snapshot = entry["demand"]
        entry["demand"] = [round(snapshot * h, 4) for h in HOURLY_SHAPE]
    doc["horizon"] = HORIZON
    doc["offers"] = ([{"id": i, "bus": b, "cost": c, "capacity": cap}
                      for i, b, c, cap in THERMAL_OFFERS]
                     + [{"id": "vpp", "bus": VPP_BUS, "cost": 0.0, "strategic": True}])
    doc["scenarios"] = {
        "probabilities": PROBABILITIES,
        "renewables": [
            {"id": "pv1", "bus": VPP_BUS, "capacity": PV_CAPACITY,
             "forecasts": forecast_rows(PV_CAPACITY, pv_shape)},
            {"id": "wt1", "bus": VPP_BUS, "capacity": WT_CAPACITY,
             "forecasts": forecast_rows(WT_CAPACITY, wt_shape)},
        ],
    }
    doc["ders"] = {"ess": [dict(ESS)], "hss": [dict(HSS)]}
    doc["risk"] = dict(RISK)
    order = ["name", "horizon", "network", "offers", "loads", "scenarios", "ders", "risk"]
    return {key: doc[key] for key in order}


def main() -> None:
    doc = build_document()
    case = document_to_case(doc, source="make_default_case")
    assert case.T == HORIZON and case.S == len(PROBABILITIES)
    text = yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=120)
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(text)
    print(f"wrote {OUT} ({case.name}: {len(case.network.buses)} buses, "
          f"T={case.T}, S={case.S})")


if __name__ == "__main__":
    main()
