"""Bundled problem instances: the full default case and a desk-scale profile.

``default_case`` loads cases/ieee14_vpp.yaml, the modified IEEE 14-bus dataset
generated by scripts/make_default_case.py and documented in
docs/default_case.md. ``desk_case`` is a five-bus, six-hour, three-scenario
reduction built here in code, sized so the whole assemble/solve/verify
pipeline runs in seconds with the bundled solver; it keeps the same structure
(export-limited VPP pocket, merit-order price ladder, both storage kinds).
"""

from __future__ import annotations

from importlib import resources

from .caseio import loads_case
from .data import (CaseData, EssParams, GeneratorOffer, HssParams, Line,
                   LoadProfile, Network, RenewableUnit, RiskParams, ScenarioSet)

DEFAULT_RESOURCE = "cases/ieee14_vpp.yaml"


def default_case() -> CaseData:
    """The bundled modified IEEE 14-bus instance (T=24, S=5, ESS+HSS at bus 14)."""
    text = resources.files("vppbid").joinpath(DEFAULT_RESOURCE).read_text()
    return loads_case(text, source=f"vppbid:{DEFAULT_RESOURCE}")


# Desk-scale profile: buses 1-5 of the 14-bus system at 30% load, keeping the
# mesh among buses 1-4 but attaching the VPP bus radially through one rated
# corridor, so its congestion state never depends on transit flows. Hours are
# four-hour blocks of a day, so the shapes below are coarse versions of the
# full case's.

_DESK_SHAPE = (0.70, 0.85, 1.00, 1.05, 0.95, 0.80)
_DESK_LOADS = {2: 6.5, 3: 28.3, 4: 14.3, 5: 2.3}
_DESK_SCALES = (1.1, 0.9, 0.6)
_DESK_PROBS = (0.5, 0.3, 0.2)
_PV_SHAPE = (0.0, 0.35, 0.95, 1.0, 0.45, 0.0)
_WT_SHAPE = (0.8, 0.6, 0.4, 0.5, 0.7, 0.9)


def _series(base: float, shape, scale: float = 1.0, cap: float = float("inf")) -> tuple:
    return tuple(round(min(cap, base * scale * v), 4) for v in shape)


def desk_case() -> CaseData:
    horizon = len(_DESK_SHAPE)
    network = Network(
        buses=(1, 2, 3, 4, 5),
        lines=(
            Line("1-2", 1, 2, 0.05917),
            Line("1-5", 1, 5, 0.22304, lower=-10.0, upper=10.0),
            Line("2-3", 2, 3, 0.19797),
            Line("2-4", 2, 4, 0.17632),
            Line("3-4", 3, 4, 0.17103),
        ),
        reference_bus=1)
    S = len(_DESK_PROBS)
    loads = LoadProfile(demand={bus: (_series(mw, _DESK_SHAPE),) * S
                                for bus, mw in _DESK_LOADS.items()})
    offers = (
        GeneratorOffer("G1", 1, 6.0, capacity=((30.0,) * horizon,) * S),
        GeneratorOffer("G2", 2, 12.0, capacity=((15.0,) * horizon,) * S),
        GeneratorOffer("G3", 3, 24.0, capacity=((15.0,) * horizon,) * S),
        GeneratorOffer("vpp", 5, 0.0, strategic=True),
    )
    scenarios = ScenarioSet(
        probabilities=_DESK_PROBS,
        units=(
            RenewableUnit("pv1", 5, 10.0,
                          tuple(_series(10.0, _PV_SHAPE, sc, cap=10.0)
                                for sc in _DESK_SCALES)),
            RenewableUnit("wt1", 5, 10.0,
                          tuple(_series(10.0, _WT_SHAPE, sc, cap=10.0)
                                for sc in _DESK_SCALES)),
        ))
    return CaseData(
        name="desk-5bus",
        network=network,
        offers=offers,
        loads=loads,
        scenarios=scenarios,
        ess_units=(EssParams("ess1", 5.0, 5.0, 20.0, 0.8, 0.8),),
        hss_units=(HssParams("hss1", 5.0, 200.0, 1000.0, 0.7, 0.6, 0.033),),
        risk=RiskParams(alpha=0.95, beta=0.0, rec_coupling=0.5),
        horizon=horizon,
        vpp_bus=5,
        strategic_cost=0.0).validated()


def case_for_profile(profile: str) -> CaseData:
    if profile == "full":
        return default_case()
    if profile == "desk":
        return desk_case()
    raise ValueError(f"unknown profile {profile!r}, expected 'full' or 'desk'")
