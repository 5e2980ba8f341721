"""Domain types for the bidding problem: network, offers, loads, scenarios, DERs.

Everything is a frozen dataclass built on tuples, so a loaded case is immutable
and safe to share across threads. Numeric series are stored scenario-major:
``values[s][t]`` for scenario index ``s`` (0-based) and hour ``t`` (0-based,
representing hours 1..T of the operating day).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

PROB_TOL = 1e-12


class CaseValidationError(ValueError):
    """Raised with the complete list of violated invariants, not just the first."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("case validation failed:\n" + "\n".join(f"  - {e}" for e in errors))


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: int
    to_bus: int
    reactance: float          # p.u. on the network's MVA base
    lower: float = -math.inf  # MW
    upper: float = math.inf   # MW

    @property
    def limited(self) -> bool:
        return math.isfinite(self.lower) or math.isfinite(self.upper)


@dataclass(frozen=True)
class Network:
    buses: tuple
    lines: tuple
    reference_bus: int
    base_mva: float = 100.0

    def bus_index(self) -> dict:
        return {b: i for i, b in enumerate(self.buses)}

    def reactance_mw(self, line: Line) -> float:
        """Reactance with the MVA base absorbed, so flow = angle diff / x is in MW."""
        return line.reactance / self.base_mva

    def validate(self) -> list[str]:
        errors = []
        if len(set(self.buses)) != len(self.buses):
            errors.append("Network: duplicate bus ids")
        if self.reference_bus not in self.buses:
            errors.append(f"Network: reference bus {self.reference_bus} not in buses")
        if self.base_mva <= 0:
            errors.append("Network: base_mva must be positive")
        seen = set()
        for ln in self.lines:
            if ln.id in seen:
                errors.append(f"Network: duplicate line id {ln.id}")
            seen.add(ln.id)
            if ln.from_bus not in self.buses or ln.to_bus not in self.buses:
                errors.append(f"Network: line {ln.id} endpoint not in buses")
            if ln.from_bus == ln.to_bus:
                errors.append(f"Network: line {ln.id} is a self-loop")
            if not ln.reactance > 0:
                errors.append(f"Network: line {ln.id} reactance must be > 0")
            if not (ln.lower <= 0.0 <= ln.upper):
                errors.append(f"Network: line {ln.id} flow bounds must satisfy lower <= 0 <= upper")
        if not errors and len(self.buses) > 1:
            adjacency: dict = {b: set() for b in self.buses}
            for ln in self.lines:
                adjacency[ln.from_bus].add(ln.to_bus)
                adjacency[ln.to_bus].add(ln.from_bus)
            reached = {self.buses[0]}
            frontier = [self.buses[0]]
            while frontier:
                nxt = frontier.pop()
                for nb in adjacency[nxt]:
                    if nb not in reached:
                        reached.add(nb)
                        frontier.append(nb)
            if reached != set(self.buses):
                missing = sorted(set(self.buses) - reached)
                errors.append(f"Network: graph is not connected (unreachable buses {missing})")
        return errors


@dataclass(frozen=True)
class GeneratorOffer:
    id: str
    bus: int
    cost: float                  # $/MWh
    capacity: tuple | None = None  # capacity[s][t] in MW; None only for the strategic unit
    strategic: bool = False

    def capacity_array(self) -> np.ndarray:
        """(T, S) array of offered capacity for a non-strategic unit."""
        if self.capacity is None:
            raise ValueError(f"offer {self.id}: strategic capacity is set at solve time")
        return np.asarray(self.capacity, dtype=float).T

    def validate(self, horizon: int, num_scenarios: int) -> list[str]:
        errors = []
        if self.cost < 0:
            errors.append(f"GeneratorOffer {self.id}: cost must be >= 0")
        if self.strategic:
            if self.capacity is not None:
                errors.append(f"GeneratorOffer {self.id}: strategic unit must not carry a capacity")
        else:
            if self.capacity is None:
                errors.append(f"GeneratorOffer {self.id}: missing capacity")
            else:
                if len(self.capacity) != num_scenarios or any(len(row) != horizon for row in self.capacity):
                    errors.append(f"GeneratorOffer {self.id}: capacity shape must be ({num_scenarios}, {horizon})")
                elif any(v < 0 for row in self.capacity for v in row):
                    errors.append(f"GeneratorOffer {self.id}: capacity must be >= 0")
        return errors


@dataclass(frozen=True)
class LoadProfile:
    """Demand per bus, scenario and hour; buses absent from the map have zero load."""

    demand: dict  # bus id -> tuple[S] of tuple[T], MW

    def array(self, buses: tuple, horizon: int, num_scenarios: int) -> np.ndarray:
        out = np.zeros((len(buses), horizon, num_scenarios))
        index = {b: i for i, b in enumerate(buses)}
        for bus, per_scenario in self.demand.items():
            out[index[bus]] = np.asarray(per_scenario, dtype=float).T
        return out

    def validate(self, buses: tuple, horizon: int, num_scenarios: int) -> list[str]:
        errors = []
        for bus, per_scenario in self.demand.items():
            if bus not in buses:
                errors.append(f"LoadProfile: bus {bus} not in network")
                continue
            if len(per_scenario) != num_scenarios or any(len(row) != horizon for row in per_scenario):
                errors.append(f"LoadProfile: bus {bus} demand shape must be ({num_scenarios}, {horizon})")
            elif any(v < 0 for row in per_scenario for v in row):
                errors.append(f"LoadProfile: bus {bus} demand must be >= 0")
        return errors


@dataclass(frozen=True)
class RenewableUnit:
    id: str
    bus: int
    capacity: float            # installed MW
    forecasts: tuple           # forecasts[s][t] in MW

    def forecast_array(self) -> np.ndarray:
        return np.asarray(self.forecasts, dtype=float).T  # (T, S)


@dataclass(frozen=True)
class ScenarioSet:
    probabilities: tuple
    units: tuple  # RenewableUnit

    @property
    def size(self) -> int:
        return len(self.probabilities)

    def validate(self, horizon: int) -> list[str]:
        errors = []
        if not self.probabilities:
            errors.append("ScenarioSet: at least one scenario is required")
            return errors
        total = math.fsum(self.probabilities)
        if abs(total - 1.0) > PROB_TOL:
            errors.append(f"ScenarioSet: probabilities sum to {total!r}, expected 1.0")
        if any(w <= 0 for w in self.probabilities):
            errors.append("ScenarioSet: every probability must be > 0")
        seen = set()
        for unit in self.units:
            if unit.id in seen:
                errors.append(f"ScenarioSet: duplicate renewable unit id {unit.id}")
            seen.add(unit.id)
            if unit.capacity < 0:
                errors.append(f"ScenarioSet: unit {unit.id} capacity must be >= 0")
            if len(unit.forecasts) != self.size or any(len(row) != horizon for row in unit.forecasts):
                errors.append(f"ScenarioSet: unit {unit.id} forecasts shape must be ({self.size}, {horizon})")
            elif any(not 0 <= v <= unit.capacity + 1e-9 for row in unit.forecasts for v in row):
                errors.append(f"ScenarioSet: unit {unit.id} forecasts must lie in [0, capacity]")
        return errors


@dataclass(frozen=True)
class EssParams:
    id: str
    charge_limit: float       # MW
    discharge_limit: float    # MW
    energy_capacity: float    # MWh
    eta_charge: float
    eta_discharge: float

    def validate(self) -> list[str]:
        errors = []
        if min(self.charge_limit, self.discharge_limit, self.energy_capacity) < 0:
            errors.append(f"EssParams {self.id}: limits must be >= 0")
        if not (0 < self.eta_charge <= 1 and 0 < self.eta_discharge <= 1):
            errors.append(f"EssParams {self.id}: efficiencies must lie in (0, 1]")
        return errors


@dataclass(frozen=True)
class HssParams:
    id: str
    electrolyzer_limit: float  # MW consumed
    fuel_cell_limit: float     # kg/h of hydrogen
    tank_capacity: float       # kg
    eta_electrolyzer: float
    eta_fuel_cell: float
    heat_value: float          # MWh per kg of hydrogen

    def validate(self) -> list[str]:
        errors = []
        if min(self.electrolyzer_limit, self.fuel_cell_limit, self.tank_capacity) < 0:
            errors.append(f"HssParams {self.id}: limits must be >= 0")
        if not (0 < self.eta_electrolyzer <= 1 and 0 < self.eta_fuel_cell <= 1):
            errors.append(f"HssParams {self.id}: efficiencies must lie in (0, 1]")
        if not self.heat_value > 0:
            errors.append(f"HssParams {self.id}: heat value must be > 0")
        return errors


@dataclass(frozen=True)
class RiskParams:
    alpha: float = 0.95
    beta: float = 0.0
    rec_coupling: float = 0.5  # REC price as a fraction of the nodal price

    def validate(self) -> list[str]:
        errors = []
        if not 0 < self.alpha < 1:
            errors.append("RiskParams: alpha must lie in (0, 1)")
        if self.beta < 0:
            errors.append("RiskParams: beta must be >= 0")
        if self.rec_coupling < 0:
            errors.append("RiskParams: rec_coupling must be >= 0")
        return errors


@dataclass(frozen=True)
class CaseData:
    name: str
    network: Network
    offers: tuple              # GeneratorOffer
    loads: LoadProfile
    scenarios: ScenarioSet
    ess_units: tuple           # EssParams
    hss_units: tuple           # HssParams
    risk: RiskParams
    horizon: int
    vpp_bus: int
    strategic_cost: float = 0.0  # offer cost of the aggregated strategic unit

    # -- dimensions ----------------------------------------------------------

    @property
    def T(self) -> int:
        return self.horizon

    @property
    def S(self) -> int:
        return self.scenarios.size

    # -- accessors -----------------------------------------------------------

    @property
    def strategic_offer(self) -> GeneratorOffer:
        return next(o for o in self.offers if o.strategic)

    @property
    def competitor_offers(self) -> tuple:
        return tuple(o for o in self.offers if not o.strategic)

    def probabilities(self) -> np.ndarray:
        return np.asarray(self.scenarios.probabilities, dtype=float)

    def demand_array(self) -> np.ndarray:
        """(B, T, S) demand in MW."""
        return self.loads.array(self.network.buses, self.horizon, self.S)

    def forecast_total(self) -> np.ndarray:
        """(T, S) total renewable forecast of the VPP's units in MW."""
        total = np.zeros((self.horizon, self.S))
        for unit in self.scenarios.units:
            total += unit.forecast_array()
        return total

    def max_bid(self) -> float:
        """Static upper bound on the aggregated bid quantity."""
        out = float(self.forecast_total().max(initial=0.0))
        out += sum(j.discharge_limit for j in self.ess_units)
        out += sum(k.eta_fuel_cell * k.heat_value * k.fuel_cell_limit for k in self.hss_units)
        return out

    def validate(self) -> list[str]:
        errors = []
        errors += self.network.validate()
        if self.horizon <= 0:
            errors.append("CaseData: horizon must be >= 1")
        if self.vpp_bus not in self.network.buses:
            errors.append(f"CaseData: VPP bus {self.vpp_bus} not in network")
        strategic = [o for o in self.offers if o.strategic]
        if len(strategic) != 1:
            errors.append(f"CaseData: exactly one strategic offer required, found {len(strategic)}")
        elif strategic[0].bus != self.vpp_bus:
            errors.append(f"CaseData: strategic offer sits at bus {strategic[0].bus}, "
                          f"but the VPP bus is {self.vpp_bus}")
        seen = set()
        for offer in self.offers:
            if offer.id in seen:
                errors.append(f"CaseData: duplicate offer id {offer.id}")
            seen.add(offer.id)
            if offer.bus not in self.network.buses:
                errors.append(f"GeneratorOffer {offer.id}: bus {offer.bus} not in network")
            errors += offer.validate(self.horizon, self.S)
        errors += self.loads.validate(self.network.buses, self.horizon, self.S)
        errors += self.scenarios.validate(self.horizon)
        for unit in self.scenarios.units:
            if unit.bus not in self.network.buses:
                errors.append(f"RenewableUnit {unit.id}: bus {unit.bus} not in network")
        for j in self.ess_units:
            errors += j.validate()
        for k in self.hss_units:
            errors += k.validate()
        errors += self.risk.validate()
        if self.strategic_cost < 0:
            errors.append("CaseData: strategic offer cost must be >= 0")
        return errors

    def validated(self) -> "CaseData":
        errors = self.validate()
        if errors:
            raise CaseValidationError(errors)
        return self


# -- case rewrites used by the experiment harness ------------------------------

PORTFOLIOS = ("pv_wt", "pv_wt_ess", "pv_wt_hss", "pv_wt_ess_hss")


def with_portfolio(case: CaseData, portfolio: str) -> CaseData:
    """Restrict the case's storage fleet to the requested portfolio."""
    if portfolio not in PORTFOLIOS:
        raise ValueError(f"unknown portfolio {portfolio!r}, expected one of {PORTFOLIOS}")
    ess = case.ess_units if "ess" in portfolio.split("_") else ()
    hss = case.hss_units if "hss" in portfolio.split("_") else ()
    if "ess" in portfolio.split("_") and not ess:
        raise ValueError(f"portfolio {portfolio} requires an ESS but the case defines none")
    if "hss" in portfolio.split("_") and not hss:
        raise ValueError(f"portfolio {portfolio} requires an HSS but the case defines none")
    return replace(case, ess_units=ess, hss_units=hss)


def with_tank_scale(case: CaseData, scale: float) -> CaseData:
    """Scale every hydrogen tank; band and endpoint fractions scale with it."""
    if scale <= 0:
        raise ValueError("tank scale must be > 0")
    hss = tuple(replace(k, tank_capacity=k.tank_capacity * scale) for k in case.hss_units)
    return replace(case, hss_units=hss)


def with_risk(case: CaseData, alpha: float | None = None, beta: float | None = None) -> CaseData:
    risk = case.risk
    if alpha is not None:
        risk = replace(risk, alpha=alpha)
    if beta is not None:
        risk = replace(risk, beta=beta)
    return replace(case, risk=risk).validated()
