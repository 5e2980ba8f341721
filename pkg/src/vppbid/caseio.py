"""Case file reading/writing and IEEE common-data-format conversion.

A case document is YAML with sections ``network``, ``offers``, ``loads``,
``scenarios``, ``ders`` and ``risk`` plus top-level ``name`` and ``horizon``;
the schema is documented normatively in docs/case_format.md. Structural
problems (wrong types, unknown or missing keys) raise :class:`CaseFormatError`
carrying every problem with its field path; semantic problems are delegated to
:meth:`CaseData.validated`, which likewise aggregates all violations.

Time/scenario tables accept three spellings -- a scalar (constant), a list of
T values (same in every scenario), or S lists of T values -- and are always
written back in the full form, so serialize/load round-trips to an identical
CaseData.

The converter at the bottom reads the classic IEEE common data format (bus and
branch cards) and emits the ``network`` section plus a snapshot load table,
which callers merge with offers, scenarios and DER data of their own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import yaml

from .data import (CaseData, EssParams, GeneratorOffer, HssParams, Line,
                   LoadProfile, Network, RenewableUnit, RiskParams, ScenarioSet)


class CaseFormatError(ValueError):
    """Structural problems in a case document, all collected before raising."""

    def __init__(self, source: str, errors: list):
        self.source = source
        self.errors = list(errors)
        super().__init__(f"invalid case document {source}:\n"
                         + "\n".join(f"  - {e}" for e in self.errors))


class _Walk:
    """Collects 'path: problem' entries while typed getters keep extracting."""

    def __init__(self):
        self.errors = []

    def fail(self, path, message):
        self.errors.append(f"{path}: {message}")

    def mapping(self, obj, path, required, optional=()):
        if not isinstance(obj, dict):
            self.fail(path, f"expected a mapping, got {type(obj).__name__}")
            return None
        for key in required:
            if key not in obj:
                self.fail(path, f"missing required key {key!r}")
        for key in obj:
            if key not in required and key not in optional:
                self.fail(path, f"unknown key {key!r}")
        return obj

    def number(self, obj, path, default=0.0):
        if isinstance(obj, (int, float)) and not isinstance(obj, bool):
            return float(obj)
        self.fail(path, f"expected a number, got {obj!r}")
        return default

    def integer(self, obj, path, default=0):
        if isinstance(obj, int) and not isinstance(obj, bool):
            return obj
        self.fail(path, f"expected an integer, got {obj!r}")
        return default

    def string(self, obj, path, default=""):
        if isinstance(obj, str):
            return obj
        self.fail(path, f"expected a string, got {obj!r}")
        return default

    def bus_id(self, obj, path):
        if isinstance(obj, (int, str)) and not isinstance(obj, bool):
            return obj
        self.fail(path, f"expected a bus id (integer or string), got {obj!r}")
        return obj

    def sequence(self, obj, path):
        if isinstance(obj, list):
            return obj
        self.fail(path, f"expected a list, got {type(obj).__name__}")
        return []

    def series(self, obj, path, num_scenarios, horizon):
        """Scalar, [T] or [S][T] input expanded to a tuple of S tuples of T."""
        if isinstance(obj, (int, float)) and not isinstance(obj, bool):
            row = (float(obj),) * horizon
            return (row,) * num_scenarios
        if not isinstance(obj, list):
            self.fail(path, f"expected a number or list, got {type(obj).__name__}")
            return ((0.0,) * horizon,) * num_scenarios
        if obj and all(isinstance(v, list) for v in obj):
            return tuple(tuple(self.number(v, f"{path}[{s}][{t}]")
                               for t, v in enumerate(row))
                         for s, row in enumerate(obj))
        row = tuple(self.number(v, f"{path}[{t}]") for t, v in enumerate(obj))
        return (row,) * num_scenarios


def _parse_line(w: _Walk, obj, path) -> Line:
    entry = w.mapping(obj, path, required=("from", "to", "reactance"),
                      optional=("id", "limit", "lower", "upper"))
    if entry is None:
        return Line("?", 0, 0, 1.0)
    from_bus = w.bus_id(entry.get("from"), f"{path}.from")
    to_bus = w.bus_id(entry.get("to"), f"{path}.to")
    ident = entry.get("id", f"{from_bus}-{to_bus}")
    lower, upper = -math.inf, math.inf
    if "limit" in entry:
        if "lower" in entry or "upper" in entry:
            w.fail(path, "give either 'limit' or 'lower'/'upper', not both")
        cap = w.number(entry["limit"], f"{path}.limit")
        lower, upper = -cap, cap
    else:
        if "lower" in entry:
            lower = w.number(entry["lower"], f"{path}.lower")
        if "upper" in entry:
            upper = w.number(entry["upper"], f"{path}.upper")
    return Line(id=w.string(ident, f"{path}.id"), from_bus=from_bus, to_bus=to_bus,
                reactance=w.number(entry.get("reactance"), f"{path}.reactance", 1.0),
                lower=lower, upper=upper)


def _parse_network(w: _Walk, obj) -> Network:
    section = w.mapping(obj, "network", required=("buses", "lines", "reference_bus"),
                        optional=("base_mva",))
    if section is None:
        return Network((0,), (), 0)
    buses = tuple(w.bus_id(b, f"network.buses[{i}]")
                  for i, b in enumerate(w.sequence(section.get("buses"), "network.buses")))
    lines = tuple(_parse_line(w, ln, f"network.lines[{i}]")
                  for i, ln in enumerate(w.sequence(section.get("lines"), "network.lines")))
    return Network(buses=buses or (0,), lines=lines,
                   reference_bus=w.bus_id(section.get("reference_bus"), "network.reference_bus"),
                   base_mva=w.number(section.get("base_mva", 100.0), "network.base_mva", 100.0))


def _parse_offers(w: _Walk, obj, S, T):
    offers, strategic_cost = [], 0.0
    for i, raw in enumerate(w.sequence(obj, "offers")):
        path = f"offers[{i}]"
        entry = w.mapping(raw, path, required=("id", "bus", "cost"),
                          optional=("capacity", "strategic"))
        if entry is None:
            continue
        strategic = entry.get("strategic", False)
        if not isinstance(strategic, bool):
            w.fail(f"{path}.strategic", f"expected a boolean, got {strategic!r}")
            strategic = False
        cost = w.number(entry.get("cost"), f"{path}.cost")
        capacity = None
        if strategic:
            if "capacity" in entry:
                w.fail(f"{path}.capacity", "a strategic offer takes no capacity "
                                           "(the bid variable supplies it)")
            strategic_cost = cost
        elif "capacity" not in entry:
            w.fail(path, "missing required key 'capacity'")
        else:
            capacity = w.series(entry["capacity"], f"{path}.capacity", S, T)
        offers.append(GeneratorOffer(id=w.string(entry.get("id"), f"{path}.id"),
                                     bus=w.bus_id(entry.get("bus"), f"{path}.bus"),
                                     cost=cost, capacity=capacity, strategic=strategic))
    return tuple(offers), strategic_cost


def _parse_loads(w: _Walk, obj, S, T) -> LoadProfile:
    demand = {}
    for i, raw in enumerate(w.sequence(obj, "loads")):
        path = f"loads[{i}]"
        entry = w.mapping(raw, path, required=("bus", "demand"))
        if entry is None:
            continue
        bus = w.bus_id(entry.get("bus"), f"{path}.bus")
        if bus in demand:
            w.fail(path, f"duplicate load entry for bus {bus}")
        demand[bus] = w.series(entry.get("demand"), f"{path}.demand", S, T)
    return LoadProfile(demand=demand)


def _parse_scenarios(w: _Walk, obj, T):
    section = w.mapping(obj, "scenarios", required=("probabilities",),
                        optional=("renewables",))
    if section is None:
        return ScenarioSet((1.0,), ())
    probs = tuple(w.number(p, f"scenarios.probabilities[{i}]")
                  for i, p in enumerate(w.sequence(section.get("probabilities"),
                                                   "scenarios.probabilities")))
    S = len(probs) or 1
    units = []
    for i, raw in enumerate(w.sequence(section.get("renewables", []), "scenarios.renewables")):
        path = f"scenarios.renewables[{i}]"
        entry = w.mapping(raw, path, required=("id", "bus", "capacity", "forecasts"))
        if entry is None:
            continue
        units.append(RenewableUnit(
            id=w.string(entry.get("id"), f"{path}.id"),
            bus=w.bus_id(entry.get("bus"), f"{path}.bus"),
            capacity=w.number(entry.get("capacity"), f"{path}.capacity"),
            forecasts=w.series(entry.get("forecasts"), f"{path}.forecasts", S, T)))
    return ScenarioSet(probabilities=probs or (1.0,), units=tuple(units))


_ESS_FIELDS = ("charge_limit", "discharge_limit", "energy_capacity",
               "eta_charge", "eta_discharge")
_HSS_FIELDS = ("electrolyzer_limit", "fuel_cell_limit", "tank_capacity",
               "eta_electrolyzer", "eta_fuel_cell", "heat_value")


def _parse_ders(w: _Walk, obj):
    if obj is None:
        return (), ()
    section = w.mapping(obj, "ders", required=(), optional=("ess", "hss"))
    if section is None:
        return (), ()

    def parse_units(kind, cls, fields):
        units = []
        for i, raw in enumerate(w.sequence(section.get(kind, []), f"ders.{kind}")):
            path = f"ders.{kind}[{i}]"
            entry = w.mapping(raw, path, required=("id",) + fields)
            if entry is None:
                continue
            values = {f: w.number(entry.get(f), f"{path}.{f}", 1.0) for f in fields}
            units.append(cls(id=w.string(entry.get("id"), f"{path}.id"), **values))
        return tuple(units)

    return (parse_units("ess", EssParams, _ESS_FIELDS),
            parse_units("hss", HssParams, _HSS_FIELDS))


def _parse_risk(w: _Walk, obj) -> RiskParams:
    if obj is None:
        return RiskParams()
    section = w.mapping(obj, "risk", required=(),
                        optional=("alpha", "beta", "rec_coupling"))
    if section is None:
        return RiskParams()
    defaults = RiskParams()
    return RiskParams(
        alpha=w.number(section.get("alpha", defaults.alpha), "risk.alpha", defaults.alpha),
        beta=w.number(section.get("beta", defaults.beta), "risk.beta", defaults.beta),
        rec_coupling=w.number(section.get("rec_coupling", defaults.rec_coupling),
                              "risk.rec_coupling", defaults.rec_coupling))


def document_to_case(doc, source: str = "<document>") -> CaseData:
    """Build a validated CaseData from a parsed case document."""
    w = _Walk()
    top = w.mapping(doc, "case", required=("name", "horizon", "network", "offers",
                                           "loads", "scenarios"),
                    optional=("ders", "risk"))
    if top is None:
        raise CaseFormatError(source, w.errors)
    horizon = w.integer(top.get("horizon"), "horizon", 1)
    if horizon < 1:
        w.fail("horizon", f"must be >= 1, got {horizon}")
        horizon = 1
    scenarios = _parse_scenarios(w, top.get("scenarios"), horizon)
    S = scenarios.size
    offers, strategic_cost = _parse_offers(w, top.get("offers"), S, horizon)
    strategic = [o for o in offers if o.strategic]
    ess_units, hss_units = _parse_ders(w, top.get("ders"))
    case = CaseData(
        name=w.string(top.get("name"), "name", "case"),
        network=_parse_network(w, top.get("network")),
        offers=offers,
        loads=_parse_loads(w, top.get("loads"), S, horizon),
        scenarios=scenarios,
        ess_units=ess_units,
        hss_units=hss_units,
        risk=_parse_risk(w, top.get("risk")),
        horizon=horizon,
        vpp_bus=strategic[0].bus if strategic else 0,
        strategic_cost=strategic_cost)
    if w.errors:
        raise CaseFormatError(source, w.errors)
    return case.validated()


def loads_case(text: str, source: str = "<string>") -> CaseData:
    """Parse and validate a case document given as YAML text."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise CaseFormatError(source, [f"YAML parse error: {exc}"]) from exc
    return document_to_case(doc, source)


def load_case(path) -> CaseData:
    """Load, parse and validate the case file at ``path``."""
    with open(path) as fh:
        text = fh.read()
    return loads_case(text, source=str(path))


# -- writing -------------------------------------------------------------------

def _line_entry(ln: Line) -> dict:
    entry = {"id": ln.id, "from": ln.from_bus, "to": ln.to_bus, "reactance": ln.reactance}
    if math.isfinite(ln.upper) and ln.lower == -ln.upper:
        entry["limit"] = ln.upper
    else:
        if math.isfinite(ln.lower):
            entry["lower"] = ln.lower
        if math.isfinite(ln.upper):
            entry["upper"] = ln.upper
    return entry


def _rows(series) -> list:
    return [list(map(float, row)) for row in series]


def case_to_document(case: CaseData) -> dict:
    """Plain-dict case document; always writes series in full [S][T] form."""
    offers = []
    for o in case.offers:
        if o.strategic:
            offers.append({"id": o.id, "bus": o.bus, "cost": case.strategic_cost,
                           "strategic": True})
        else:
            offers.append({"id": o.id, "bus": o.bus, "cost": o.cost,
                           "capacity": _rows(o.capacity)})
    return {
        "name": case.name,
        "horizon": case.horizon,
        "network": {
            "base_mva": case.network.base_mva,
            "reference_bus": case.network.reference_bus,
            "buses": list(case.network.buses),
            "lines": [_line_entry(ln) for ln in case.network.lines],
        },
        "offers": offers,
        "loads": [{"bus": b, "demand": _rows(case.loads.demand[b])}
                  for b in case.network.buses if b in case.loads.demand],
        "scenarios": {
            "probabilities": list(map(float, case.scenarios.probabilities)),
            "renewables": [{"id": u.id, "bus": u.bus, "capacity": u.capacity,
                            "forecasts": _rows(u.forecasts)}
                           for u in case.scenarios.units],
        },
        "ders": {
            "ess": [{"id": j.id, **{f: getattr(j, f) for f in _ESS_FIELDS}}
                    for j in case.ess_units],
            "hss": [{"id": k.id, **{f: getattr(k, f) for f in _HSS_FIELDS}}
                    for k in case.hss_units],
        },
        "risk": {"alpha": case.risk.alpha, "beta": case.risk.beta,
                 "rec_coupling": case.risk.rec_coupling},
    }


def serialize_case(case: CaseData) -> str:
    """YAML text whose load yields a CaseData equal to ``case`` field-by-field."""
    return yaml.safe_dump(case_to_document(case), sort_keys=False,
                          default_flow_style=None, width=120)


def save_case(case: CaseData, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_case(case))


# -- IEEE common data format -----------------------------------------------------

@dataclass(frozen=True)
class IeeeCdfCase:
    """The slice of an IEEE common-data-format file this package consumes."""

    base_mva: float
    buses: tuple                 # bus numbers in file order
    loads_mw: dict               # bus -> load MW (buses with nonzero load only)
    branches: tuple              # (from, to, reactance p.u., rating MW or 0)


def parse_ieee_cdf(text: str) -> IeeeCdfCase:
    """Read bus/branch cards from common-data-format text.

    Bus cards are sliced by the fixed name column (5-16), then whitespace-split,
    which tolerates the column drift seen in circulating copies; branch cards
    are purely numeric and split directly. A rating of 0 means unrated.
    """
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty common-data-format input")
    base_mva = 100.0
    for token in lines[0].split():
        if "/" in token:
            continue
        try:
            base_mva = float(token)
            break
        except ValueError:
            continue

    def section(marker):
        start = next((i for i, ln in enumerate(lines) if marker in ln.upper()), None)
        if start is None:
            raise ValueError(f"missing section {marker!r}")
        out = []
        for ln in lines[start + 1:]:
            if ln.strip().startswith("-999"):
                return out
            if ln.strip():
                out.append(ln)
        raise ValueError(f"section {marker!r} not terminated by -999")

    buses, loads = [], {}
    for record in section("BUS DATA"):
        number = int(record[:5].split()[0])
        fields = record[17:].split()
        buses.append(number)
        load_mw = float(fields[5])
        if load_mw != 0.0:
            loads[number] = load_mw
    branches = []
    for record in section("BRANCH DATA"):
        fields = record.split()
        branches.append((int(fields[0]), int(fields[1]),
                         float(fields[7]), float(fields[9])))
    return IeeeCdfCase(base_mva=base_mva, buses=tuple(buses),
                       loads_mw=loads, branches=tuple(branches))


def convert_ieee_cdf(text: str, name: str = "ieee-case") -> dict:
    """Emit the case-format ``network`` and snapshot ``loads`` sections.

    The result is a partial case document: merge in ``horizon``, ``offers``,
    ``scenarios``, ``ders`` and ``risk`` (and optionally reshape the constant
    snapshot loads into profiles) to obtain a loadable case. Branches with a
    nonzero MVA rating become symmetric flow limits of that many MW.
    """
    cdf = parse_ieee_cdf(text)
    lines = []
    counts: dict = {}
    for from_bus, to_bus, reactance, rating in cdf.branches:
        counts[(from_bus, to_bus)] = counts.get((from_bus, to_bus), 0) + 1
        ident = f"{from_bus}-{to_bus}"
        if counts[(from_bus, to_bus)] > 1:
            ident += f"#{counts[(from_bus, to_bus)]}"
        entry = {"id": ident, "from": from_bus, "to": to_bus, "reactance": reactance}
        if rating > 0:
            entry["limit"] = rating
        lines.append(entry)
    return {
        "name": name,
        "network": {
            "base_mva": cdf.base_mva,
            "reference_bus": cdf.buses[0],
            "buses": list(cdf.buses),
            "lines": lines,
        },
        "loads": [{"bus": b, "demand": mw} for b, mw in sorted(cdf.loads_mw.items())],
    }
