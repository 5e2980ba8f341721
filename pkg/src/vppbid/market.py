"""Lower-level market clearing: per-hour DC-OPF solved directly as an LP.

This module is deliberately independent of the MILP assembly in :mod:`vppbid.mpec`;
it builds its own constraint matrices and calls the LP solver straight through
scipy, so it can serve as the verification oracle for the bi-level solution.

Sign conventions for the duals follow the stationarity equations of the
lower-level Lagrangian (all multipliers of inequality constraints nonnegative):

    flow:   xi - lambda_from + lambda_to + delta_lower - delta_upper = 0
    gen:    -C + lambda_bus + gamma_lower - gamma_upper = 0
    angle:  sum_{from(l)=b} (-xi_l / X_l) + sum_{to(l)=b} (xi_l / X_l) = 0

scipy reports equality marginals as d(cost)/d(rhs) and bound marginals with
upper-bound entries nonpositive; the mapping below converts to the convention
above (probed against hand-solved instances in tests/test_market.py).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .data import CaseData, Network


class MarketInfeasibleError(RuntimeError):
    """Clearing failed for one or more periods; demand exceeds deliverable supply."""

    def __init__(self, failures):
        self.failures = tuple(failures)  # 1-based (t, s) pairs
        detail = ", ".join(f"(t={t}, s={s})" for t, s in self.failures)
        super().__init__(f"market clearing infeasible at {detail}")


@dataclass(frozen=True)
class MarketOutcome:
    """Primal and dual values of the clearing LP for every hour and scenario."""

    offer_ids: tuple
    line_ids: tuple
    buses: tuple
    dispatch: np.ndarray      # (U, T, S) MW
    flows: np.ndarray         # (L, T, S) MW
    angles: np.ndarray        # (B, T, S) rad
    prices: np.ndarray        # (B, T, S) $/MWh, balance multipliers
    xi: np.ndarray            # (L, T, S) flow-definition multipliers
    delta_lower: np.ndarray   # (L, T, S) >= 0
    delta_upper: np.ndarray   # (L, T, S) >= 0
    gamma_lower: np.ndarray   # (U, T, S) >= 0
    gamma_upper: np.ndarray   # (U, T, S) >= 0
    cost: np.ndarray          # (T, S) $ objective of each clearing

    def dispatch_of(self, offer_id: str) -> np.ndarray:
        return self.dispatch[self.offer_ids.index(offer_id)]

    def flow_of(self, line_id: str) -> np.ndarray:
        return self.flows[self.line_ids.index(line_id)]

    def price(self, bus) -> np.ndarray:
        return self.prices[self.buses.index(bus)]


def dc_flow(network: Network, angles) -> np.ndarray:
    """Line flows (theta_from - theta_to) / X for one angle profile."""
    if isinstance(angles, dict):
        theta = np.array([angles[b] for b in network.buses], dtype=float)
    else:
        theta = np.asarray(angles, dtype=float)
        if theta.shape != (len(network.buses),):
            raise ValueError(f"expected one angle per bus, got shape {theta.shape}")
    index = network.bus_index()
    out = np.empty(len(network.lines))
    for i, ln in enumerate(network.lines):
        out[i] = (theta[index[ln.from_bus]] - theta[index[ln.to_bus]]) / network.reactance_mw(ln)
    return out


def _equality_matrix(case: CaseData):
    """Rows: L flow definitions, B balances, 1 reference fix. Columns: g, f, theta."""
    network = case.network
    index = network.bus_index()
    U, L, B = len(case.offers), len(network.lines), len(network.buses)
    rows, cols, vals = [], [], []

    def put(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    for i, ln in enumerate(network.lines):
        x = network.reactance_mw(ln)
        put(i, U + i, 1.0)
        put(i, U + L + index[ln.from_bus], -1.0 / x)
        put(i, U + L + index[ln.to_bus], 1.0 / x)
    for u, offer in enumerate(case.offers):
        put(L + index[offer.bus], u, 1.0)
    for i, ln in enumerate(network.lines):
        put(L + index[ln.from_bus], U + i, -1.0)
        put(L + index[ln.to_bus], U + i, 1.0)
    put(L + B, U + L + index[network.reference_bus], 1.0)
    shape = (L + B + 1, U + L + B)
    return sparse.csr_matrix((vals, (rows, cols)), shape=shape)


def clear_market(case: CaseData, bids) -> MarketOutcome:
    """Clear every (t, s) independently at the given strategic bid quantities.

    ``bids`` must be a (T, S) array of nonnegative finite MW quantities offered
    by the strategic unit at cost ``case.strategic_cost``.
    """
    bids = np.asarray(bids, dtype=float)
    if bids.shape != (case.T, case.S):
        raise ValueError(f"bids must have shape {(case.T, case.S)}, got {bids.shape}")
    if not np.all(np.isfinite(bids)) or np.any(bids < 0):
        raise ValueError("bids must be nonnegative and finite")

    network = case.network
    U, L, B = len(case.offers), len(network.lines), len(network.buses)
    T, S = case.T, case.S
    A_eq = _equality_matrix(case)
    demand = case.demand_array()
    index = network.bus_index()

    costs = np.zeros(U + L + B)
    for u, offer in enumerate(case.offers):
        costs[u] = case.strategic_cost if offer.strategic else offer.cost
    line_bounds = [(ln.lower if math.isfinite(ln.lower) else -np.inf,
                    ln.upper if math.isfinite(ln.upper) else np.inf)
                   for ln in network.lines]

    out = {
        "dispatch": np.zeros((U, T, S)), "flows": np.zeros((L, T, S)),
        "angles": np.zeros((B, T, S)), "prices": np.zeros((B, T, S)),
        "xi": np.zeros((L, T, S)), "delta_lower": np.zeros((L, T, S)),
        "delta_upper": np.zeros((L, T, S)), "gamma_lower": np.zeros((U, T, S)),
        "gamma_upper": np.zeros((U, T, S)), "cost": np.zeros((T, S)),
    }
    failures = []
    for t in range(T):
        for s in range(S):
            b_eq = np.zeros(L + B + 1)
            b_eq[L:L + B] = demand[:, t, s]
            bounds = []
            for offer in case.offers:
                cap = bids[t, s] if offer.strategic else offer.capacity[s][t]
                bounds.append((0.0, cap))
            bounds += line_bounds
            bounds += [(-np.inf, np.inf)] * B
            res = linprog(costs, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
            if res.status == 2:
                failures.append((t + 1, s + 1))
                continue
            if res.status != 0:
                raise RuntimeError(f"clearing LP failed at (t={t + 1}, s={s + 1}): {res.message}")
            out["dispatch"][:, t, s] = res.x[:U]
            out["flows"][:, t, s] = res.x[U:U + L]
            out["angles"][:, t, s] = res.x[U + L:]
            marg = res.eqlin.marginals
            out["xi"][:, t, s] = marg[:L]
            out["prices"][:, t, s] = marg[L:L + B]
            # Reduced cost per variable; HiGHS reports it on whichever bound is
            # active (either side for a fixed variable), so sum then split by sign.
            reduced = res.lower.marginals + res.upper.marginals
            out["gamma_lower"][:, t, s] = np.maximum(reduced[:U], 0.0)
            out["gamma_upper"][:, t, s] = np.maximum(-reduced[:U], 0.0)
            out["delta_lower"][:, t, s] = np.maximum(reduced[U:U + L], 0.0)
            out["delta_upper"][:, t, s] = np.maximum(-reduced[U:U + L], 0.0)
            out["cost"][t, s] = res.fun
    if failures:
        raise MarketInfeasibleError(failures)
    return MarketOutcome(
        offer_ids=tuple(o.id for o in case.offers),
        line_ids=tuple(ln.id for ln in network.lines),
        buses=tuple(network.buses),
        **out,
    )
