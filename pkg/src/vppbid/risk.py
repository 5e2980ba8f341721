"""Conditional value-at-risk machinery.

Two faces of the same measure: :func:`build_cvar_block` emits the linear
epigraph constraints used inside the MILP, and :func:`evaluate_cvar` maximizes
the Rockafellar-Uryasev objective directly so tests and reports can check the
MILP against an independent computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .milp import EQ, GE, LinExpr, ModelBuilder

TIE_SLACK = 1e-9


def evaluate_cvar(revenues, probabilities, alpha: float):
    """Maximize eta - (1/(1-alpha)) sum_s w_s max(0, eta - r_s) over eta.

    The objective is concave and piecewise linear with breakpoints at the
    revenue values, so a breakpoint scan is exact. CVaR is the scanned
    maximum itself. VaR is the lowest breakpoint whose value falls within a
    1e-9 relative slack of that maximum, so an interval maximizer returns its
    lower endpoint even when a tie is broken by roundoff; near-ties can move
    VaR but never CVaR. Returns ``(VaR, CVaR)``.
    """
    r = [float(v) for v in revenues]
    w = [float(v) for v in probabilities]
    if not r:
        raise ValueError("at least one scenario is required")
    if len(r) != len(w):
        raise ValueError("revenues and probabilities differ in length")
    if abs(math.fsum(w) - 1.0) > 1e-9:
        raise ValueError("probabilities must sum to 1")
    if any(v < 0 for v in w):
        raise ValueError("probabilities must be nonnegative")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")

    def phi(eta):
        tail = math.fsum(wi * (eta - ri) for ri, wi in zip(r, w) if eta > ri)
        return eta - tail / (1.0 - alpha)

    points = sorted(set(r))
    values = [phi(eta) for eta in points]
    best = max(values)
    slack = TIE_SLACK * max(1.0, abs(best))
    for eta, val in zip(points, values):
        if val >= best - slack:
            return eta, best
    raise AssertionError("unreachable: some breakpoint attains the maximum")


@dataclass(frozen=True)
class RiskReport:
    revenues: tuple            # $ per scenario
    probabilities: tuple
    alpha: float
    var: float                 # maximizing eta
    tail_deviations: tuple     # eps_s = max(0, var - r_s)
    cvar: float
    expected: float


def assess_risk(revenues, probabilities, alpha: float) -> RiskReport:
    var, cvar = evaluate_cvar(revenues, probabilities, alpha)
    r = tuple(float(v) for v in revenues)
    w = tuple(float(v) for v in probabilities)
    return RiskReport(
        revenues=r,
        probabilities=w,
        alpha=alpha,
        var=var,
        tail_deviations=tuple(max(0.0, var - ri) for ri in r),
        cvar=cvar,
        expected=math.fsum(wi * ri for wi, ri in zip(w, r)),
    )


def build_cvar_block(mb: ModelBuilder, probabilities, alpha: float, beta: float,
                     revenue_keys, strict: bool = False) -> dict:
    """Expected revenue plus the beta-weighted CVaR epigraph, added to ``mb``.

    Always adds sum_s w_s r_s to the objective. With beta > 0 it introduces a
    free eta and eps_s >= 0 with eps_s >= eta - r_s, and the objective term
    beta * (eta - (1/(1-alpha)) sum_s w_s eps_s). With beta = 0 the block
    collapses to the expected-revenue terms alone and no variables are added.

    ``strict`` emits the literal equality eta - r_s = eps_s instead of the
    epigraph inequality, for comparison runs only; it forces eta >= max_s r_s.
    """
    w = [float(v) for v in probabilities]
    revenue_keys = list(revenue_keys)
    if len(w) != len(revenue_keys):
        raise ValueError("one revenue expression per scenario is required")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if beta < 0.0:
        raise ValueError("beta must be >= 0")

    expected = LinExpr()
    for wi, key in zip(w, revenue_keys):
        expected.add(key, wi)
    mb.add_objective(expected)
    if beta == 0.0:
        return {"eta": None, "eps": ()}

    eta = mb.add_var("eta", (), lb=-math.inf, ub=math.inf)
    obj = LinExpr().add(eta, beta)
    eps_keys = []
    for s, (wi, key) in enumerate(zip(w, revenue_keys), start=1):
        eps = mb.add_var("eps", (s,), lb=0.0)
        eps_keys.append(eps)
        obj.add(eps, -beta * wi / (1.0 - alpha))
        if strict:
            row = LinExpr().add(eta, 1.0).add(key, -1.0).add(eps, -1.0)
            mb.add_row("cvar_tie", (s,), row, EQ, 0.0)
        else:
            row = LinExpr().add(eps, 1.0).add(eta, -1.0).add(key, 1.0)
            mb.add_row("cvar_tail", (s,), row, GE, 0.0)
    mb.add_objective(obj)
    return {"eta": eta, "eps": tuple(eps_keys)}
