"""Study harness: portfolio comparison, tank sizing, beta sweeps, schedules.

Each study solves a deterministic family of case variants, verifies every
solution independently and reports only numbers recomputed from raw prices
and dispatch. Artifacts land in one directory per experiment: ``config``,
``results.csv``, ``verification.txt`` and ``model-stats.txt``. Nothing
wall-clock dependent is written, so repeated runs produce byte-identical
files. A failed verification aborts the study before anything is written.

Independent variant solves run on a small thread pool (the solver releases
the interpreter lock); results are collected and written in task order, so
concurrency never changes the artifacts.
"""

from __future__ import annotations

import json
import pathlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .caseio import load_case
from .data import PORTFOLIOS, CaseData, with_portfolio, with_risk, with_tank_scale
from .defaults import case_for_profile
from .pipeline import CaseSolution, SolveOptions, solve_case

TANK_SCALES = (0.5, 1.0, 2.0)
ACTIVE = 1e-9   # threshold for flagging a storage action as "on"


class ExperimentError(RuntimeError):
    """A study could not produce verified artifacts.

    ``exit_code`` matches the command-line contract: 2 verification failure,
    3 infeasible market, 4 solver limit.
    """

    def __init__(self, message: str, exit_code: int = 2):
        super().__init__(message)
        self.exit_code = exit_code


@dataclass(frozen=True)
class ExperimentConfig:
    """One study's inputs; fully deterministic, no seeds anywhere."""

    case: str = "default"            # bundled profile name or a YAML file path
    portfolio: str = "pv_wt_ess_hss"
    tank_scale: float = 1.0
    betas: tuple = (0.0,)            # a None entry keeps the case file's beta
    alpha: float | None = None
    out: str | None = None           # artifact directory; None computes only
    backend: str = "bundled"
    node_limit: int | None = None
    gap: float | None = None
    combined: bool = True            # add the full-fleet row to the portfolio study
    max_workers: int = 4

    def __post_init__(self):
        if self.portfolio not in PORTFOLIOS:
            raise ValueError(f"unknown portfolio {self.portfolio!r}")
        if self.tank_scale <= 0:
            raise ValueError("tank scale must be > 0")
        if not self.betas:
            raise ValueError("beta list must be non-empty")
        if any(b is not None and b < 0 for b in self.betas):
            raise ValueError("beta values must be >= 0")
        if self.max_workers < 1:
            raise ValueError("max_workers must be >= 1")

    def resolve_case(self) -> CaseData:
        if self.case in ("default", "full"):
            case = case_for_profile("full")
        elif self.case == "desk":
            case = case_for_profile("desk")
        else:
            case = load_case(self.case)
        if self.alpha is not None:
            case = with_risk(case, alpha=self.alpha)
        return case

    def solve_options(self) -> SolveOptions:
        return SolveOptions(backend=self.backend, node_limit=self.node_limit,
                            gap=self.gap)


@dataclass(frozen=True)
class StudyResult:
    """One study's table plus the verified solutions behind each row."""

    name: str
    columns: tuple
    rows: tuple                      # tuples aligned with columns
    labels: tuple                    # one per solution, headers in the reports
    solutions: tuple                 # CaseSolution per label

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        lines += [",".join(_cell(v) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"


def _cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value) + 0.0)   # +0.0 folds negative zero


def _variant(case: CaseData, portfolio: str, tank_scale: float,
             beta: float | None) -> CaseData:
    return with_risk(with_tank_scale(with_portfolio(case, portfolio), tank_scale),
                     beta=beta)


def _beta_label(beta: float | None) -> str:
    return "beta_case" if beta is None else f"beta_{beta:g}"


def _solve_checked(label: str, case: CaseData, config: ExperimentConfig,
                   warm_start=None) -> CaseSolution:
    sol = solve_case(case, config.solve_options(), warm_start=warm_start)
    if sol.status == "infeasible":
        raise ExperimentError(f"{label}: market clearing is infeasible", exit_code=3)
    if sol.x is None or sol.status == "node-limit":
        raise ExperimentError(f"{label}: solver limit reached without an optimum",
                              exit_code=4)
    if not sol.ok:
        raise ExperimentError(f"{label}: verification failed\n"
                              + sol.report.verification.to_text(), exit_code=2)
    return sol


def _solve_family(tasks, config: ExperimentConfig):
    """Solve (label, case, warm_start) tasks; results come back in task order."""
    if config.max_workers == 1 or len(tasks) == 1:
        return [_solve_checked(label, case, config, warm)
                for label, case, warm in tasks]
    with ThreadPoolExecutor(max_workers=min(config.max_workers, len(tasks))) as pool:
        futures = [pool.submit(_solve_checked, label, case, config, warm)
                   for label, case, warm in tasks]
        return [f.result() for f in futures]


def run_portfolio_study(config: ExperimentConfig) -> StudyResult:
    """Expected revenue per storage portfolio, relative to the no-storage fleet.

    All rows are solved risk-neutral at the configured tank scale; the delta
    column is the percentage gain over the renewables-only portfolio.
    """
    base = config.resolve_case()
    portfolios = ["pv_wt", "pv_wt_ess", "pv_wt_hss"]
    if config.combined:
        portfolios.append("pv_wt_ess_hss")
    tasks = [(f"case{i}_{p}", _variant(base, p, config.tank_scale, 0.0), None)
             for i, p in enumerate(portfolios, start=1)]
    solutions = _solve_family(tasks, config)
    reference = solutions[0].report.expected
    rows = []
    for (label, _, _), sol in zip(tasks, solutions):
        expected = sol.report.expected
        rows.append((label, sol.case.name, expected,
                     100.0 * (expected - reference) / reference))
    result = StudyResult("portfolio",
                         ("case", "name", "expected_revenue", "delta_pct"),
                         tuple(rows), tuple(t[0] for t in tasks), tuple(solutions))
    _write_artifacts(config, result)
    return result


def run_tank_study(config: ExperimentConfig) -> StudyResult:
    """Expected revenue of the hydrogen portfolio across tank sizes.

    Solves the half, base and double tank (plus the configured scale when it
    is none of those), risk-neutral, and reports deltas against the base.
    """
    base = config.resolve_case()
    scales = sorted(set(TANK_SCALES) | {config.tank_scale})
    tasks = [(f"tank_{scale:g}x", _variant(base, "pv_wt_hss", scale, 0.0), None)
             for scale in scales]
    solutions = _solve_family(tasks, config)
    reference = solutions[scales.index(1.0)].report.expected
    rows = []
    for scale, (label, case, _), sol in zip(scales, tasks, solutions):
        expected = sol.report.expected
        rows.append((label, scale, case.hss_units[0].tank_capacity, expected,
                     100.0 * (expected - reference) / reference))
    result = StudyResult("tank",
                         ("case", "scale", "tank_kg", "expected_revenue", "delta_pct"),
                         tuple(rows), tuple(t[0] for t in tasks), tuple(solutions))
    _write_artifacts(config, result)
    return result


def run_beta_sweep(config: ExperimentConfig) -> StudyResult:
    """Risk-weight sweep for one portfolio and tank-scale variant.

    The first beta is solved cold; its solution seeds the remaining solves,
    whose feasible set is identical (beta only reweights the objective).
    """
    base = config.resolve_case()
    first = _solve_checked(_beta_label(config.betas[0]),
                           _variant(base, config.portfolio, config.tank_scale,
                                    config.betas[0]),
                           config)
    tasks = [(_beta_label(b),
              _variant(base, config.portfolio, config.tank_scale, b), first.x)
             for b in config.betas[1:]]
    rest = _solve_family(tasks, config) if tasks else []
    solutions = [first] + rest
    labels = [_beta_label(config.betas[0])] + [t[0] for t in tasks]
    case = first.case
    columns = ["beta", "objective", "expected_revenue", "cvar", "var"]
    columns += [f"revenue_s{s}" for s in range(1, case.S + 1)]
    rows = []
    for sol in solutions:
        report = sol.report
        rows.append((report.beta, report.objective, report.expected,
                     report.cvar, report.var, *report.revenues))
    result = StudyResult("beta-sweep", tuple(columns), tuple(rows),
                         tuple(labels), tuple(solutions))
    _write_artifacts(config, result)
    return result


def extract_schedule(config: ExperimentConfig) -> StudyResult:
    """Hourly storage and bid schedule of one solved variant.

    Rows run from hour 0 (initial levels, no actions) to the final hour. The
    ``concurrent`` column flags hours where any electrolyzer and fuel cell
    run at the same time; batteries can never earn that flag.
    """
    base = config.resolve_case()
    variant = _variant(base, config.portfolio, config.tank_scale, config.betas[0])
    sol = _solve_checked("schedule", variant, config)
    case, sched = sol.case, sol.schedule
    columns = ["hour"]
    for j in case.ess_units:
        columns += [f"p_ch_{j.id}", f"p_dis_{j.id}", f"e_{j.id}"]
    for k in case.hss_units:
        columns += [f"p_el_{k.id}", f"h_fc_{k.id}", f"h_tank_{k.id}"]
    columns += [f"bid_s{s}" for s in range(1, case.S + 1)]
    columns.append("concurrent")
    rows = []
    for t in range(case.T + 1):
        row = [t]
        for j in case.ess_units:
            dev = sched.ess[j.id]
            on = t > 0
            row += [dev["p_ch"][t - 1] if on else 0.0,
                    dev["p_dis"][t - 1] if on else 0.0, dev["e"][t]]
        concurrent = False
        for k in case.hss_units:
            dev = sched.hss[k.id]
            on = t > 0
            p_el = dev["p_el"][t - 1] if on else 0.0
            h_fc = dev["h_fc"][t - 1] if on else 0.0
            row += [p_el, h_fc, dev["tank"][t]]
            concurrent = concurrent or (p_el > ACTIVE and h_fc > ACTIVE)
        row += [sched.bid[t - 1, s] if t > 0 else 0.0 for s in range(case.S)]
        row.append(int(concurrent))
        rows.append(tuple(row))
    result = StudyResult("schedule", tuple(columns), tuple(rows),
                         ("schedule",), (sol,))
    _write_artifacts(config, result)
    return result


def _config_text(config: ExperimentConfig) -> str:
    doc = asdict(config)
    doc.pop("out")   # the artifact directory itself, not an input worth recording
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _verification_text(result: StudyResult) -> str:
    blocks = []
    for label, sol in zip(result.labels, result.solutions):
        blocks.append(f"== {label} ==\n{sol.report.verification.to_text()}")
    return "\n\n".join(blocks) + "\n"


def _stats_text(result: StudyResult) -> str:
    blocks = []
    for label, sol in zip(result.labels, result.solutions):
        stats = sol.model_stats()
        body = "\n".join(f"{key}: {stats[key]}" for key in sorted(stats))
        blocks.append(f"== {label} ==\n{body}")
    return "\n\n".join(blocks) + "\n"


def _write_artifacts(config: ExperimentConfig, result: StudyResult):
    if config.out is None:
        return None
    outdir = pathlib.Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config").write_text(_config_text(config))
    (outdir / "results.csv").write_text(result.to_csv())
    (outdir / "verification.txt").write_text(_verification_text(result))
    (outdir / "model-stats.txt").write_text(_stats_text(result))
    return outdir
