"""Command-line entry point.

Subcommands cover the studies (``portfolio``, ``tank``, ``beta-sweep``,
``schedule``), single solves (``solve``), standalone market clearing at
forecast bids (``clear``) and deterministic model export for external
solvers (``export-model``).

Exit codes: 0 success, 2 verification failure, 3 infeasible market,
4 solver limit, 1 anything wrong with the inputs.
"""

from __future__ import annotations

import argparse
import sys

from .caseio import CaseFormatError
from .data import (PORTFOLIOS, CaseValidationError, with_portfolio, with_risk,
                   with_tank_scale)
from .experiments import (ExperimentConfig, ExperimentError, extract_schedule,
                          run_beta_sweep, run_portfolio_study, run_tank_study)
from .lpformat import write_lp
from .market import MarketInfeasibleError, clear_market
from .mpec import assemble_with_info
from .solve import SolverError

SWEEP_GRID = (0.0, 0.5, 1.0, 2.0, 5.0)


def _base_options(parser: argparse.ArgumentParser, out_help: str):
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--case", metavar="PATH",
                        help="case file, or 'default' for the bundled dataset")
    source.add_argument("--profile", choices=("full", "desk"),
                        help="bundled case profile")
    parser.add_argument("--alpha", type=float, metavar="A",
                        help="tail confidence level override")
    parser.add_argument("--out", metavar="DIR", help=out_help)
    parser.add_argument("--solver", choices=("bundled", "external"),
                        default="bundled", help="MILP backend")
    parser.add_argument("--node-limit", type=int, metavar="N",
                        help="branch-and-bound node budget")
    parser.add_argument("--gap", type=float, metavar="G",
                        help="relative optimality gap to stop at")


def _variant_options(parser: argparse.ArgumentParser, beta=False,
                     tank_scale=False, portfolio=False):
    if beta:
        parser.add_argument("--beta", action="append", type=float, metavar="B",
                            help="risk weight; repeat the flag for a sweep grid")
    if tank_scale:
        parser.add_argument("--tank-scale", type=float, default=1.0, metavar="K",
                            help="hydrogen tank capacity multiplier")
    if portfolio:
        parser.add_argument("--portfolio", choices=PORTFOLIOS,
                            default="pv_wt_ess_hss", help="storage fleet to keep")


def _config(args, betas) -> ExperimentConfig:
    case = "default"
    if getattr(args, "case", None):
        case = args.case
    elif getattr(args, "profile", None):
        case = args.profile
    return ExperimentConfig(case=case,
                            portfolio=getattr(args, "portfolio", "pv_wt_ess_hss"),
                            tank_scale=getattr(args, "tank_scale", 1.0),
                            betas=betas, alpha=args.alpha, out=args.out,
                            backend=args.solver, node_limit=args.node_limit,
                            gap=args.gap)


def _single_beta(args):
    betas = getattr(args, "beta", None)
    if not betas:
        return (None,)   # keep the case file's risk weight
    if len(betas) > 1:
        raise ValueError("this subcommand takes a single --beta")
    return (betas[0],)


def _announce(args, result):
    if args.out:
        print(f"wrote {args.out}/{{config,results.csv,verification.txt,model-stats.txt}}")
    print(result.to_csv(), end="")


def cmd_solve(args) -> int:
    config = _config(args, _single_beta(args))
    result = run_beta_sweep(config)
    print(result.solutions[0].report.to_text())
    if args.out:
        print(f"wrote {args.out}/{{config,results.csv,verification.txt,model-stats.txt}}")
    return 0


def cmd_portfolio(args) -> int:
    _announce(args, run_portfolio_study(_config(args, (0.0,))))
    return 0


def cmd_tank(args) -> int:
    _announce(args, run_tank_study(_config(args, (0.0,))))
    return 0


def cmd_beta_sweep(args) -> int:
    betas = tuple(args.beta) if args.beta else SWEEP_GRID
    _announce(args, run_beta_sweep(_config(args, betas)))
    return 0


def cmd_schedule(args) -> int:
    _announce(args, extract_schedule(_config(args, _single_beta(args))))
    return 0


def cmd_clear(args) -> int:
    """Clear the market at forecast bids and emit prices and dispatch."""
    config = _config(args, (None,))
    case = config.resolve_case()
    outcome = clear_market(case, case.forecast_total())
    vpp = case.strategic_offer.id
    columns = ["t", "s", "bid", "cleared", "cost"]
    columns += [f"lam_{b}" for b in outcome.buses]
    lines = [",".join(columns)]
    bids = case.forecast_total()
    cleared = outcome.dispatch_of(vpp)
    for t in range(case.T):
        for s in range(case.S):
            row = [str(t + 1), str(s + 1), repr(float(bids[t, s])),
                   repr(float(cleared[t, s])), repr(float(outcome.cost[t, s]))]
            row += [repr(float(outcome.prices[b, t, s]))
                    for b in range(len(outcome.buses))]
            lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as handle:
            handle.write(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_export_model(args) -> int:
    config = _config(args, _single_beta(args))
    case = with_risk(with_tank_scale(with_portfolio(config.resolve_case(),
                                                    config.portfolio),
                                     config.tank_scale),
                     beta=config.betas[0])
    model, _ = assemble_with_info(case)
    write_lp(model, args.out)
    print(f"wrote {args.out}: {len(model.variables)} variables, "
          f"{len(model.rows)} rows")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vppbid",
        description="Risk-aware price-maker bidding for a virtual power plant")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("solve", help="solve one case and print the report")
    _base_options(sub, "artifact directory")
    _variant_options(sub, beta=True, tank_scale=True, portfolio=True)
    sub.set_defaults(handler=cmd_solve)

    sub = subs.add_parser("clear", help="clear the market at forecast bids")
    _base_options(sub, "CSV file for prices and dispatch")
    sub.set_defaults(handler=cmd_clear)

    sub = subs.add_parser("portfolio", help="expected revenue per storage fleet")
    _base_options(sub, "artifact directory")
    _variant_options(sub, tank_scale=True)
    sub.set_defaults(handler=cmd_portfolio)

    sub = subs.add_parser("tank", help="expected revenue across tank sizes")
    _base_options(sub, "artifact directory")
    _variant_options(sub, tank_scale=True)
    sub.set_defaults(handler=cmd_tank)

    sub = subs.add_parser("beta-sweep", help="risk-weight sweep for one variant")
    _base_options(sub, "artifact directory")
    _variant_options(sub, beta=True, tank_scale=True, portfolio=True)
    sub.set_defaults(handler=cmd_beta_sweep)

    sub = subs.add_parser("schedule", help="hourly storage and bid schedule")
    _base_options(sub, "artifact directory")
    _variant_options(sub, beta=True, tank_scale=True, portfolio=True)
    sub.set_defaults(handler=cmd_schedule)

    sub = subs.add_parser("export-model",
                          help="write the assembled model in LP text format")
    _base_options(sub, "LP file path")
    _variant_options(sub, beta=True, tank_scale=True, portfolio=True)
    sub.set_defaults(handler=cmd_export_model)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "export-model" and not args.out:
        parser.error("export-model requires --out")
    try:
        return args.handler(args)
    except ExperimentError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code
    except MarketInfeasibleError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except SolverError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except (CaseFormatError, CaseValidationError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
