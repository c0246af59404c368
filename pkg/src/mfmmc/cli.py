"""Command-line front end: ``mfmmc <subcommand> --config <file|name> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import SHIPPED, RunConfig, load_config
from .errors import ConfigError, MFMMCError
from .experiments import render_csv, run_error_curve, run_table, run_variance_study, version_string
from .fd import solve_american_pide
from .paths import dump_paths
from .pricer import price_american, price_european, simulate_for

log = logging.getLogger("mfmmc")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="example2", help=f"TOML file or shipped name ({', '.join(SHIPPED)})")
    common.add_argument("--seed", type=int, help="master seed (replication r uses seed + r)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--replications", type=int, help="replications R per cell")
    common.add_argument("--localizer", choices=("none", "laplace", "onesided"))
    common.add_argument("--lambda", dest="fixed_lambda", type=float, help="fixed localization parameter")
    common.add_argument("--n-steps", type=int, help="time steps N for single runs")
    common.add_argument("--paths", type=int, help="path count M for single runs")
    common.add_argument("--n-list", type=_int_list, help="comma-separated N values for grids")
    common.add_argument("--mc-list", type=_int_list, help="comma-separated M values for grids")
    common.add_argument("--no-figures", action="store_true", help="write CSV/JSON only")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mfmmc", description="Malliavin Monte Carlo American option pricer")
    parser.add_argument("--version", action="version", version=f"mfmmc {version_string()}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("price", parents=[common], help="price once and print the result record")
    sub.add_parser("table", parents=[common], help="price grid over N x MC with the FD benchmark")
    sub.add_parser("error-curve", parents=[common], help="|MMC - FD| per (N, MC) with error bars")
    sub.add_parser("variance-study", parents=[common], help="compare localizer kinds on paired seeds")
    sub.add_parser("fd", parents=[common], help="finite-difference benchmark (one asset)")
    sub.add_parser("dump-paths", parents=[common], help="write simulated paths, jumps and weight integrals")
    return parser


def _apply_overrides(run: RunConfig, args) -> RunConfig:
    changes = {"threads": args.threads}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.localizer is not None:
        changes["localizer"] = args.localizer
    if args.fixed_lambda is not None:
        changes["fixed_lambda"] = args.fixed_lambda
    if args.n_steps is not None:
        changes["n_steps"] = args.n_steps
    if args.paths is not None:
        changes["path_count"] = args.paths
    run.pricing = replace(run.pricing, **changes)
    if args.n_list:
        run.n_list = args.n_list
    if args.mc_list:
        run.mc_list = args.mc_list
    if args.replications is not None:
        run.replications = args.replications
    run.raw = dict(run.raw, cli_overrides={k: v for k, v in vars(args).items() if k not in ("out", "verbose")
                                          and v is not None and not isinstance(v, Path)})
    return run


def _cmd_price(run, args) -> int:
    res = price_american(run.pricing)
    eur = price_european(run.pricing)
    record = res.to_record()
    record.update(european=eur.price, european_std_error=eur.std_error, version=version_string())
    text = json.dumps(record, indent=2, default=str)
    (args.out / f"{run.name}_price.json").write_text(text + "\n")
    print(text)
    return 0


def _cmd_grid(run, args, kind) -> int:
    if kind == "table":
        table = run_table(run, threads=args.threads)
    elif kind == "error-curve":
        table = run_error_curve(run, threads=args.threads)
    else:
        table = run_variance_study(run)
    stem = f"{run.name}_{kind.replace('-', '_')}"
    csv_path = args.out / f"{stem}.csv"
    csv_path.write_text(render_csv(table, run, kind))
    print(csv_path)
    if not args.no_figures:
        from . import plotting

        plot = {"table": plotting.plot_table, "error-curve": plotting.plot_error_curve,
                "variance-study": plotting.plot_variance_study}[kind]
        print(plot(table, args.out / f"{stem}.png"))
    if table.failures:
        log.error("%d cell(s) failed; see the error column", table.failures)
        return 1
    return 0


def _cmd_fd(run, args) -> int:
    p = run.pricing
    res = solve_american_pide(p.model, p.payoff, p.market, run.fd, node_count=p.node_count)
    csv_path = args.out / f"{run.name}_fd.csv"
    res.to_csv(csv_path)
    print(f"price {res.price!r}")
    print(csv_path)
    if not args.no_figures:
        from .plotting import plot_fd_slice

        print(plot_fd_slice(res.x, res.values, res.payoff, args.out / f"{run.name}_fd.png"))
    return 0


def _cmd_dump(run, args) -> int:
    bundle, _ = simulate_for(run.pricing)
    paths_csv = args.out / f"{run.name}_paths.csv"
    jumps_csv = args.out / f"{run.name}_jumps.csv"
    dump_paths(bundle, paths_csv, jumps_csv)
    print(paths_csv)
    print(jumps_csv)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        run = _apply_overrides(load_config(args.config), args)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "price":
            return _cmd_price(run, args)
        if args.command in ("table", "error-curve", "variance-study"):
            return _cmd_grid(run, args, args.command)
        if args.command == "fd":
            return _cmd_fd(run, args)
        return _cmd_dump(run, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MFMMCError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
