"""Batch experiments: price tables, error curves against the FD benchmark, localizer comparisons."""

from __future__ import annotations

import csv
import io
import json
import logging
import subprocess
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import MFMMCError
from .fd import solve_american_pide
from .pricer import PricingConfig, price_american

log = logging.getLogger(__name__)

TABLE_COLUMNS = ["N", "MC", "price", "std_error", "fd_price", "abs_error", "above_intrinsic", "error"]
ERROR_CURVE_COLUMNS = ["N", "MC", "replications", "price_mean", "price_se", "abs_error_mean", "abs_error_se", "error"]
VARIANCE_COLUMNS = ["localizer", "N", "MC", "replications", "price_mean", "price_variance", "wall_time_mean",
                    "wins_vs_none", "error"]


def version_string() -> str:
    """Package version plus ``git describe`` of the source tree when available."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


@dataclass
class Table:
    """Rows of a CSV output plus the cell failures that occurred while filling it."""

    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    failures: int = 0

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if r.get(name) in ("", None) else float(r[name]) for r in self.rows])

    def to_csv(self, path, run: RunConfig, kind: str) -> None:
        Path(path).write_text(render_csv(self, run, kind))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return str(v)


def render_csv(table: Table, run: RunConfig, kind: str) -> str:
    buf = io.StringIO()
    buf.write(f"# mfmmc {version_string()} {kind}\n")
    buf.write(f"# config {run.name}: {json.dumps(run.raw, sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_fmt(row.get(c)) for c in table.columns])
    return buf.getvalue()


def _cell_config(run: RunConfig, n_steps: int, paths: int, seed: int, **extra) -> PricingConfig:
    return replace(run.pricing, n_steps=n_steps, path_count=paths, seed=seed, **extra)


def _replicate(run: RunConfig, n_steps: int, paths: int, replications: int, **extra):
    """Prices for seeds seed, seed+1, ...; returns (prices, wall times) or raises the first failure."""
    prices, walls = [], []
    for r in range(replications):
        res = price_american(_cell_config(run, n_steps, paths, run.pricing.seed + r, **extra))
        prices.append(res.price)
        walls.append(res.wall_time)
    return np.array(prices), np.array(walls)


def fd_benchmark(run: RunConfig) -> Optional[float]:
    if run.pricing.model.dimension != 1:
        return None
    p = run.pricing
    return solve_american_pide(p.model, p.payoff, p.market, run.fd, node_count=p.node_count).price


def _grid_cells(run: RunConfig, n_list, mc_list, replications, work, threads):
    cells = [(n, mc) for n in n_list for mc in mc_list]

    def job(cell):
        n, mc = cell
        try:
            return cell, work(n, mc, replications), None
        except (MFMMCError, ValueError, FloatingPointError) as exc:
            log.warning("cell N=%d MC=%d failed: %s", n, mc, exc)
            return cell, None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(job, cells))
    return [job(c) for c in cells]


def run_table(run: RunConfig, n_list=None, mc_list=None, replications=None, threads: int = 1) -> Table:
    """One price per (N, MC) cell (replication mean when R > 1) with the FD benchmark alongside."""
    n_list = n_list or run.n_list
    mc_list = mc_list or run.mc_list
    R = replications or run.replications
    fd = fd_benchmark(run)
    intrinsic = float(np.asarray(run.pricing.payoff(run.pricing.model.initial_state)).reshape(-1)[0])
    table = Table(list(TABLE_COLUMNS))
    for (n, mc), res, err in _grid_cells(run, n_list, mc_list, R, lambda n, mc, R: _replicate(run, n, mc, R)[0], threads):
        row = {"N": n, "MC": mc, "fd_price": fd, "error": err or ""}
        if res is not None:
            row["price"] = float(res.mean())
            row["std_error"] = float(res.std(ddof=1) / np.sqrt(R)) if R > 1 else None
            row["abs_error"] = abs(row["price"] - fd) if fd is not None else None
            row["above_intrinsic"] = bool(res.min() >= intrinsic - 1e-12)
        else:
            table.failures += 1
        table.rows.append(row)
    return table


def run_error_curve(run: RunConfig, n_list=None, mc_list=None, replications=None, threads: int = 1) -> Table:
    """Long-format |MMC - FD| per (N, MC) with replication mean and standard error."""
    n_list = n_list or run.n_list
    mc_list = mc_list or run.mc_list
    R = replications or run.replications
    fd = fd_benchmark(run)
    if fd is None:
        raise MFMMCError("error curves need a one-asset config (FD benchmark)")
    table = Table(list(ERROR_CURVE_COLUMNS))
    for (n, mc), res, err in _grid_cells(run, n_list, mc_list, R, lambda n, mc, R: _replicate(run, n, mc, R)[0], threads):
        row = {"N": n, "MC": mc, "replications": R, "error": err or ""}
        if res is not None:
            errs = np.abs(res - fd)
            row.update(
                price_mean=float(res.mean()),
                price_se=float(res.std(ddof=1) / np.sqrt(R)) if R > 1 else None,
                abs_error_mean=float(errs.mean()),
                abs_error_se=float(errs.std(ddof=1) / np.sqrt(R)) if R > 1 else None,
            )
        else:
            table.failures += 1
        table.rows.append(row)
    _soft_check_mc_trend(table, mc_list)
    return table


def _soft_check_mc_trend(table: Table, mc_list) -> None:
    lo, hi = min(mc_list), max(mc_list)
    if lo == hi:
        return
    by = {(r["N"], r["MC"]): r.get("abs_error_mean") for r in table.rows}
    for n in sorted({r["N"] for r in table.rows}):
        a, b = by.get((n, lo)), by.get((n, hi))
        if a is not None and b is not None and b > a:
            warnings.warn(f"N={n}: mean abs error at MC={hi} ({b:.4g}) exceeds MC={lo} ({a:.4g})", stacklevel=2)


def run_variance_study(run: RunConfig, n_steps=None, paths=None, replications=None, kinds=("none", "laplace", "onesided")) -> Table:
    """Paired-seed replications per localizer kind at a fixed (N, MC)."""
    n_steps = n_steps or run.pricing.n_steps
    paths = paths or run.pricing.path_count
    R = replications or run.replications
    table = Table(list(VARIANCE_COLUMNS))
    prices = {}
    for kind in kinds:
        row = {"localizer": kind, "N": n_steps, "MC": paths, "replications": R, "error": ""}
        try:
            p, wall = _replicate(run, n_steps, paths, R, localizer=kind, fixed_lambda=None)
            prices[kind] = p
            row.update(price_mean=float(p.mean()), price_variance=float(p.var(ddof=1)) if R > 1 else None,
                       wall_time_mean=float(wall.mean()))
        except (MFMMCError, ValueError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
            table.failures += 1
        table.rows.append(row)
    # paired comparison: squared deviation from the unlocalized mean, replication by replication
    if "none" in prices:
        ref = prices["none"]
        centre = ref.mean()
        for row in table.rows:
            p = prices.get(row["localizer"])
            if p is not None and row["localizer"] != "none":
                row["wins_vs_none"] = int(np.sum((p - p.mean()) ** 2 <= (ref - centre) ** 2))
    return table


