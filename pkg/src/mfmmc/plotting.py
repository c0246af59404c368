"""Figures for the experiment outputs, written next to the CSV files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import Table  # noqa: E402

STYLE = {
    "figure.figsize": (5.5, 3.8),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.25,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_table(table: Table, path) -> Path:
    """Price against N, one line per path count, with the FD benchmark as a horizontal rule."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        N, MC, price = table.column("N"), table.column("MC"), table.column("price")
        se = table.column("std_error")
        for mc in np.unique(MC):
            sel = MC == mc
            ax.errorbar(N[sel], price[sel], yerr=np.nan_to_num(se[sel]), marker="o", ms=3, capsize=2, label=f"MC = {int(mc)}")
        fd = table.column("fd_price")
        if np.isfinite(fd).any():
            ax.axhline(np.nanmax(fd), color="k", ls="--", lw=1, label="finite difference")
        ax.set_xscale("log", base=2)
        ax.set_xlabel("time steps N")
        ax.set_ylabel("price")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_error_curve(table: Table, path) -> Path:
    """Mean absolute error against N with replication error bars, one line per path count."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        N, MC = table.column("N"), table.column("MC")
        err, se = table.column("abs_error_mean"), table.column("abs_error_se")
        for mc in np.unique(MC):
            sel = MC == mc
            ax.errorbar(N[sel], err[sel], yerr=np.nan_to_num(se[sel]), marker="o", ms=3, capsize=2, label=f"MC = {int(mc)}")
        ax.set_xscale("log", base=2)
        if np.nanmin(err) > 0:
            ax.set_yscale("log")
        ax.set_xlabel("time steps N")
        ax.set_ylabel("|MMC - FD|")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_variance_study(table: Table, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        kinds = [r["localizer"] for r in table.rows]
        var = table.column("price_variance")
        ax.bar(kinds, np.nan_to_num(var), color="0.5")
        ax.set_ylabel("price variance over replications")
        return _save(fig, path)


def plot_fd_slice(x, values, payoff, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(x, values, lw=1.2, label="value at t = 0")
        ax.plot(x, payoff, lw=1, ls="--", color="k", label="payoff")
        ax.set_xlabel("x")
        ax.set_ylabel("value")
        ax.legend(frameon=False)
        return _save(fig, path)
