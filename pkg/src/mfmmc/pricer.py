"""Backward dynamic programming for American (Bermudan at the Euler knots) options."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .errors import EstimatorBreakdownError, LocalizationDegenerateError, UnsupportedModelError
from .estimator import (
    DEN_TOL,
    EstimatorInput,
    EstimatorOutput,
    ProductInput,
    estimate_all_sorted,
    estimate_product_naive,
)
from .localization import NoLocalizer, estimate_lambda, make_localizer, solve_lambda_multi
from .model import MarketSpec, ModelSpec, PayoffSpec, eval_payoff
from .paths import PathBundle, TimeGrid, simulate_ensemble
from .weights import WeightAccumulator, accumulate_weights, weights_for_window


@dataclass
class PricingConfig:
    model: ModelSpec
    payoff: PayoffSpec
    market: MarketSpec = field(default_factory=MarketSpec)
    n_steps: int = 512
    path_count: int = 2000
    localizer: str = "onesided"
    fixed_lambda: Optional[float] = None
    seed: int = 0
    threads: int = 1
    block_size: int = 1024
    node_count: int = 64
    kernel_form: str = "divergence"
    den_tol: float = DEN_TOL
    heaviside_offset: float = 0.0
    max_fallback_fraction: float = 0.5
    clip_continuation: bool = True
    keep_snapshots: bool = False

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.path_count < 2:
            raise ValueError("path_count must be >= 2")
        if self.localizer not in ("none", "laplace", "onesided"):
            raise ValueError(f"unknown localizer {self.localizer!r}")
        if self.fixed_lambda is not None and not self.fixed_lambda > 0:
            raise ValueError("fixed_lambda must be positive")

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.n_steps, self.market.horizon)

    def echo(self) -> dict:
        """Plain-data summary used in result records and CSV headers."""
        return {
            "model": repr(self.model),
            "payoff": repr(self.payoff),
            "rate": self.market.rate,
            "horizon": self.market.horizon,
            "n_steps": self.n_steps,
            "path_count": self.path_count,
            "localizer": self.localizer,
            "fixed_lambda": self.fixed_lambda,
            "seed": self.seed,
            "block_size": self.block_size,
            "node_count": self.node_count,
            "kernel_form": self.kernel_form,
            "den_tol": self.den_tol,
            "clip_continuation": self.clip_continuation,
        }


@dataclass
class PricingResult:
    price: float
    intrinsic: float
    lambdas: np.ndarray  # (N+1, d); row k is the parameter used at knot k (NaN where unused)
    fallback_counts: np.ndarray  # (N+1,)
    wall_time: float
    config: dict
    snapshots: Optional[np.ndarray] = None  # (M, N+1) value function per path, if requested
    lambda_converged: Optional[np.ndarray] = None

    @property
    def fallback_total(self) -> int:
        return int(self.fallback_counts.sum())

    def to_record(self) -> dict:
        return {
            "version": __version__,
            "price": self.price,
            "intrinsic": self.intrinsic,
            "wall_time": self.wall_time,
            "fallback_total": self.fallback_total,
            "fallback_counts": self.fallback_counts.tolist(),
            "lambdas": np.where(np.isnan(self.lambdas), None, self.lambdas).tolist(),
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), indent=2)


def simulate_for(cfg: PricingConfig) -> tuple[PathBundle, WeightAccumulator]:
    bundle = simulate_ensemble(
        cfg.model,
        cfg.grid,
        cfg.path_count,
        cfg.seed,
        threads=cfg.threads,
        block_size=cfg.block_size,
        node_count=cfg.node_count,
    )
    return bundle, accumulate_weights(bundle, cfg.model, form=cfg.kernel_form)


def choose_localizer(kind: str, values, weights, fixed_lambda: Optional[float] = None):
    """Localizer for one backward step; falls back to none when the parameter is undefined."""
    if kind == "none":
        return NoLocalizer()
    if fixed_lambda is not None:
        return make_localizer(kind, fixed_lambda)
    try:
        return make_localizer(kind, estimate_lambda(values, weights))
    except LocalizationDegenerateError:
        return NoLocalizer()


def continuation(
    cfg: PricingConfig,
    bundle: PathBundle,
    acc: WeightAccumulator,
    k: int,
    F: np.ndarray,
) -> tuple[EstimatorOutput, np.ndarray, bool]:
    """Estimate E[F | X_{t_k} = X_{t_k}^m] for every path m; returns (output, lambdas, converged)."""
    ws = weights_for_window(bundle, acc, k)
    G = bundle.states[:, k, :]
    d = G.shape[1]
    if d == 1:
        loc = choose_localizer(cfg.localizer, F * F, ws.pi[:, 0], cfg.fixed_lambda)
        out = estimate_all_sorted(EstimatorInput(G[:, 0], F, ws.pi[:, 0], loc, cfg.heaviside_offset), cfg.den_tol)
        return out, np.array([loc.lam if loc.lam else np.nan]), True
    if d != 2:
        raise UnsupportedModelError("only one- and two-asset models are supported")
    converged = True
    if cfg.localizer == "none":
        locs = (NoLocalizer(),) * d
    elif cfg.fixed_lambda is not None:
        locs = tuple(make_localizer(cfg.localizer, cfg.fixed_lambda) for _ in range(d))
    else:
        try:
            sol = solve_lambda_multi(F * F, ws.pi)
            locs = tuple(make_localizer(cfg.localizer, lam) for lam in sol.lam)
            converged = sol.converged
        except LocalizationDegenerateError:
            locs = (NoLocalizer(),) * d
    out = estimate_product_naive(ProductInput(G, F, ws.pi, locs, cfg.heaviside_offset), cfg.den_tol)
    return out, np.array([loc.lam if loc.lam else np.nan for loc in locs]), converged


def price_american(
    cfg: PricingConfig,
    bundle: Optional[PathBundle] = None,
    acc: Optional[WeightAccumulator] = None,
) -> PricingResult:
    """Bellman recursion V_k = max(Phi(X_k), e^{-r dt} E[V_{k+1} | X_k]) on the simulated ensemble."""
    start = time.perf_counter()
    if bundle is None:
        bundle, acc = simulate_for(cfg)
    elif acc is None:
        acc = accumulate_weights(bundle, cfg.model, form=cfg.kernel_form)
    N = bundle.grid.n_steps
    M, _, d = bundle.states.shape
    disc = np.exp(-cfg.market.rate * bundle.grid.step)
    lambdas = np.full((N + 1, d), np.nan)
    fallbacks = np.zeros(N + 1, dtype=np.int64)
    converged = np.ones(N + 1, dtype=bool)
    snaps = np.empty((M, N + 1)) if cfg.keep_snapshots else None

    V = eval_payoff(cfg.payoff, _state(bundle, N))
    if snaps is not None:
        snaps[:, N] = V
    for k in range(N - 1, 0, -1):
        phi = eval_payoff(cfg.payoff, _state(bundle, k))
        out, lam, ok = continuation(cfg, bundle, acc, k, V)
        lambdas[k] = lam
        converged[k] = ok
        fallbacks[k] = int(out.fallback.sum())
        if out.fallback_fraction > cfg.max_fallback_fraction:
            raise EstimatorBreakdownError(
                f"{out.fallback_fraction:.0%} of conditioning points had a degenerate denominator at step {k}"
            )
        est = out.estimate
        if cfg.clip_continuation:
            # a conditional expectation of V lies in [min V, max V]; signed weights can leave it in the tails
            est = np.clip(est, V.min(), V.max())
        cont = np.where(out.fallback, phi, disc * est)
        V = np.maximum(phi, cont)
        if snaps is not None:
            snaps[:, k] = V
    x0 = cfg.model.initial_state
    intrinsic = float(eval_payoff(cfg.payoff, x0[None, :] if d > 1 else x0)[0])
    price = max(intrinsic, float(disc * V.mean()))
    if snaps is not None:
        snaps[:, 0] = price
    return PricingResult(
        price=price,
        intrinsic=intrinsic,
        lambdas=lambdas,
        fallback_counts=fallbacks,
        wall_time=time.perf_counter() - start,
        config=cfg.echo(),
        snapshots=snaps,
        lambda_converged=converged,
    )


@dataclass
class EuropeanResult:
    price: float
    std_error: float
    intrinsic: float


def price_european(cfg: PricingConfig, bundle: Optional[PathBundle] = None) -> EuropeanResult:
    """Plain Monte Carlo value e^{-rT} mean Phi(X_T) on the same ensemble."""
    if bundle is None:
        bundle = simulate_ensemble(
            cfg.model, cfg.grid, cfg.path_count, cfg.seed,
            threads=cfg.threads, block_size=cfg.block_size, node_count=cfg.node_count,
        )
    disc = np.exp(-cfg.market.rate * cfg.market.horizon)
    pay = disc * eval_payoff(cfg.payoff, _state(bundle, bundle.grid.n_steps))
    x0 = cfg.model.initial_state
    intrinsic = float(eval_payoff(cfg.payoff, x0[None, :] if x0.size > 1 else x0)[0])
    return EuropeanResult(float(pay.mean()), float(pay.std(ddof=1) / np.sqrt(pay.size)), intrinsic)


def _state(bundle: PathBundle, k: int) -> np.ndarray:
    x = bundle.states[:, k, :]
    return x[:, 0] if x.shape[1] == 1 else x
