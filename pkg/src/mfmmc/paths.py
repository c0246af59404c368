"""Particle simulation of the mean-field jump SDE and its first-variation process.

The expectation in the coefficients is replaced by the ensemble mean at the
start of each step (synchronous particle system).  Jumps are compensated with
the fixed z-quadrature so the scheme discretises the compensated integral.

Random numbers come from counter-based Philox streams keyed by
(seed, asset, block of paths) with the time step as counter offset, so a
bundle does not depend on how blocks are scheduled across threads.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import DegenerateVariationError
from .model import AssetSpec, ModelSpec, eval_coefficients
from .quadrature import ZQuadrature

JUMP_FACTOR_FLOOR = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    n_steps: int
    horizon: float

    def __post_init__(self):
        if self.n_steps < 1 or self.horizon <= 0:
            raise ValueError("TimeGrid needs n_steps >= 1 and horizon > 0")

    @property
    def step(self) -> float:
        return self.horizon / self.n_steps

    @property
    def knots(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.step
        t[-1] = self.horizon
        return t


@dataclass
class JumpRecord:
    """Flat record of every jump of one asset, ordered by (step, path, time)."""

    path: np.ndarray
    step: np.ndarray
    time: np.ndarray
    z: np.ndarray
    x_pre: np.ndarray
    y_pre: np.ndarray
    mean: np.ndarray  # ensemble mean used for the step containing the jump

    @classmethod
    def empty(cls) -> "JumpRecord":
        i, f = np.empty(0, dtype=np.int64), np.empty(0)
        return cls(i, i.copy(), f, f.copy(), f.copy(), f.copy(), f.copy())

    @classmethod
    def concat(cls, parts: list["JumpRecord"]) -> "JumpRecord":
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, name) for p in parts]) for name in cls.__dataclass_fields__))

    def __len__(self) -> int:
        return self.z.size

    def select(self, mask) -> "JumpRecord":
        return JumpRecord(*(getattr(self, name)[mask] for name in self.__dataclass_fields__))

    def for_path(self, m: int) -> "JumpRecord":
        sub = self.select(self.path == m)
        order = np.argsort(sub.time, kind="stable")
        return sub.select(order)


@dataclass
class PathBundle:
    grid: TimeGrid
    states: np.ndarray  # (M, N+1, d)
    variations: np.ndarray  # (M, N+1, d)
    jumps: tuple[JumpRecord, ...]  # one per asset
    mean_stats: np.ndarray  # (N+1, d)
    seed: int
    weight_accumulators: Optional[np.ndarray] = None  # (M, N+1, d), filled by accumulate_weights
    meta: dict = field(default_factory=dict)

    @property
    def path_count(self) -> int:
        return self.states.shape[0]

    @property
    def dimension(self) -> int:
        return self.states.shape[2]


class PathStreams:
    """Counter-based substreams: one Philox key per (seed, asset, block), counter offset per step."""

    def __init__(self, seed: int, block_size: int = 1024):
        if block_size < 1:
            raise ValueError("block_size must be positive")
        self.seed = int(seed)
        self.block_size = int(block_size)

    @lru_cache(maxsize=None)
    def _key(self, asset: int, block: int) -> np.ndarray:
        return np.random.SeedSequence([self.seed, asset, block]).generate_state(2, dtype=np.uint64)

    def generator(self, asset: int, block: int, step: int) -> np.random.Generator:
        counter = np.array([0, 0, step, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=self._key(asset, block), counter=counter))


def _compensators(asset: AssetSpec, quad: ZQuadrature, t: float, x: np.ndarray, m: float):
    """int lam kappa dz and int M kappa dz per path, by the fixed quadrature rule."""
    if quad.node_count == 0:
        return np.zeros_like(x), np.zeros_like(x)
    z = quad.nodes[None, :]
    xx = x[:, None]
    lam = asset.jump.value(t, xx, z, m)
    dx = asset.jump.dx(t, xx, z, m)
    return quad.integrate(np.broadcast_to(lam, (x.size, z.size))), quad.integrate(np.broadcast_to(dx, (x.size, z.size)))


def _advance_block(asset, asset_index, quad, streams, block, k, t, dt, x, y, m, path_offset):
    gen = streams.generator(asset_index, block, k)
    n = x.size
    dw = gen.standard_normal(n) * np.sqrt(dt)
    lam_total = asset.levy.total_intensity * dt
    counts = gen.poisson(lam_total, size=n) if lam_total > 0 else np.zeros(n, dtype=np.int64)
    n_jumps = int(counts.sum())
    times = t + dt * (1.0 - gen.random(n_jumps))  # in (t_k, t_{k+1}]
    marks = asset.levy.sample_sizes(gen, n_jumps)

    c = eval_coefficients(asset, t, x, m)
    comp_x, comp_m = _compensators(asset, quad, t, x, m)
    x_new = x + c.b * dt + c.sigma * dw - dt * comp_x
    y_new = y * (1.0 + c.A * dt + c.B * dw - dt * comp_m)

    if n_jumps == 0:
        return x_new, y_new, None

    owner = np.repeat(np.arange(n), counts)
    order = np.lexsort((times, owner))
    owner, times, marks = owner[order], times[order], marks[order]
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    rank = np.arange(n_jumps) - starts[owner]
    x_pre = np.empty(n_jumps)
    y_pre = np.empty(n_jumps)
    for j in range(int(counts.max())):
        sel = np.nonzero(rank == j)[0]
        idx = owner[sel]
        xj, zj = x_new[idx], marks[sel]
        x_pre[sel] = xj
        y_pre[sel] = y_new[idx]
        factor = 1.0 + asset.jump.dx(times[sel], xj, zj, m)
        bad = factor <= JUMP_FACTOR_FLOOR
        if np.any(bad):
            b = int(np.argmax(bad))
            raise DegenerateVariationError(
                f"1 + dlam/dx = {factor[b]:.3g} <= 0 on path {path_offset + idx[b]} at t={times[sel][b]:.6g}"
            )
        x_new[idx] = xj + asset.jump.value(times[sel], xj, zj, m)
        y_new[idx] = y_new[idx] * factor
    rec = JumpRecord(
        path=(owner + path_offset).astype(np.int64),
        step=np.full(n_jumps, k, dtype=np.int64),
        time=times,
        z=marks,
        x_pre=x_pre,
        y_pre=y_pre,
        mean=np.full(n_jumps, m),
    )
    return x_new, y_new, rec


def simulate_ensemble(
    model: ModelSpec,
    grid: TimeGrid,
    path_count: int,
    seed: int = 0,
    *,
    threads: int = 1,
    block_size: int = 1024,
    node_count: int = 64,
    streams: Optional[PathStreams] = None,
) -> PathBundle:
    """Euler scheme for (X, Y) on all paths with the empirical mean closing the mean-field term."""
    if path_count < 2:
        raise ValueError("need at least 2 paths")
    streams = streams or PathStreams(seed, block_size)
    M, N, d = path_count, grid.n_steps, model.dimension
    dt = grid.step
    knots = grid.knots
    states = np.empty((M, N + 1, d))
    variations = np.empty((M, N + 1, d))
    means = np.empty((N + 1, d))
    states[:, 0, :] = model.initial_state
    variations[:, 0, :] = 1.0
    quads = [ZQuadrature.for_measure(a.levy, node_count) for a in model.assets]
    bounds = [(lo, min(lo + streams.block_size, M)) for lo in range(0, M, streams.block_size)]
    records: list[list[JumpRecord]] = [[] for _ in range(d)]

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for k in range(N):
            t = knots[k]
            for i, asset in enumerate(model.assets):
                x = states[:, k, i]
                y = variations[:, k, i]
                m = float(np.mean(x))
                means[k, i] = m

                def run(b, asset=asset, i=i, x=x, y=y, m=m, t=t, k=k):
                    lo, hi = bounds[b]
                    return _advance_block(asset, i, quads[i], streams, b, k, t, dt, x[lo:hi], y[lo:hi], m, lo)

                results = list(pool.map(run, range(len(bounds)))) if pool else [run(b) for b in range(len(bounds))]
                for (lo, hi), (xn, yn, rec) in zip(bounds, results):
                    states[lo:hi, k + 1, i] = xn
                    variations[lo:hi, k + 1, i] = yn
                    if rec is not None:
                        records[i].append(rec)
    finally:
        if pool:
            pool.shutdown()
    means[N] = states[:, N, :].mean(axis=0)
    return PathBundle(
        grid=grid,
        states=states,
        variations=variations,
        jumps=tuple(JumpRecord.concat(r) for r in records),
        mean_stats=means,
        seed=streams.seed,
        meta={"block_size": streams.block_size, "node_count": node_count},
    )


def empirical_mean(bundle: PathBundle, k: int) -> np.ndarray:
    """Per-asset ensemble mean at knot ``k`` (identity mean functional)."""
    if not 0 <= k <= bundle.grid.n_steps:
        raise IndexError(f"step index {k} outside 0..{bundle.grid.n_steps}")
    return bundle.states[:, k, :].mean(axis=0)


def dump_paths(bundle: PathBundle, path_file, jump_file) -> None:
    """Write long-format CSVs: one row per (path, knot, asset) and one row per jump."""
    knots = bundle.grid.knots
    M, n1, d = bundle.states.shape
    with open(path_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "step", "time", "asset", "x", "y", "u"])
        U = bundle.weight_accumulators
        for m in range(M):
            for k in range(n1):
                for i in range(d):
                    u = "" if U is None else repr(float(U[m, k, i]))
                    w.writerow([m, k, repr(float(knots[k])), i, repr(float(bundle.states[m, k, i])),
                                repr(float(bundle.variations[m, k, i])), u])
    with open(jump_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["asset", "path", "step", "time", "z", "x_pre", "y_pre", "mean"])
        for i, rec in enumerate(bundle.jumps):
            for j in range(len(rec)):
                w.writerow([i, int(rec.path[j]), int(rec.step[j])] +
                           [repr(float(v[j])) for v in (rec.time, rec.z, rec.x_pre, rec.y_pre, rec.mean)])
