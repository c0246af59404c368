"""Finite-difference benchmark for one-asset American options.

The mean-field term is decoupled through the mean curve m(t) = E[X_t], which
solves a closed linear ODE for drifts that are affine in (x, m) because the
compensated jump integral has mean zero.  With m(t) frozen the price solves the
ordinary time-dependent PIDE

    P_t + (b - int lam kappa) P_x + sigma^2/2 P_xx + int P(x + lam) kappa dz - (r + Lambda) P = 0

with P >= Phi.  Local terms are Crank-Nicolson (with a short fully implicit
start to damp the payoff kink), the integral term is explicit with linear
interpolation at the shifted points.  For a put, whose exercise region is a
half-line at low x, the constraint is enforced inside the implicit solve by
the Brennan-Schwartz sweep; other payoffs use a projection after every step.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numba
import numpy as np
from scipy.linalg import solve_banded

from .errors import FDInstabilityError, UnsupportedModelError
from .model import AffineMeanField, MarketSpec, ModelSpec, PayoffSpec, Put, TimeVaryingTable, eval_payoff
from .quadrature import ZQuadrature

log = logging.getLogger(__name__)

RANNACHER_STEPS = 2


@dataclass(frozen=True)
class FDGrid:
    nodes: int = 1000
    time_steps: int = 2000
    x_max: float | None = None  # default: 4 * max(K, largest mean on [0, T], x0)


@dataclass
class MomentCurve:
    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.times, self.values)


def solve_moment_ode(model: ModelSpec, horizon: float, steps: int = 2000) -> MomentCurve:
    """Classical RK4 for dm/dt = E[b(t, X, m)] on an affine (or time-only) drift."""
    if model.dimension != 1:
        raise UnsupportedModelError("moment ODE is implemented for one-asset models")
    asset = model.assets[0]
    drift = asset.drift
    if isinstance(drift, AffineMeanField):
        slope = drift.coef_state + drift.coef_mean

        def rhs(t, m):
            return slope * m + drift.coef_const
    elif isinstance(drift, TimeVaryingTable):
        def rhs(t, m):
            return float(np.interp(t, drift.times, drift.values))
    else:
        raise UnsupportedModelError(f"no closed mean equation for drift {type(drift).__name__}")
    h = horizon / steps
    times = np.linspace(0.0, horizon, steps + 1)
    values = np.empty(steps + 1)
    m = values[0] = asset.x0
    for n in range(steps):
        t = times[n]
        k1 = rhs(t, m)
        k2 = rhs(t + h / 2, m + h / 2 * k1)
        k3 = rhs(t + h / 2, m + h / 2 * k2)
        k4 = rhs(t + h, m + h * k3)
        m = m + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        values[n + 1] = m
    return MomentCurve(times, values)


@dataclass
class FDResult:
    price: float
    x: np.ndarray
    values: np.ndarray  # t = 0 slice
    payoff: np.ndarray
    clamped_shifts: int
    moments: MomentCurve
    american: bool = True

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "value", "payoff"])
            for row in zip(self.x, self.values, self.payoff):
                w.writerow([repr(float(v)) for v in row])


def _default_xmax(payoff: PayoffSpec, moments: MomentCurve, x0: float) -> float:
    strike = getattr(payoff, "strike", None)
    if strike is None:
        strike = getattr(getattr(payoff, "inner", None), "strike", 0.0)
    return 4.0 * max(strike, x0, float(np.max(np.abs(moments.values))))


def solve_american_pide(
    model: ModelSpec,
    payoff: PayoffSpec,
    market: MarketSpec,
    grid: FDGrid = FDGrid(),
    moments: MomentCurve | None = None,
    american: bool = True,
    node_count: int = 64,
) -> FDResult:
    if model.dimension != 1:
        raise UnsupportedModelError("the PIDE benchmark is one-dimensional")
    asset = model.assets[0]
    T = market.horizon
    r = market.rate
    if moments is None:
        moments = solve_moment_ode(model, T, grid.time_steps)
    x_max = grid.x_max or _default_xmax(payoff, moments, asset.x0)
    J = grid.nodes
    x = np.linspace(0.0, x_max, J + 1)
    dx = x[1] - x[0]
    phi = eval_payoff(payoff, x)
    quad = ZQuadrature.for_measure(asset.levy, node_count)
    Lam = float(quad.weights.sum()) if quad.node_count else 0.0
    dt = T / grid.time_steps
    inner = slice(1, J)
    xi = x[inner]

    P = phi.copy()
    clamped = 0
    for n in range(grid.time_steps, 0, -1):
        t_new, t_old = (n - 1) * dt, n * dt
        substeps = 2 if n > grid.time_steps - RANNACHER_STEPS else 1
        h = dt / substeps
        for s in range(substeps):
            t_hi = t_old - s * h
            t_lo = t_hi - h
            theta = 1.0 if substeps == 2 else 0.5
            # coefficients frozen at the midpoint of the (sub)step
            tm = 0.5 * (t_hi + t_lo)
            m = float(moments(tm))
            lower, diag, upper = _local_operator(asset, quad, tm, xi, m, dx, r + Lam)
            jump = np.zeros(J - 1)
            if quad.node_count:
                shifts = xi[:, None] + asset.jump.value(tm, xi[:, None], quad.nodes[None, :], m)
                out = (shifts < 0.0) | (shifts > x_max)
                clamped += int(out.sum())
                jump = np.interp(shifts, x, P, left=P[0], right=P[-1]) @ quad.weights
            # explicit part: P_old + (1 - theta) h L P_old + h jump
            Pi = P[inner]
            LP = lower * P[:-2] + diag * Pi + upper * P[2:]
            rhs = Pi + (1.0 - theta) * h * LP + h * jump
            bc_lo, bc_hi = phi[0], phi[-1]
            rhs[0] += theta * h * lower[0] * bc_lo
            rhs[-1] += theta * h * upper[-1] * bc_hi
            sub, main, sup = -theta * h * lower, 1.0 - theta * h * diag, -theta * h * upper
            new = np.empty_like(P)
            if american and isinstance(payoff, Put):
                new[inner] = _brennan_schwartz(sub, main, sup, rhs, phi[inner])
            else:
                ab = np.zeros((3, J - 1))
                ab[0, 1:] = sup[:-1]
                ab[1] = main
                ab[2, :-1] = sub[1:]
                new[inner] = solve_banded((1, 1), ab, rhs)
            new[0], new[-1] = bc_lo, bc_hi
            if american:
                np.maximum(new, phi, out=new)
            P = new
        if not np.all(np.isfinite(P)) or np.max(np.abs(P)) > 1e6 * (1.0 + np.max(np.abs(phi))):
            raise FDInstabilityError(f"value surface blew up at t={t_new:.4g}; refine the grid")
    if clamped:
        log.info("%d jump targets fell outside [0, %g] and were clamped to the boundary values", clamped, x_max)
    price = float(np.interp(asset.x0, x, P))
    return FDResult(price, x, P, phi, clamped, moments, american)


@numba.njit(cache=True)
def _brennan_schwartz(sub, main, sup, rhs, floor):
    """Tridiagonal solve with P >= floor when the exercise region is {x <= x*}.

    Eliminate from the top down to the first unknown, then substitute upward
    taking the max with the floor at each node.
    """
    n = main.size
    b = main.copy()
    d = rhs.copy()
    for i in range(n - 2, -1, -1):
        f = sup[i] / b[i + 1]
        b[i] -= f * sub[i + 1]
        d[i] -= f * d[i + 1]
    out = np.empty(n)
    out[0] = max(floor[0], d[0] / b[0])
    for i in range(1, n):
        out[i] = max(floor[i], (d[i] - sub[i] * out[i - 1]) / b[i])
    return out


def _local_operator(asset, quad, t, x, m, dx, kill):
    """Tridiagonal coefficients of (b - comp) d/dx + sigma^2/2 d2/dx2 - kill at interior nodes."""
    b = asset.drift.value(t, x, m)
    if quad.node_count:
        comp = asset.jump.value(t, x[:, None], quad.nodes[None, :], m)
        b = b - np.broadcast_to(comp, (x.size, quad.node_count)) @ quad.weights
    diff = 0.5 * asset.diffusion.value(t, x, m) ** 2
    # central differences where the cell Peclet number allows, upwind elsewhere
    central = np.abs(b) * dx <= 2.0 * diff
    lo_c = diff / dx**2 - b / (2 * dx)
    up_c = diff / dx**2 + b / (2 * dx)
    lo_u = diff / dx**2 + np.maximum(-b, 0.0) / dx
    up_u = diff / dx**2 + np.maximum(b, 0.0) / dx
    lower = np.where(central, lo_c, lo_u)
    upper = np.where(central, up_c, up_u)
    diag = -(lower + upper) - kill
    return lower, diag, upper
