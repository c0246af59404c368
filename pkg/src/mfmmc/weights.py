"""Poisson-space Malliavin weights.

The weight kernel for a jump of mark ``z`` at time ``r`` is

    J(r, z) = w/dlam [(dlog kappa - d2lam/dlam) + 2|z| 1{|z|<=1} / dlam] (1 + M)
              + w dM / dlam,            w = 1 ^ z^2

(``form="displayed"``).  Differentiating ``w (1 + M) / dlam`` in ``z`` instead
gives the divergence of the weight process,

    J(r, z) = w/dlam (dlog kappa - d2lam/dlam) (1 + M) + 2 z 1{|z|<=1} (1 + M) / dlam
              + w dM / dlam

(``form="divergence"``).  The two differ only in the ``1 ^ z^2`` derivative term.
The divergence form is the default: it is the one for which E[F Pi] = -E[D_u F]
holds on finite-activity measures with smooth densities.

The compensated integral U_k = int_0^{t_k} int Y_r J(r, z) Ntilde(dz, dr) is
accumulated forward per path: jump sum minus a left-endpoint compensator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVariationError
from .model import AssetSpec, ModelSpec, eval_jump, levy_mass_A
from .paths import PathBundle
from .quadrature import ZQuadrature

KERNEL_FORMS = ("displayed", "divergence")


def kernel_J(asset: AssetSpec, r, x, z, m, form: str = "divergence"):
    """Weight kernel at mark ``z`` (inside the Levy support) and pre-jump state ``x``."""
    if form not in KERNEL_FORMS:
        raise ValueError(f"unknown kernel form {form!r}")
    z = np.asarray(z, dtype=float)
    jv = eval_jump(asset, r, x, z, m)
    grad = asset.levy.grad_log(z)
    w = np.minimum(1.0, z * z)
    inner = np.abs(z) <= 1.0
    one_m = 1.0 + jv.dx
    if form == "displayed":
        bracket = (grad - jv.dzz / jv.dz) + 2.0 * np.abs(z) * inner / jv.dz
        return w / jv.dz * bracket * one_m + w * jv.dxz / jv.dz
    return (w / jv.dz * (grad - jv.dzz / jv.dz) * one_m
            + 2.0 * z * inner * one_m / jv.dz
            + w * jv.dxz / jv.dz)


@dataclass
class WeightAccumulator:
    """Per path/knot/asset running integrals; ``U = cumsum(jump_inc - comp_inc)`` with U_0 = 0."""

    U: np.ndarray  # (M, N+1, d)
    jump_inc: np.ndarray  # (M, N, d)
    comp_inc: np.ndarray  # (M, N, d)
    mark_mass: np.ndarray  # (M, N+1, d): sum of (1 ^ z^2) over jumps up to t_k
    mass_A: np.ndarray  # (d,)


def accumulate_weights(
    bundle: PathBundle,
    model: ModelSpec,
    quad: list[ZQuadrature] | None = None,
    form: str = "divergence",
) -> WeightAccumulator:
    M, n1, d = bundle.states.shape
    N = n1 - 1
    dt = bundle.grid.step
    knots = bundle.grid.knots
    if quad is None:
        quad = [ZQuadrature.for_measure(a.levy, bundle.meta.get("node_count", 64)) for a in model.assets]
    jump_inc = np.zeros((M, N, d))
    comp_inc = np.zeros((M, N, d))
    mark_inc = np.zeros((M, N, d))
    for i, asset in enumerate(model.assets):
        rec = bundle.jumps[i]
        if len(rec):
            contrib = rec.y_pre * kernel_J(asset, rec.time, rec.x_pre, rec.z, rec.mean, form)
            flat = rec.path * N + rec.step
            jump_inc[:, :, i] = np.bincount(flat, weights=contrib, minlength=M * N).reshape(M, N)
            mark_inc[:, :, i] = np.bincount(flat, weights=np.minimum(1.0, rec.z**2), minlength=M * N).reshape(M, N)
        q = quad[i]
        if q.node_count == 0:
            continue
        for k in range(N):
            x = bundle.states[:, k, i]
            jk = kernel_J(asset, knots[k], x[:, None], q.nodes[None, :], bundle.mean_stats[k, i], form)
            comp_inc[:, k, i] = dt * bundle.variations[:, k, i] * q.integrate(jk)
    U = np.zeros((M, N + 1, d))
    np.cumsum(jump_inc - comp_inc, axis=1, out=U[:, 1:, :])
    mark_mass = np.zeros((M, N + 1, d))
    np.cumsum(mark_inc, axis=1, out=mark_mass[:, 1:, :])
    acc = WeightAccumulator(
        U=U,
        jump_inc=jump_inc,
        comp_inc=comp_inc,
        mark_mass=mark_mass,
        mass_A=np.array([levy_mass_A(a.levy) for a in model.assets]),
    )
    bundle.weight_accumulators = U
    return acc


@dataclass
class WeightSet:
    """Weights for the conditioning pair (s, t) = (t_k, t_{k+1}); arrays are (M, d)."""

    k: int
    s: float
    t: float
    pi: np.ndarray  # two-window weight Pi = pi1 - g
    pi1: np.ndarray  # Pi_1 = Pi_1^alpha / (s A)
    pi1_alpha: np.ndarray
    g: np.ndarray  # correction over (s, t]
    pi2_alpha: np.ndarray
    jump_term: np.ndarray  # per-asset mean |jump increments| over [0, s]
    compensator_term: np.ndarray


def weights_for_window(bundle: PathBundle, acc: WeightAccumulator, k: int) -> WeightSet:
    N = bundle.grid.n_steps
    if not 1 <= k <= N - 1:
        raise IndexError(f"window index {k} outside 1..{N - 1}")
    knots = bundle.grid.knots
    s, t = float(knots[k]), float(knots[k + 1])
    Ys = bundle.variations[:, k, :]
    small = np.abs(Ys) < 1e-12
    if np.any(small):
        m = int(np.argwhere(small)[0][0])
        raise DegenerateVariationError(f"|Y| < 1e-12 on path {m} at t={s:.6g}")
    A = acc.mass_A
    pi1_alpha = acc.U[:, k, :] / Ys
    with np.errstate(divide="ignore", invalid="ignore"):
        # no jumps (A = 0) carries no Poisson-direction information: weights are zero
        pi1 = np.where(A > 0, pi1_alpha / (s * A), 0.0)
        g = np.where(A > 0, (acc.U[:, k + 1, :] - acc.U[:, k, :]) / ((t - s) * A * Ys), 0.0)
    pi2_alpha = bundle.variations[:, k + 1, :] / Ys * acc.mark_mass[:, k, :]
    return WeightSet(
        k=k,
        s=s,
        t=t,
        pi=pi1 - g,
        pi1=pi1,
        pi1_alpha=pi1_alpha,
        g=g,
        pi2_alpha=pi2_alpha,
        jump_term=np.abs(acc.jump_inc[:, :k, :]).sum(axis=1).mean(axis=0),
        compensator_term=np.abs(acc.comp_inc[:, :k, :]).sum(axis=1).mean(axis=0),
    )
