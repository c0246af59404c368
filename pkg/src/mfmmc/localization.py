"""Localizing functions and their data-driven parameters.

A localizer is a density psi with cumulative Psi.  In the estimator the
Heaviside weight H(x) = 1{x >= 0} + c is replaced by psi(x) + Pi (H(x) - Psi(x)),
which leaves the expectation unchanged and damps the weight far from the
conditioning point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import optimize

from .errors import LocalizationDegenerateError

LAMBDA_FLOOR = 1e-6
LAMBDA_CAP = 1e6


@dataclass(frozen=True)
class Laplace:
    lam: float

    kind = "laplace"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("Laplace localizer needs lambda > 0")


@dataclass(frozen=True)
class OneSidedExp:
    lam: float

    kind = "onesided"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("one-sided localizer needs lambda > 0")


@dataclass(frozen=True)
class NoLocalizer:
    kind = "none"
    lam = 0.0


Localizer = Union[Laplace, OneSidedExp, NoLocalizer]


def make_localizer(kind: str, lam: float | None = None) -> Localizer:
    kind = kind.lower()
    if kind == "none":
        return NoLocalizer()
    if lam is None:
        raise ValueError(f"localizer {kind!r} needs a lambda")
    if kind == "laplace":
        return Laplace(lam)
    if kind in ("onesided", "onesidedexp", "one-sided"):
        return OneSidedExp(lam)
    raise ValueError(f"unknown localizer {kind!r}")


def eval_localizer(loc: Localizer, x):
    """Return ``(psi(x), Psi(x))`` elementwise."""
    x = np.asarray(x, dtype=float)
    if isinstance(loc, NoLocalizer):
        return np.zeros_like(x), np.zeros_like(x)
    lam = loc.lam
    decay = np.exp(-lam * np.abs(x))
    if isinstance(loc, Laplace):
        psi = 0.5 * lam * decay
        cdf = np.where(x < 0, 0.5 * decay, 1.0 - 0.5 * decay)
        return psi, cdf
    pos = x >= 0
    return np.where(pos, lam * decay, 0.0), np.where(pos, 1.0 - decay, 0.0)


def heaviside(x, c: float = 0.0):
    return (np.asarray(x) >= 0).astype(float) + c


def estimate_lambda(values, weights) -> float:
    """Optimal one-dimensional parameter sqrt(E[f^2 Pi^2] / E[f^2]), clamped."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if np.any(values < 0):
        raise ValueError("values must be nonnegative (they are squared targets)")
    total = values.sum()
    if total == 0.0:
        raise LocalizationDegenerateError("all target values vanish; localization parameter undefined")
    lam = np.sqrt(np.dot(values, weights * weights) / total)
    return float(np.clip(lam, LAMBDA_FLOOR, LAMBDA_CAP))


@dataclass
class MultiLambda:
    lam: np.ndarray
    converged: bool
    iterations: int  # -1 when the accelerated solve succeeded
    residual: float


def _multi_rhs(values, weights, lam):
    sq = weights * weights
    out = np.empty(lam.size)
    for j in range(lam.size):
        others = np.ones(values.size)
        for i in range(lam.size):
            if i != j:
                others = others * (lam[i] ** 2 + sq[:, i])
        base = values * others
        out[j] = np.dot(base, sq[:, j]) / base.sum()
    return out


def multi_lambda_residual(values, weights, lam) -> float:
    """Max relative residual of lam_j^2 against the coupled fixed-point equations."""
    lam = np.asarray(lam, dtype=float)
    rhs = _multi_rhs(np.asarray(values, float), np.asarray(weights, float), lam)
    return float(np.max(np.abs(lam**2 - rhs) / np.maximum(lam**2, LAMBDA_FLOOR**2)))


def solve_lambda_multi(values, weights, tol: float = 1e-8, max_iter: int = 200) -> MultiLambda:
    """Fixed point of lam_j^2 = E[f^2 Pi_j^2 prod_{i!=j}(lam_i^2 + Pi_i^2)] / E[f^2 prod_{i!=j}(...)].

    ``weights`` has shape (M, d).  The map on lam^2 is solved with Steffensen
    acceleration (plain iteration contracts slowly when one asset's weights
    dominate), started from the single-asset parameters.  If that fails the
    plain iteration runs up to ``max_iter`` steps and the last iterate is
    returned, flagged, when it has not met ``tol``.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 2 or weights.shape[1] < 2:
        raise ValueError("solve_lambda_multi needs per-asset weights of shape (M, d>=2)")
    if values.sum() == 0.0:
        raise LocalizationDegenerateError("all target values vanish; localization parameter undefined")
    lam = np.array([estimate_lambda(values, weights[:, j]) for j in range(weights.shape[1])])

    def step(sq):
        # extrapolated iterates can leave the positive orthant; evaluate the map at the clamped point
        sq = np.clip(sq, LAMBDA_FLOOR**2, LAMBDA_CAP**2)
        return np.clip(_multi_rhs(values, weights, np.sqrt(sq)), LAMBDA_FLOOR**2, LAMBDA_CAP**2)

    try:
        sq = optimize.fixed_point(step, lam**2, xtol=tol * 1e-2, maxiter=max_iter, method="del2")
        if np.all(np.isfinite(sq)) and np.all(sq > 0):
            sol = np.sqrt(sq)
            return MultiLambda(sol, True, -1, multi_lambda_residual(values, weights, sol))
    except RuntimeError:
        pass
    for it in range(1, max_iter + 1):
        new = np.sqrt(step(lam**2))
        change = np.max(np.abs(new - lam) / lam)
        lam = new
        if change < tol:
            return MultiLambda(lam, True, it, multi_lambda_residual(values, weights, lam))
    return MultiLambda(lam, False, max_iter, multi_lambda_residual(values, weights, lam))
