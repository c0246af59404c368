"""Localized ratio estimator of E[F | G = alpha].

For one conditioning point the estimate is

    sum_l F_l w_l(alpha) / sum_l w_l(alpha),
    w_l(alpha) = psi(G_l - alpha) + Pi_l [H(G_l - alpha) - Psi(G_l - alpha)].

For the exponential localizers every w_l splits into a part supported on
G_l >= alpha that decays like exp(-lam (G_l - alpha)), a part on G_l < alpha
that decays like exp(-lam (alpha - G_l)), and the constant offset c Pi_l:

    none      A = Pi,              B = 0,              lam = 0
    onesided  A = lam + Pi,        B = 0
    laplace   A = (lam + Pi) / 2,  B = (lam - Pi) / 2

After sorting by G the two parts are a suffix and a prefix of exponentially
discounted sums, which two linear recurrences give for every alpha = G_m at
once.  Each recurrence step multiplies by exp(-lam * gap) <= 1, so nothing
overflows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .localization import Laplace, Localizer, NoLocalizer, OneSidedExp, eval_localizer, heaviside

DEN_TOL = 1e-10


@dataclass
class EstimatorInput:
    G: np.ndarray
    F: np.ndarray
    pi: np.ndarray
    localizer: Localizer = NoLocalizer()
    c: float = 0.0

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        self.pi = np.asarray(self.pi, dtype=float)
        if not (self.G.shape == self.F.shape == self.pi.shape) or self.G.ndim != 1:
            raise ValueError("G, F and pi must be 1-d arrays of equal length")
        if self.G.size < 2:
            raise ValueError("estimator needs at least 2 paths")
        for name in ("G", "F", "pi"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in {name}")


@dataclass
class EstimatorOutput:
    alpha: np.ndarray
    estimate: np.ndarray
    numerator: np.ndarray  # sample means over paths
    denominator: np.ndarray
    fallback: np.ndarray  # bool

    @property
    def fallback_fraction(self) -> float:
        return float(self.fallback.mean()) if self.fallback.size else 0.0


def _constant_value(F: np.ndarray):
    return F[0] if np.all(F == F[0]) else None


def _finish(alpha, num, den, scale, F, den_tol):
    fallback = np.abs(den) < den_tol * scale
    const = _constant_value(F)
    if const is not None:
        # the numerator is exactly const * denominator; skip the rounding of a second sum
        num = const * den
    with np.errstate(divide="ignore", invalid="ignore"):
        est = np.where(fallback, np.nan, num / den)
    if const is not None:
        est = np.where(fallback, np.nan, const)
    return EstimatorOutput(alpha=alpha, estimate=est, numerator=num, denominator=den, fallback=fallback)


def localized_terms(inp: EstimatorInput, alpha) -> tuple[np.ndarray, np.ndarray]:
    """Per-path terms w_l(alpha) and |psi(G_l - alpha)|, broadcast over a trailing alpha axis."""
    x = inp.G[:, None] - np.atleast_1d(np.asarray(alpha, dtype=float))[None, :]
    psi, cdf = eval_localizer(inp.localizer, x)
    w = psi + inp.pi[:, None] * (heaviside(x, inp.c) - cdf)
    return w, np.abs(psi)


def estimate_naive(inp: EstimatorInput, alpha, den_tol: float = DEN_TOL) -> EstimatorOutput:
    """Direct evaluation of both sample means at each requested alpha (O(M) per point)."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    M = inp.G.size
    num = np.empty(alpha.size)
    den = np.empty(alpha.size)
    scale = np.empty(alpha.size)
    mean_abs_pi = np.abs(inp.pi).mean()
    for j in range(alpha.size):
        w, apsi = localized_terms(inp, alpha[j])
        w = w[:, 0]
        num[j] = np.dot(inp.F, w) / M
        den[j] = w.sum() / M
        scale[j] = apsi.mean() + mean_abs_pi
    return _finish(alpha, num, den, scale, inp.F, den_tol)


@numba.njit(cache=True)
def _discounted_scans(g, a, b, lam):
    """up[p] = sum_{q>=p} a_q e^{-lam(g_q-g_p)},  down[p] = sum_{q<p} b_q e^{-lam(g_p-g_q)}  (g sorted)."""
    n = g.size
    up = np.empty(n)
    down = np.empty(n)
    up[n - 1] = a[n - 1]
    for p in range(n - 2, -1, -1):
        up[p] = a[p] + np.exp(-lam * (g[p + 1] - g[p])) * up[p + 1]
    down[0] = 0.0
    for p in range(1, n):
        down[p] = np.exp(-lam * (g[p] - g[p - 1])) * (down[p - 1] + b[p - 1])
    return up, down


def _coefficients(loc: Localizer, pi: np.ndarray):
    if isinstance(loc, NoLocalizer):
        zero = np.zeros_like(pi)
        return 0.0, pi, zero, zero, zero
    lam = float(loc.lam)
    if isinstance(loc, OneSidedExp):
        return lam, lam + pi, np.zeros_like(pi), np.full_like(pi, lam), np.zeros_like(pi)
    if isinstance(loc, Laplace):
        half = np.full_like(pi, 0.5 * lam)
        return lam, 0.5 * (lam + pi), 0.5 * (lam - pi), half, half
    raise TypeError(f"unsupported localizer {loc!r}")


def estimate_all_sorted(inp: EstimatorInput, den_tol: float = DEN_TOL) -> EstimatorOutput:
    """Estimates at every alpha = G_m, in input order, in O(M log M)."""
    M = inp.G.size
    order = np.argsort(inp.G, kind="stable")
    g = inp.G[order]
    pi = inp.pi[order]
    F = inp.F[order]
    lam, A, B, psi_up, psi_down = _coefficients(inp.localizer, pi)

    up_d, down_d = _discounted_scans(g, A, B, lam)
    up_n, down_n = _discounted_scans(g, F * A, F * B, lam)
    # H includes G_l == alpha, so every member of a tie group starts its suffix at the group's first index
    first = np.searchsorted(g, g, side="left")
    off_d = inp.c * pi.sum()
    off_n = inp.c * np.dot(F, pi)
    den_sorted = (up_d[first] + down_d[first] + off_d) / M
    num_sorted = (up_n[first] + down_n[first] + off_n) / M
    if lam > 0:
        up_p, down_p = _discounted_scans(g, psi_up, psi_down, lam)
        psi_mean = (up_p[first] + down_p[first]) / M
    else:
        psi_mean = np.zeros(M)
    scale_sorted = psi_mean + np.abs(pi).mean()

    inv = np.empty(M, dtype=np.int64)
    inv[order] = np.arange(M)
    return _finish(inp.G.copy(), num_sorted[inv], den_sorted[inv], scale_sorted[inv], inp.F, den_tol)


@dataclass
class ProductInput:
    """Multi-asset input: ``G`` and ``pi`` have shape (M, d); one localizer per asset."""

    G: np.ndarray
    F: np.ndarray
    pi: np.ndarray
    localizers: tuple
    c: float = 0.0


def estimate_product_naive(inp: ProductInput, den_tol: float = DEN_TOL) -> EstimatorOutput:
    """Product-weight estimator at every alpha = G_m, by an O(M^2 d) direct evaluation."""
    G = np.asarray(inp.G, float)
    pi = np.asarray(inp.pi, float)
    F = np.asarray(inp.F, float)
    M, d = G.shape
    w = np.ones((M, M))  # rows: path l, columns: conditioning point m
    apsi = np.ones((M, M))
    for i in range(d):
        x = G[:, i][:, None] - G[:, i][None, :]
        psi, cdf = eval_localizer(inp.localizers[i], x)
        w *= psi + pi[:, i][:, None] * (heaviside(x, inp.c) - cdf)
        apsi *= np.abs(psi) + np.abs(pi[:, i])[:, None]
    den = w.sum(axis=0) / M
    num = F @ w / M
    scale = apsi.mean(axis=0)
    return _finish(G.copy(), num, den, scale, F, den_tol)
