"""Mean-field jump-SDE model family.

Each asset follows

    dX = b(t, X, m) dt + sigma(t, X, m) dW + int lam(t, X-, z, m) Ntilde(dz, dt)

where ``m = E[X]`` is the mean-field statistic.  Coefficients come in a few
closed-form families so that every state and mark derivative used by the
weight engine is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np
from scipy import integrate

from .errors import ModelEvaluationError, NumericalIntegrationError, SingularJumpCoefficientError


# ---------------------------------------------------------------------------
# Drift / diffusion coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineMeanField:
    """f(t, x, m) = coef_state * x + coef_mean * m + coef_const."""

    coef_state: float = 0.0
    coef_mean: float = 0.0
    coef_const: float = 0.0

    def value(self, t, x, m):
        return self.coef_state * np.asarray(x, dtype=float) + self.coef_mean * m + self.coef_const

    def dx(self, t, x, m):
        return np.full_like(np.asarray(x, dtype=float), self.coef_state)


@dataclass(frozen=True)
class TimeVaryingTable:
    """Piecewise-linear function of time only; flat extrapolation outside the table."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) != len(self.values) or len(self.times) < 1:
            raise ValueError("table needs matching, non-empty times and values")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("table times must be strictly increasing")

    def value(self, t, x, m):
        v = float(np.interp(t, self.times, self.values))
        return np.full_like(np.asarray(x, dtype=float), v)

    def dx(self, t, x, m):
        return np.zeros_like(np.asarray(x, dtype=float))


CoefficientSpec = Union[AffineMeanField, TimeVaryingTable]


# ---------------------------------------------------------------------------
# Jump amplitudes
# ---------------------------------------------------------------------------


class JumpValues(NamedTuple):
    lam: np.ndarray
    dz: np.ndarray  # d lam / dz
    dzz: np.ndarray  # d^2 lam / dz^2
    dx: np.ndarray  # M = d lam / dx
    dxz: np.ndarray  # d M / dz


@dataclass(frozen=True)
class LinearMeanField:
    """lam(t, x, z, m) = c * z * (m + x)."""

    c: float

    def value(self, t, x, z, m):
        return self.c * z * (m + x)

    def dx(self, t, x, z, m):
        return self.c * z + 0.0 * x

    def evaluate(self, t, x, z, m) -> JumpValues:
        x, z = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(z, dtype=float))
        s = m + x
        return JumpValues(
            lam=self.c * z * s,
            dz=self.c * s,
            dzz=np.zeros_like(z),
            dx=self.c * z,
            dxz=np.full_like(z, self.c),
        )


@dataclass(frozen=True)
class PureAmplitude:
    """lam(t, x, z, m) = |z|^2, independent of the state."""

    def value(self, t, x, z, m):
        return z * z + 0.0 * x

    def dx(self, t, x, z, m):
        return 0.0 * (x + z)

    def evaluate(self, t, x, z, m) -> JumpValues:
        x, z = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(z, dtype=float))
        zero = np.zeros_like(z)
        return JumpValues(lam=z * z, dz=2.0 * z, dzz=np.full_like(z, 2.0), dx=zero, dxz=zero)


@dataclass(frozen=True)
class AffineInZ:
    """lam(t, x, z, m) = lambda0(t, m) * z + lam * x.

    ``lambda0`` is a coefficient spec evaluated with a dummy state, so only its
    time and mean dependence matter.
    """

    lambda0: CoefficientSpec
    lam: float = 0.0

    def _l0(self, t, x, m):
        # coef_state of an affine lambda0 is ignored: lambda0 depends on (t, m) only
        if isinstance(self.lambda0, AffineMeanField):
            return np.full_like(x, self.lambda0.coef_mean * m + self.lambda0.coef_const)
        return self.lambda0.value(t, x, m)

    def value(self, t, x, z, m):
        x, z = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(z, dtype=float))
        return self._l0(t, x, m) * z + self.lam * x

    def dx(self, t, x, z, m):
        return np.full(np.broadcast(np.asarray(x), np.asarray(z)).shape, float(self.lam))

    def evaluate(self, t, x, z, m) -> JumpValues:
        x, z = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(z, dtype=float))
        l0 = self._l0(t, x, m)
        zero = np.zeros_like(z)
        return JumpValues(lam=l0 * z + self.lam * x, dz=l0, dzz=zero, dx=np.full_like(z, self.lam), dxz=zero)


JumpCoefficientSpec = Union[LinearMeanField, PureAmplitude, AffineInZ]


# ---------------------------------------------------------------------------
# Levy measures (finite activity)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformSymmetric:
    """kappa(z) = rate on |z| < half_width."""

    half_width: float = 0.5
    rate: float = 1.0

    def __post_init__(self):
        if self.half_width <= 0 or self.rate < 0:
            raise ValueError("UniformSymmetric needs half_width > 0 and rate >= 0")

    @property
    def total_intensity(self) -> float:
        return 2.0 * self.half_width * self.rate

    def density(self, z):
        z = np.asarray(z, dtype=float)
        return np.where(np.abs(z) < self.half_width, self.rate, 0.0)

    def grad_log(self, z):
        z = np.asarray(z, dtype=float)
        return np.where(np.abs(z) < self.half_width, 0.0, np.nan)

    def mass_closed_form(self) -> float:
        h = self.half_width
        if h <= 1.0:
            return self.rate * 2.0 * h**3 / 3.0
        return self.rate * (2.0 / 3.0 + 2.0 * (h - 1.0))

    def pieces(self) -> list[tuple[float, float]]:
        h = self.half_width
        cuts = [-h] + [c for c in (-1.0, 0.0, 1.0) if -h < c < h] + [h]
        return list(zip(cuts[:-1], cuts[1:]))

    def sample_sizes(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(-self.half_width, self.half_width, size=n)


@dataclass(frozen=True)
class Kou:
    """Double-exponential jump sizes with total intensity ``rate``.

    The negative branch decays like exp(-eta2 |z|) so that the measure is finite.
    """

    rate: float = 10.0
    p: float = 0.6
    eta1: float = 10.0
    eta2: float = 5.0
    tail: float = 30.0  # quadrature truncation at tail / min(eta1, eta2)

    def __post_init__(self):
        if not (0.0 < self.p < 1.0) or self.eta1 <= 0 or self.eta2 <= 0 or self.rate < 0:
            raise ValueError("Kou needs 0 < p < 1, eta1 > 0, eta2 > 0, rate >= 0")

    @property
    def total_intensity(self) -> float:
        return self.rate

    @property
    def z_max(self) -> float:
        return self.tail / min(self.eta1, self.eta2)

    def density(self, z):
        z = np.asarray(z, dtype=float)
        up = self.p * self.eta1 * np.exp(-self.eta1 * np.where(z > 0, z, 0.0))
        down = (1.0 - self.p) * self.eta2 * np.exp(-self.eta2 * np.where(z < 0, -z, 0.0))
        return self.rate * np.where(z > 0, up, np.where(z < 0, down, 0.0))

    def grad_log(self, z):
        z = np.asarray(z, dtype=float)
        return np.where(z > 0, -self.eta1, np.where(z < 0, self.eta2, np.nan))

    def mass_closed_form(self) -> float:
        def side(eta):
            # int_0^1 z^2 eta e^{-eta z} dz + int_1^inf eta e^{-eta z} dz
            head = (2.0 / eta**2) * (1.0 - np.exp(-eta) * (1.0 + eta + 0.5 * eta**2))
            return head + np.exp(-eta)

        return self.rate * (self.p * side(self.eta1) + (1.0 - self.p) * side(self.eta2))

    def pieces(self) -> list[tuple[float, float]]:
        zm = self.z_max
        pos = [(0.0, min(1.0, zm))] + ([(1.0, zm)] if zm > 1.0 else [])
        neg = [(-b, -a) for a, b in reversed(pos)]
        return neg + pos

    def sample_sizes(self, rng: np.random.Generator, n: int) -> np.ndarray:
        up = rng.random(n) < self.p
        e = rng.standard_exponential(n)
        return np.where(up, e / self.eta1, -e / self.eta2)


LevyMeasureSpec = Union[UniformSymmetric, Kou]


def levy_density(measure: LevyMeasureSpec, z):
    return measure.density(z)


def levy_grad_log(measure: LevyMeasureSpec, z):
    """Gradient of log kappa; NaN where kappa vanishes (callers must not use it there)."""
    return measure.grad_log(z)


def levy_mass_A(measure: LevyMeasureSpec, closed_form: bool = True) -> float:
    """Normalising mass int (1 ^ |z|^2) kappa(z) dz."""
    if measure.total_intensity == 0.0:
        return 0.0
    if closed_form:
        return float(measure.mass_closed_form())

    def f(z):
        return min(1.0, z * z) * float(measure.density(z))

    total = 0.0
    for lo, hi in _mass_pieces(measure):
        val, err = integrate.quad(f, lo, hi, epsrel=1e-12, epsabs=0.0, limit=200)
        if not np.isfinite(val) or err > 1e-10 * max(abs(val), 1e-300):
            raise NumericalIntegrationError(f"quadrature for the Levy mass did not converge on [{lo}, {hi}]")
        total += val
    return total


def _mass_pieces(measure):
    if isinstance(measure, Kou):
        return [(-np.inf, -1.0), (-1.0, 0.0), (0.0, 1.0), (1.0, np.inf)]
    return measure.pieces()


def sample_jumps(measure: LevyMeasureSpec, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Jump sizes falling in one interval of length ``dt``."""
    lam = measure.total_intensity * dt
    if lam <= 0.0:
        return np.empty(0)
    return measure.sample_sizes(rng, int(rng.poisson(lam)))


# ---------------------------------------------------------------------------
# Payoffs and market
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Put:
    strike: float
    dimension = 1

    def __call__(self, x):
        return np.maximum(self.strike - _scalar_state(x), 0.0)


@dataclass(frozen=True)
class MaxPut:
    strike: float
    dimension = 2

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != 2:
            raise ValueError(f"MaxPut expects 2-asset states, got trailing dimension {x.shape[-1]}")
        return np.maximum(self.strike - x.max(axis=-1), 0.0)


@dataclass(frozen=True)
class Basket:
    """Inner payoff applied to the weighted sum w . x."""

    weights: tuple[float, ...]
    inner: "PayoffSpec"

    @property
    def dimension(self) -> int:
        return len(self.weights)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != len(self.weights):
            raise ValueError(f"Basket of {len(self.weights)} assets got states of dimension {x.shape[-1]}")
        return self.inner(x @ np.asarray(self.weights, dtype=float))


PayoffSpec = Union[Put, MaxPut, Basket]


def _scalar_state(x):
    x = np.asarray(x, dtype=float)
    if x.ndim >= 1 and x.shape[-1] == 1 and x.ndim > 1:
        return x[..., 0]
    return x


def eval_payoff(payoff: PayoffSpec, x):
    """Vectorised payoff; ``x`` is a scalar/array of states (1 asset) or (..., d) array."""
    x = np.asarray(x, dtype=float)
    d = payoff.dimension
    if d > 1 and (x.ndim == 0 or x.shape[-1] != d):
        raise ValueError(f"payoff expects dimension {d}, got shape {x.shape}")
    return payoff(x)


@dataclass(frozen=True)
class MarketSpec:
    rate: float = 0.0
    horizon: float = 1.0

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")


# ---------------------------------------------------------------------------
# Assets and models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssetSpec:
    drift: CoefficientSpec
    diffusion: CoefficientSpec
    jump: JumpCoefficientSpec
    levy: LevyMeasureSpec
    x0: float


@dataclass(frozen=True)
class ModelSpec:
    """One or two independent mean-field assets; each asset's mean enters only its own coefficients."""

    assets: tuple[AssetSpec, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.assets) not in (1, 2):
            raise ValueError("only 1- and 2-asset models are supported")

    @property
    def dimension(self) -> int:
        return len(self.assets)

    @property
    def initial_state(self) -> np.ndarray:
        return np.array([a.x0 for a in self.assets], dtype=float)


class CoefficientValues(NamedTuple):
    b: np.ndarray
    sigma: np.ndarray
    A: np.ndarray  # d b / dx
    B: np.ndarray  # d sigma / dx


def eval_coefficients(asset: AssetSpec, t: float, x, m: float) -> CoefficientValues:
    x = np.asarray(x, dtype=float)
    out = CoefficientValues(
        b=asset.drift.value(t, x, m),
        sigma=asset.diffusion.value(t, x, m),
        A=asset.drift.dx(t, x, m),
        B=asset.diffusion.dx(t, x, m),
    )
    for name, v in zip(("drift", "diffusion", "drift derivative", "diffusion derivative"), out):
        if not np.all(np.isfinite(v)):
            raise ModelEvaluationError(f"{name} is not finite at t={t}, m={m}")
    return out


def eval_jump(asset: AssetSpec, t: float, x, z, m: float) -> JumpValues:
    vals = asset.jump.evaluate(t, x, z, m)
    for name, v in zip(JumpValues._fields, vals):
        if not np.all(np.isfinite(v)):
            raise ModelEvaluationError(f"jump coefficient component {name} is not finite at t={t}")
    if np.any(vals.dz == 0.0):
        raise SingularJumpCoefficientError(f"d lam / dz vanishes at t={t}; the weight kernel divides by it")
    return vals
