"""TOML run configurations.

A file has ``[market]``, ``[simulation]``, ``[estimator]``, ``[payoff]``,
optional ``[fd]`` and ``[experiment]`` tables, and one ``[[assets]]`` entry per
asset with ``drift``, ``diffusion``, ``jump`` and ``levy`` sub-tables.  Shipped
files live in ``mfmmc/configs`` and can be referred to by bare name.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .fd import FDGrid
from .model import (
    AffineInZ,
    AffineMeanField,
    AssetSpec,
    Basket,
    Kou,
    LinearMeanField,
    MarketSpec,
    MaxPut,
    ModelSpec,
    PureAmplitude,
    Put,
    TimeVaryingTable,
    UniformSymmetric,
)
from .pricer import PricingConfig

SHIPPED = ("example1", "example2", "example3_conservative", "example3_balanced", "example3_aggressive")


@dataclass
class RunConfig:
    pricing: PricingConfig
    fd: FDGrid = field(default_factory=FDGrid)
    n_list: tuple[int, ...] = (64, 128, 256, 512)
    mc_list: tuple[int, ...] = (200, 500, 1000, 2000)
    replications: int = 20
    name: str = "custom"
    raw: dict = field(default_factory=dict)


def _get(table: dict, key: str, where: str, default=None, required=False):
    if key in table:
        return table[key]
    if required:
        raise ConfigError(f"missing key {key!r} in [{where}]")
    return default


def _coefficient(t: dict, where: str):
    kind = _get(t, "kind", where, "affine")
    if kind == "affine":
        unknown = set(t) - {"kind", "state", "mean", "const"}
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)} in [{where}]")
        return AffineMeanField(float(t.get("state", 0.0)), float(t.get("mean", 0.0)), float(t.get("const", 0.0)))
    if kind == "table":
        return TimeVaryingTable(tuple(_get(t, "times", where, required=True)), tuple(_get(t, "values", where, required=True)))
    raise ConfigError(f"unknown coefficient kind {kind!r} in [{where}]")


def _jump(t: dict, where: str):
    kind = _get(t, "kind", where, required=True)
    if kind == "linear_mean_field":
        return LinearMeanField(float(_get(t, "c", where, required=True)))
    if kind == "pure_amplitude":
        return PureAmplitude()
    if kind == "affine_in_z":
        l0 = _coefficient(_get(t, "lambda0", where, required=True), where + ".lambda0")
        return AffineInZ(l0, float(t.get("lam", 0.0)))
    raise ConfigError(f"unknown jump kind {kind!r} in [{where}]")


def _levy(t: dict, where: str):
    kind = _get(t, "kind", where, required=True)
    args = {k: float(v) for k, v in t.items() if k != "kind"}
    try:
        if kind == "uniform":
            return UniformSymmetric(**args)
        if kind == "kou":
            return Kou(**args)
    except TypeError as exc:
        raise ConfigError(f"bad parameters in [{where}]: {exc}") from None
    raise ConfigError(f"unknown levy kind {kind!r} in [{where}]")


def _payoff(t: dict):
    kind = _get(t, "kind", "payoff", required=True)
    if kind == "put":
        return Put(float(_get(t, "strike", "payoff", required=True)))
    if kind == "maxput":
        return MaxPut(float(_get(t, "strike", "payoff", required=True)))
    if kind == "basket":
        inner = _payoff(_get(t, "inner", "payoff", required=True))
        return Basket(tuple(float(w) for w in _get(t, "weights", "payoff", required=True)), inner)
    raise ConfigError(f"unknown payoff kind {kind!r}")


def parse_config(data: dict, name: str = "custom") -> RunConfig:
    assets_raw = _get(data, "assets", "root", required=True)
    assets = []
    for i, a in enumerate(assets_raw):
        where = f"assets[{i}]"
        assets.append(
            AssetSpec(
                drift=_coefficient(_get(a, "drift", where, {}), where + ".drift"),
                diffusion=_coefficient(_get(a, "diffusion", where, {}), where + ".diffusion"),
                jump=_jump(_get(a, "jump", where, required=True), where + ".jump"),
                levy=_levy(_get(a, "levy", where, required=True), where + ".levy"),
                x0=float(_get(a, "x0", where, required=True)),
            )
        )
    try:
        model = ModelSpec(tuple(assets))
        market_t = data.get("market", {})
        market = MarketSpec(float(market_t.get("rate", 0.0)), float(market_t.get("horizon", 1.0)))
        sim = data.get("simulation", {})
        est = data.get("estimator", {})
        payoff = _payoff(_get(data, "payoff", "root", required=True))
        if payoff.dimension != model.dimension:
            raise ConfigError(f"payoff dimension {payoff.dimension} does not match {model.dimension} assets")
        pricing = PricingConfig(
            model=model,
            payoff=payoff,
            market=market,
            n_steps=int(sim.get("n_steps", 512)),
            path_count=int(sim.get("path_count", 2000)),
            seed=int(sim.get("seed", 0)),
            threads=int(sim.get("threads", 1)),
            block_size=int(sim.get("block_size", 1024)),
            node_count=int(sim.get("node_count", 64)),
            kernel_form=str(sim.get("kernel_form", "divergence")),
            localizer=str(est.get("localizer", "onesided")),
            fixed_lambda=est.get("fixed_lambda"),
            den_tol=float(est.get("den_tol", 1e-10)),
            heaviside_offset=float(est.get("heaviside_offset", 0.0)),
            clip_continuation=bool(est.get("clip_continuation", True)),
        )
        fd_t = data.get("fd", {})
        fd = FDGrid(int(fd_t.get("nodes", 1000)), int(fd_t.get("time_steps", 2000)), fd_t.get("x_max"))
        exp = data.get("experiment", {})
        return RunConfig(
            pricing=pricing,
            fd=fd,
            n_list=tuple(int(n) for n in exp.get("n_list", (64, 128, 256, 512))),
            mc_list=tuple(int(n) for n in exp.get("mc_list", (200, 500, 1000, 2000))),
            replications=int(exp.get("replications", 20)),
            name=name,
            raw=data,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(source: str | Path) -> RunConfig:
    """Load a TOML file, or a shipped config by name (``example2``)."""
    path = Path(source)
    if not path.exists():
        name = str(source).removesuffix(".toml")
        if name not in SHIPPED:
            raise ConfigError(f"no config file {source!r} and no shipped config of that name (have {', '.join(SHIPPED)})")
        text = resources.files("mfmmc").joinpath("configs", name + ".toml").read_text()
        return parse_config(tomllib.loads(text), name)
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, path.stem)
