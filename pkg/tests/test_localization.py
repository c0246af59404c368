import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from mfmmc.errors import LocalizationDegenerateError
from mfmmc.localization import (
    LAMBDA_FLOOR, Laplace, NoLocalizer, OneSidedExp, estimate_lambda, eval_localizer, heaviside, make_localizer,
    multi_lambda_residual, solve_lambda_multi,
)
from mfmmc.model import ModelSpec, levy_mass_A
from mfmmc.paths import TimeGrid, dump_paths, simulate_ensemble
from mfmmc.weights import accumulate_weights, weights_for_window

from conftest import ex51_asset


def test_eval_examples():
    assert [float(v) for v in eval_localizer(Laplace(2.0), 0.0)] == [1.0, 0.5]
    assert [float(v) for v in eval_localizer(OneSidedExp(3.0), -1.0)] == [0.0, 0.0]
    psi, cdf = eval_localizer(Laplace(1.0), np.log(2.0))
    assert psi == pytest.approx(0.25) and cdf == pytest.approx(0.75)
    psi, cdf = eval_localizer(NoLocalizer(), np.array([-1.0, 2.0]))
    assert psi.tolist() == [0.0, 0.0] and cdf.tolist() == [0.0, 0.0]


@pytest.mark.parametrize("loc", [Laplace(0.7), Laplace(5.0), OneSidedExp(0.7), OneSidedExp(5.0)])
def test_densities_integrate_to_one(loc):
    total = integrate.quad(lambda x: float(eval_localizer(loc, x)[0]), -np.inf, 0)[0]
    total += integrate.quad(lambda x: float(eval_localizer(loc, x)[0]), 0, np.inf)[0]
    assert total == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("loc", [Laplace(1.3), OneSidedExp(1.3)])
def test_cdf_monotone_with_limits(loc):
    x = np.linspace(-40, 40, 2001)
    cdf = eval_localizer(loc, x)[1]
    assert np.all(np.diff(cdf) >= 0)
    assert cdf[0] == pytest.approx(0.0, abs=1e-15) and cdf[-1] == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(lam=st.floats(0.01, 50), c=st.floats(-2, 2), x=st.floats(-1e3, 1e3))
def test_heaviside_minus_cdf_bound(lam, c, x):
    psi, cdf = eval_localizer(Laplace(lam), x)
    assert abs(heaviside(x, c) - cdf) <= np.exp(-lam * abs(x)) / 2 + abs(c) + 1e-15


def test_make_localizer():
    assert isinstance(make_localizer("none"), NoLocalizer)
    assert make_localizer("laplace", 2.0) == Laplace(2.0)
    assert make_localizer("onesided", 2.0) == OneSidedExp(2.0)
    with pytest.raises(ValueError):
        make_localizer("onesided")
    with pytest.raises(ValueError):
        Laplace(0.0)


def test_estimate_lambda_examples(rng):
    w = rng.normal(size=100)
    assert estimate_lambda(np.ones(100), w) == pytest.approx(np.sqrt(np.mean(w**2)))
    assert estimate_lambda([1, 1], [3, 4]) == pytest.approx(np.sqrt(12.5))
    with pytest.raises(LocalizationDegenerateError):
        estimate_lambda(np.zeros(5), w[:5])
    assert estimate_lambda([1.0], [0.0]) == LAMBDA_FLOOR


@settings(max_examples=50, deadline=None)
@given(scale=st.floats(0.01, 100), seed=st.integers(0, 2**16))
def test_estimate_lambda_scale_equivariant(scale, seed):
    r = np.random.default_rng(seed)
    v, w = r.random(50) + 0.1, r.normal(size=50)
    assert estimate_lambda(v, scale * w) == pytest.approx(scale * estimate_lambda(v, w), rel=1e-12)


def test_estimate_lambda_from_dumped_paths(tmp_path):
    model = ModelSpec((ex51_asset(),))
    b = simulate_ensemble(model, TimeGrid(16, 1.0), 300, seed=21)
    acc = accumulate_weights(b, model)
    k = 8
    ws = weights_for_window(b, acc, k)
    F = np.maximum(40.0 - b.states[:, k + 1, 0], 0.0)
    lam = estimate_lambda(F * F, ws.pi[:, 0])

    dump_paths(b, tmp_path / "p.csv", tmp_path / "j.csv")
    U = np.zeros((300, 17))
    X = np.zeros((300, 17))
    Y = np.zeros((300, 17))
    for row in csv.DictReader(open(tmp_path / "p.csv")):
        m, j = int(row["path"]), int(row["step"])
        U[m, j], X[m, j], Y[m, j] = float(row["u"]), float(row["x"]), float(row["y"])
    A = levy_mass_A(model.assets[0].levy)
    s, t = k / 16, (k + 1) / 16
    pi = U[:, k] / (Y[:, k] * s * A) - (U[:, k + 1] - U[:, k]) / ((t - s) * A * Y[:, k])
    f2 = np.maximum(40.0 - X[:, k + 1], 0.0) ** 2
    brute = np.sqrt(sum(f * p * p for f, p in zip(f2, pi)) / sum(f2))
    assert lam == pytest.approx(brute, rel=1e-12)


def test_multi_decouples_when_second_weight_vanishes(rng):
    v = rng.random(300) + 0.5
    w = np.column_stack([rng.normal(size=300), np.zeros(300)])
    sol = solve_lambda_multi(v, w)
    assert sol.lam[1] == pytest.approx(LAMBDA_FLOOR)
    assert sol.lam[0] == pytest.approx(estimate_lambda(v, w[:, 0]), rel=1e-8)


def test_multi_symmetry(rng):
    v = rng.random(400) + 0.1
    w = rng.normal(size=(400, 2)) * [1.0, 3.0]
    a = solve_lambda_multi(v, w)
    b = solve_lambda_multi(v, w[:, ::-1])
    np.testing.assert_allclose(a.lam, b.lam[::-1], rtol=1e-10)


def test_multi_residual(rng):
    v = rng.random(1000)
    w = rng.standard_t(4, size=(1000, 2)) * [2.0, 0.5]
    sol = solve_lambda_multi(v, w)
    assert sol.converged
    assert sol.residual < 1e-8
    assert multi_lambda_residual(v, w, sol.lam) == sol.residual


def test_multi_rejects_one_asset(rng):
    with pytest.raises(ValueError):
        solve_lambda_multi(np.ones(5), np.ones((5, 1)))
