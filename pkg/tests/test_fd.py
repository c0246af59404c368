import numpy as np
import pytest

from mfmmc.errors import UnsupportedModelError
from mfmmc.fd import FDGrid, solve_american_pide, solve_moment_ode
from mfmmc.model import AffineMeanField, AssetSpec, Kou, MarketSpec, ModelSpec, PureAmplitude, Put, TimeVaryingTable

from conftest import ex51_asset, ex52_asset
from oracles import binomial_american_put


def test_moment_ode_examples():
    flat = ModelSpec((ex52_asset(a=0.0),))
    assert np.allclose(solve_moment_ode(flat, 1.0).values, 10.0)
    m1 = solve_moment_ode(ModelSpec((ex51_asset(),)), 1.0)
    assert m1.values[-1] == pytest.approx(np.exp(2.0), rel=1e-10)
    m2 = solve_moment_ode(ModelSpec((ex52_asset(),)), 1.0)
    assert m2.values[-1] == pytest.approx(10 * np.e, rel=1e-10)
    assert m2(0.5) == pytest.approx(10 * np.exp(0.5), rel=1e-8)


def test_moment_ode_time_table():
    asset = AssetSpec(TimeVaryingTable((0.0, 1.0), (1.0, 3.0)), AffineMeanField(), PureAmplitude(), Kou(), 0.0)
    assert solve_moment_ode(ModelSpec((asset,)), 1.0).values[-1] == pytest.approx(2.0, rel=1e-12)


def test_moment_ode_rejects_two_assets():
    with pytest.raises(UnsupportedModelError):
        solve_moment_ode(ModelSpec((ex52_asset(), ex52_asset())), 1.0)


def test_deterministic_state_gives_payoff():
    asset = AssetSpec(AffineMeanField(), AffineMeanField(), PureAmplitude(), Kou(rate=0.0), 50.0)
    res = solve_american_pide(ModelSpec((asset,)), Put(60.0), MarketSpec(0.0, 1.0), FDGrid(200, 50, x_max=240.0))
    np.testing.assert_allclose(res.values, res.payoff, atol=1e-12)


@pytest.fixture(scope="module")
def ex52_fd():
    model = ModelSpec((ex52_asset(x0=60.0),))
    return model, solve_american_pide(model, Put(60.0), MarketSpec(0.05, 1.0))


def test_surface_invariants(ex52_fd):
    model, res = ex52_fd
    assert np.all(res.values >= res.payoff - 1e-12)
    assert np.all(np.diff(res.values) <= 1e-8)
    eur = solve_american_pide(model, Put(60.0), MarketSpec(0.05, 1.0), american=False)
    assert np.all(eur.values <= res.values + 1e-10)


def test_csv_slice(tmp_path, ex52_fd):
    _, res = ex52_fd
    res.to_csv(tmp_path / "fd.csv")
    lines = (tmp_path / "fd.csv").read_text().splitlines()
    assert lines[0] == "x,value,payoff"
    assert len(lines) == res.x.size + 1


@pytest.mark.slow
@pytest.mark.parametrize("x0", [10.0, 60.0])
def test_binomial_cross_check(x0):
    model = ModelSpec((ex52_asset(x0=x0, rate=0.0),))
    fd = solve_american_pide(model, Put(60.0), MarketSpec(0.05, 1.0)).price
    tree = binomial_american_put(x0, 60.0, 0.5, 0.05, 1.0, lambda t: x0 * np.exp(t))
    assert abs(fd - tree) / tree <= 1e-3


@pytest.mark.slow
def test_grid_convergence():
    model = ModelSpec((ex52_asset(x0=60.0),))
    coarse = solve_american_pide(model, Put(60.0), MarketSpec(0.05, 1.0)).price
    fine = solve_american_pide(model, Put(60.0), MarketSpec(0.05, 1.0), FDGrid(2000, 4000)).price
    assert abs(fine - coarse) / fine < 1e-3
