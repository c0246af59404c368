import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfmmc.estimator import (
    EstimatorInput, ProductInput, estimate_all_sorted, estimate_naive, estimate_product_naive, localized_terms,
)
from mfmmc.localization import Laplace, NoLocalizer, OneSidedExp

LOCALIZERS = [NoLocalizer(), OneSidedExp(1.7), Laplace(0.8)]


def random_input(rng, M, loc, c=0.0, ties=False):
    G = rng.normal(size=M)
    if ties:
        G = np.round(G, 1)
    return EstimatorInput(G, rng.lognormal(size=M), rng.normal(size=M) * 2, loc, c)


@pytest.mark.parametrize("loc", LOCALIZERS)
def test_constant_target(rng, loc):
    inp = random_input(rng, 64, loc)
    inp.F = np.full(64, 7.0)
    for out in (estimate_all_sorted(inp), estimate_naive(inp, inp.G)):
        ok = ~out.fallback
        assert np.all(out.estimate[ok] == 7.0)


def test_cut_average_without_localizer(rng):
    G, F = rng.normal(size=40), rng.normal(size=40)
    inp = EstimatorInput(G, F, np.ones(40), NoLocalizer())
    alpha = np.median(G)
    out = estimate_naive(inp, alpha)
    assert out.estimate[0] == pytest.approx(F[G >= alpha].mean(), rel=1e-14)


def test_largest_conditioning_value_gets_own_target(rng):
    G, F = rng.normal(size=30), rng.normal(size=30)
    out = estimate_all_sorted(EstimatorInput(G, F, np.ones(30), NoLocalizer()))
    top = np.argmax(G)
    assert out.estimate[top] == pytest.approx(F[top], rel=1e-14)


@pytest.mark.parametrize("loc", LOCALIZERS)
@pytest.mark.parametrize("c", [0.0, 0.4])
@pytest.mark.parametrize("ties", [False, True])
def test_sorted_matches_naive(rng, loc, c, ties):
    for M in (2, 8, 64, 300):
        inp = random_input(rng, M, loc, c, ties)
        a = estimate_all_sorted(inp)
        b = estimate_naive(inp, inp.G)
        np.testing.assert_array_equal(a.fallback, b.fallback)
        np.testing.assert_allclose(a.denominator, b.denominator, rtol=1e-10, atol=1e-13)
        np.testing.assert_allclose(a.numerator, b.numerator, rtol=1e-10, atol=1e-13)


@pytest.mark.parametrize("loc", LOCALIZERS)
def test_all_equal_conditioning_values(rng, loc):
    G = np.full(10, 0.3)
    F, pi = rng.normal(size=10), rng.normal(size=10)
    out = estimate_all_sorted(EstimatorInput(G, F, pi, loc))
    w, _ = localized_terms(EstimatorInput(G, F, pi, loc), 0.3)
    expected = np.dot(F, w[:, 0]) / w.sum()
    np.testing.assert_allclose(out.estimate, expected, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), kind=st.sampled_from([0, 1, 2]))
def test_permutation_invariance(seed, kind):
    r = np.random.default_rng(seed)
    inp = random_input(r, 25, LOCALIZERS[kind])
    perm = r.permutation(25)
    a = estimate_all_sorted(inp)
    b = estimate_all_sorted(EstimatorInput(inp.G[perm], inp.F[perm], inp.pi[perm], inp.localizer))
    ok = ~a.fallback[perm]
    np.testing.assert_allclose(a.estimate[perm][ok], b.estimate[ok], rtol=1e-10)


def test_fallback_monotone_in_tolerance(rng):
    inp = random_input(rng, 200, OneSidedExp(0.5))
    flags = [estimate_all_sorted(inp, den_tol=tol).fallback for tol in (1e-10, 1e-3, 1e-2, 1e-1, 1.0)]
    for lo, hi in zip(flags, flags[1:]):
        assert np.all(hi[lo])


def test_fallback_flags_tiny_denominator():
    # both paths lie at or above alpha = 0 and their weights cancel: denominator exactly 0
    inp = EstimatorInput(np.array([0.0, 1.0]), np.array([1.0, 2.0]), np.array([1.0, -1.0]), NoLocalizer())
    out = estimate_naive(inp, 0.0)
    assert out.fallback[0] and np.isnan(out.estimate[0])
    assert estimate_all_sorted(inp).fallback.tolist() == [True, False]


def test_input_validation():
    with pytest.raises(ValueError):
        EstimatorInput(np.zeros(3), np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        EstimatorInput(np.zeros(1), np.zeros(1), np.zeros(1))
    with pytest.raises(ValueError):
        EstimatorInput(np.array([0.0, np.nan]), np.zeros(2), np.zeros(2))


def test_no_overflow_for_large_lambda(rng):
    inp = random_input(rng, 100, OneSidedExp(1e6))
    inp.G = inp.G * 1e3
    out = estimate_all_sorted(inp)
    assert np.all(np.isfinite(out.denominator))


@pytest.mark.parametrize("loc", LOCALIZERS)
def test_product_estimator_reduces_to_one_dimension(rng, loc):
    M = 60
    one = random_input(rng, M, loc)
    G = np.column_stack([one.G, np.zeros(M)])
    pi = np.column_stack([one.pi, np.ones(M)])
    prod = estimate_product_naive(ProductInput(G, one.F, pi, (loc, NoLocalizer())))
    ref = estimate_naive(one, one.G)
    np.testing.assert_allclose(prod.estimate, ref.estimate, rtol=1e-12)


def test_product_estimator_matches_direct_formula(rng):
    M = 20
    G, pi, F = rng.normal(size=(M, 2)), rng.normal(size=(M, 2)), rng.random(M)
    locs = (Laplace(1.0), OneSidedExp(2.0))
    out = estimate_product_naive(ProductInput(G, F, pi, locs))
    m = 7
    w = np.ones(M)
    for i, loc in enumerate(locs):
        single = EstimatorInput(G[:, i], F, pi[:, i], loc)
        w *= localized_terms(single, G[m, i])[0][:, 0]
    assert out.estimate[m] == pytest.approx(np.dot(F, w) / w.sum(), rel=1e-12)
