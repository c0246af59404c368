import numpy as np
import pytest
from scipy import integrate

from mfmmc.errors import ModelEvaluationError, SingularJumpCoefficientError
from mfmmc.model import (
    AffineInZ, AffineMeanField, AssetSpec, Basket, Kou, LinearMeanField, MaxPut, ModelSpec, PureAmplitude, Put,
    TimeVaryingTable, UniformSymmetric, eval_coefficients, eval_jump, eval_payoff, levy_mass_A, sample_jumps,
)
from mfmmc.quadrature import ZQuadrature


def test_affine_coefficients():
    f = AffineMeanField(2.0, 3.0, 1.0)
    assert f.value(0.0, 1.5, 2.0) == pytest.approx(2 * 1.5 + 3 * 2 + 1)
    assert f.dx(0.0, np.ones(3), 2.0).tolist() == [2.0, 2.0, 2.0]


def test_time_table_interpolates_and_has_no_state_derivative():
    f = TimeVaryingTable((0.0, 1.0), (1.0, 3.0))
    assert f.value(0.5, np.zeros(2), 0.0).tolist() == [2.0, 2.0]
    assert f.dx(0.5, np.zeros(2), 0.0).tolist() == [0.0, 0.0]
    with pytest.raises(ValueError):
        TimeVaryingTable((1.0, 0.0), (1.0, 2.0))


def test_linear_mean_field_derivatives():
    jv = LinearMeanField(2.0).evaluate(0.0, 1.0, 0.3, 0.5)
    assert jv.lam == pytest.approx(2 * 0.3 * 1.5)
    assert jv.dz == pytest.approx(3.0)
    assert jv.dx == pytest.approx(0.6)
    # d M / dz = c, independent of the state
    assert jv.dxz == pytest.approx(2.0)


@pytest.mark.parametrize("measure,expected", [
    (UniformSymmetric(0.5, 1.0), 2 * 0.5**3 / 3),
    (UniformSymmetric(0.5, 10.0), 10 * 2 * 0.5**3 / 3),
    (UniformSymmetric(2.0, 1.0), 2 / 3 + 2.0),
])
def test_uniform_mass(measure, expected):
    assert levy_mass_A(measure) == pytest.approx(expected, rel=1e-14)
    assert levy_mass_A(measure, closed_form=False) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("kou", [Kou(), Kou(rate=1.0, p=0.3, eta1=3.0, eta2=0.7), Kou(rate=2.0, p=0.5, eta1=25.0, eta2=25.0)])
def test_kou_mass_closed_form_matches_quadrature(kou):
    ref = 0.0
    for lo, hi in ((-np.inf, -1.0), (-1.0, 0.0), (0.0, 1.0), (1.0, np.inf)):
        ref += integrate.quad(lambda z: min(1.0, z * z) * float(kou.density(z)), lo, hi, epsabs=0, epsrel=1e-13)[0]
    assert levy_mass_A(kou) == pytest.approx(ref, rel=1e-10)


def test_kou_density_integrates_to_rate():
    kou = Kou(rate=3.0)
    total = sum(integrate.quad(lambda z: float(kou.density(z)), lo, hi)[0] for lo, hi in ((-np.inf, 0), (0, np.inf)))
    assert total == pytest.approx(3.0, rel=1e-10)


def test_kou_grad_log_signs():
    kou = Kou(eta1=10.0, eta2=5.0)
    assert kou.grad_log(0.2) == -10.0
    assert kou.grad_log(-0.2) == 5.0


@pytest.mark.parametrize("measure", [UniformSymmetric(0.5, 10.0), Kou(), UniformSymmetric(1.5, 2.0)])
def test_quadrature_reproduces_total_intensity(measure):
    q = ZQuadrature.for_measure(measure)
    assert q.weights.sum() == pytest.approx(measure.total_intensity, rel=1e-8)
    assert np.all(measure.density(q.nodes) > 0)


def test_quadrature_exact_for_polynomials_on_uniform():
    q = ZQuadrature.for_measure(UniformSymmetric(0.5, 2.0), node_count=16)
    assert q.integrate(q.nodes**4) == pytest.approx(2.0 * 2 * 0.5**5 / 5, rel=1e-13)


def test_empty_quadrature_when_no_jumps():
    q = ZQuadrature.for_measure(Kou(rate=0.0))
    assert q.node_count == 0
    assert q.integrate(np.zeros((3, 0))).tolist() == [0.0, 0.0, 0.0]


def test_sample_jumps_counts_follow_intensity(rng):
    kou = Kou(rate=10.0)
    n = [sample_jumps(kou, 0.1, rng).size for _ in range(4000)]
    assert np.mean(n) == pytest.approx(1.0, abs=4 * np.sqrt(1.0 / 4000))


def test_kou_marks_have_right_mean(rng):
    kou = Kou(p=0.6, eta1=10.0, eta2=5.0)
    z = kou.sample_sizes(rng, 200_000)
    assert z.mean() == pytest.approx(0.6 / 10 - 0.4 / 5, abs=4 * z.std() / np.sqrt(z.size))


def test_singular_jump_derivative_raises():
    asset = AssetSpec(AffineMeanField(), AffineMeanField(), PureAmplitude(), Kou(), 1.0)
    with pytest.raises(SingularJumpCoefficientError):
        eval_jump(asset, 0.0, 1.0, 0.0, 1.0)


def test_nonfinite_coefficient_names_the_term():
    asset = AssetSpec(AffineMeanField(np.inf), AffineMeanField(), PureAmplitude(), Kou(), 1.0)
    with pytest.raises(ModelEvaluationError, match="drift"):
        eval_coefficients(asset, 0.0, np.ones(2), 1.0)


def test_affine_in_z_uses_time_and_mean_only():
    jump = AffineInZ(AffineMeanField(coef_state=5.0, coef_mean=2.0, coef_const=1.0), lam=0.5)
    jv = jump.evaluate(0.0, 3.0, 0.4, 2.0)
    assert jv.dz == pytest.approx(5.0)
    assert jv.lam == pytest.approx(5.0 * 0.4 + 0.5 * 3.0)
    assert jv.dx == pytest.approx(0.5)


def test_payoffs():
    assert eval_payoff(Put(60.0), np.array([10.0, 70.0])).tolist() == [50.0, 0.0]
    assert eval_payoff(MaxPut(80.0), np.array([[1.0, 10.0]])).tolist() == [70.0]
    basket = Basket((0.5, 0.5), Put(80.0))
    assert eval_payoff(basket, np.array([[1.0, 10.0]])).tolist() == [74.5]
    with pytest.raises(ValueError):
        eval_payoff(basket, np.array([1.0, 2.0, 3.0]))


def test_model_dimension_limits():
    a = AssetSpec(AffineMeanField(), AffineMeanField(), PureAmplitude(), Kou(), 1.0)
    assert ModelSpec((a, a)).initial_state.tolist() == [1.0, 1.0]
    with pytest.raises(ValueError):
        ModelSpec((a, a, a))
