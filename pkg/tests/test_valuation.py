import math

import numpy as np
import pytest

from price_sim.app.core.links import DomainError, LinkFunction
from price_sim.app.core.valuation import (
    MarketModel,
    NoiseFamily,
    NoiseSpec,
    buyer_response,
    market_value,
    noise_sigma_for_buffer,
    single_round_regret,
    uncertainty_buffer,
)
from price_sim.app.utils.seeding import make_stream


def test_linear_market_value():
    model = MarketModel(theta_star=np.array([1.0, 1.0]))
    assert market_value(model, [0.6, 0.8], 0.0) == pytest.approx(1.4)


def test_natural_exp_market_value():
    model = MarketModel(theta_star=np.array([1.0, 0.0]), link=LinkFunction.NATURAL_EXP)
    assert market_value(model, [0.0, 1.0], 0.0) == pytest.approx(1.0)


def test_logistic_market_value():
    # sigmoid(x^T theta*) with the sign folded into theta*
    model = MarketModel(theta_star=np.array([-1.0, 0.0]), link=LinkFunction.LOGISTIC_SIGMOID)
    assert market_value(model, [1.0, 0.0], 0.0) == pytest.approx(0.268941, abs=1e-6)


def test_noise_enters_before_the_link():
    model = MarketModel(theta_star=np.array([1.0, 0.0]), link=LinkFunction.NATURAL_EXP)
    assert market_value(model, [1.0, 0.0], 0.5) == pytest.approx(math.exp(1.5))


@pytest.mark.parametrize(
    "v, p, accepted", [(1.414, 1.0, True), (1.0, 1.0, True), (1.0, 1.0000001, False)]
)
def test_buyer_response(v, p, accepted):
    assert buyer_response(v, p).accepted is accepted


def test_uncertainty_buffer():
    assert uncertainty_buffer(0.0, 2.0, 100) == 0.0
    expected = math.sqrt(2.0 * math.log(2.0)) * 0.001 * math.log(10_000)
    assert uncertainty_buffer(0.001, 2.0, 10_000) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.0108443, abs=1e-7)


def test_uncertainty_buffer_needs_eight_rounds():
    with pytest.raises(DomainError):
        uncertainty_buffer(1.0, 2.0, 7)


def test_noise_sigma_inverts_the_buffer():
    sigma = noise_sigma_for_buffer(0.01, 2.0, 10_000)
    assert uncertainty_buffer(sigma, 2.0, 10_000) == pytest.approx(0.01)
    with pytest.raises(DomainError):
        noise_sigma_for_buffer(0.01, 1.0, 10_000)


@pytest.mark.parametrize(
    "v, q, p, accepted, expected",
    [
        (1.0, 2.0, 2.5, False, 0.0),
        (2.0, 1.0, 1.5, True, 0.5),
        (2.0, 1.0, 2.5, False, 2.0),
        (2.0, 1.0, None, False, 2.0),
        (1.0, 1.0, None, False, 0.0),
    ],
)
def test_single_round_regret(v, q, p, accepted, expected):
    assert single_round_regret(v, q, p, accepted) == pytest.approx(expected)


def test_noise_spec_validation():
    with pytest.raises(DomainError):
        NoiseSpec(family=NoiseFamily.NONE, sigma=0.1)
    with pytest.raises(DomainError):
        NoiseSpec(family=NoiseFamily.NORMAL, sigma=-1.0)
    with pytest.raises(DomainError):
        NoiseSpec(family=NoiseFamily.NORMAL, sigma=1.0, C=0.5)


def test_uniform_noise_is_bounded_by_sigma():
    draws = NoiseSpec(NoiseFamily.UNIFORM, sigma=0.3).sample(make_stream(0, 2), 10_000)
    assert np.max(np.abs(draws)) <= 0.3


def test_no_noise_draws_zero():
    assert NoiseSpec().sample(make_stream(0, 2)) == 0.0


@pytest.mark.parametrize("k", [1, 2, 3])
def test_normal_noise_respects_the_subgaussian_tail(k):
    sigma = 0.5
    spec = NoiseSpec(NoiseFamily.NORMAL, sigma=sigma, C=2.0)
    draws = spec.sample(make_stream(42, 2), 1_000_000)
    z = k * sigma
    freq = float(np.mean(np.abs(draws) > z))
    stderr = math.sqrt(freq * (1.0 - freq) / draws.size)
    assert freq <= spec.tail_bound(z) + 3.0 * stderr


def test_reserve_never_raises_single_round_regret():
    rng = np.random.default_rng(17)
    # a coarse grid makes ties between v, q and p common
    v, q, p_free = np.round(rng.uniform(0.0, 2.0, size=(3, 100_000)) * 20.0) / 20.0
    for vi, qi, pi in zip(v.tolist(), q.tolist(), p_free.tolist()):
        p = max(qi, pi)
        with_reserve = single_round_regret(vi, qi, p, buyer_response(vi, p).accepted)
        without = single_round_regret(vi, 0.0, pi, buyer_response(vi, pi).accepted)
        assert with_reserve <= without
