import logging
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from price_sim.app.core.ellipsoid import Ellipsoid, contains
from price_sim.app.core.links import DomainError, LinkFunction
from price_sim.app.core.pricing import (
    ConfigError,
    DecisionKind,
    Feedback,
    FeatureNormError,
    IntervalKnowledge,
    MechanismConfig,
    ProtocolError,
    decide_price,
    default_epsilon,
    exploratory_round_bound,
    new_state,
    observe,
    value_bounds,
)
from price_sim.app.core.valuation import buyer_response
from tests.conftest import random_unit

E1 = np.array([1.0, 0.0])


def unit_disc(**overrides) -> MechanismConfig:
    fields = {"dim": 2, "R": 1.0, "epsilon": 0.1}
    fields.update(overrides)
    return MechanismConfig(**fields)


def play(state, x, q, v):
    decision = decide_price(state, x, q)
    feedback = buyer_response(v, math.inf if decision.posted_price is None else decision.posted_price)
    return decision, observe(state, x, q, decision, feedback)


@pytest.mark.parametrize(
    "n, T, delta, expected",
    [(1, 1024, 0.0, 10 / 1024), (10, 10_000, 0.0, 0.01), (10, 10_000, 0.01, 0.4), (2, 100, 0.0, 0.04)],
)
def test_default_epsilon(n, T, delta, expected):
    assert default_epsilon(n, T, delta) == pytest.approx(expected)


def test_exploratory_round_bound():
    assert exploratory_round_bound(2, 1.0, 1.0, 0.1) == pytest.approx(80 * math.log(600))
    assert exploratory_round_bound(2, 1.0, 1.0, 60.0) == pytest.approx(0.0, abs=1e-12)
    assert exploratory_round_bound(5, 2.0, 1.0, 0.01) == pytest.approx(500 * math.log(24_000))
    with pytest.raises(DomainError):
        exploratory_round_bound(1, 1.0, 1.0, 0.1)


def test_new_state_builds_ball_or_interval():
    state = new_state(unit_disc())
    assert isinstance(state.knowledge, Ellipsoid)
    np.testing.assert_array_equal(state.knowledge.shape, np.eye(2))

    state = new_state(MechanismConfig(dim=1, R=2.0))
    assert state.knowledge == IntervalKnowledge(-2.0, 2.0)

    state = new_state(MechanismConfig(dim=1, R=2.0, initial_lower=0.0))
    assert state.knowledge == IntervalKnowledge(0.0, 2.0)


@pytest.mark.parametrize(
    "fields",
    [
        {"dim": 0, "R": 1.0},
        {"dim": 2, "R": -1.0},
        {"dim": 2, "R": 1.0, "S": 0.0},
        {"dim": 2, "R": 1.0, "epsilon": 0.0},
        {"dim": 2, "R": 1.0, "delta": -0.1},
        {"dim": 2, "R": 1.0, "initial_lower": 0.0},
    ],
)
def test_new_state_rejects_invalid_config(fields):
    with pytest.raises(ConfigError):
        new_state(MechanismConfig(**fields))


def test_small_epsilon_for_the_buffer_warns(caplog):
    with caplog.at_level(logging.WARNING):
        new_state(unit_disc(epsilon=0.01, delta=0.1))
    assert "exploratory-round bound does not apply" in caplog.text


def test_decide_explores_at_the_one_dimensional_reserve():
    state = new_state(MechanismConfig(dim=1, R=2.0, initial_lower=0.0, epsilon=0.001))
    decision = decide_price(state, [1.0], 1.0)
    assert decision.kind is DecisionKind.EXPLORATORY
    assert decision.posted_price == pytest.approx(1.0)

    state = observe(state, [1.0], 1.0, decision, Feedback(accepted=True))
    assert state.knowledge == IntervalKnowledge(1.0, 2.0)


def test_decide_skips_unreachable_reserve():
    decision = decide_price(new_state(unit_disc()), E1, 5.0)
    assert decision.kind is DecisionKind.SKIP
    assert decision.posted_price is None


def test_decide_never_skips_without_reserve():
    decision = decide_price(new_state(unit_disc(use_reserve=False)), E1, 5.0)
    assert decision.kind is DecisionKind.EXPLORATORY
    assert decision.posted_price == pytest.approx(0.0)


def test_decide_floors_exploratory_price_at_reserve():
    decision = decide_price(new_state(unit_disc()), E1, 0.3)
    assert decision.kind is DecisionKind.EXPLORATORY
    assert decision.posted_price == pytest.approx(0.3)


def test_decide_posts_conservative_lower_end():
    state = new_state(unit_disc(epsilon=10.0, delta=0.1))
    decision = decide_price(state, E1, 0.0)
    assert decision.kind is DecisionKind.CONSERVATIVE
    assert decision.linear_price == pytest.approx(0.0)

    decision = decide_price(new_state(unit_disc(epsilon=10.0, use_reserve=False)), E1, 0.0)
    assert decision.linear_price == pytest.approx(-1.0)


def test_decide_maps_price_through_the_link():
    state = new_state(unit_disc(link=LinkFunction.LOGISTIC_SIGMOID))
    decision = decide_price(state, E1, 0.5)
    assert decision.linear_price == pytest.approx(0.0)
    assert decision.posted_price == pytest.approx(0.5)


def test_reserve_at_a_midpoint_finer_than_its_ulp_is_not_skipped():
    # halfwidth 1e-20 vanishes next to a midpoint of 0.707
    config = unit_disc(direction_floor=1e-300, allow_conservative_cuts=True)
    knowledge = Ellipsoid(center=np.array([2**-0.5, 0.0]), shape=np.diag([1e-40, 1.0]))
    state = replace(new_state(config), knowledge=knowledge)
    bounds = value_bounds(state, E1)
    assert bounds.midpoint + bounds.halfwidth == bounds.midpoint

    decision = decide_price(state, E1, bounds.midpoint)
    assert decision.kind is DecisionKind.CONSERVATIVE
    assert decision.linear_price == bounds.midpoint

    state = observe(state, E1, bounds.midpoint, decision, Feedback(accepted=False))
    assert state.knowledge.shape[0, 0] == pytest.approx(1e-40 * 4.0 / 9.0)


def test_decide_rejects_long_feature_vectors():
    with pytest.raises(FeatureNormError):
        decide_price(new_state(unit_disc()), [1.0, 1.0], 0.0)


def test_decide_rejects_negative_reserve():
    with pytest.raises(DomainError):
        decide_price(new_state(unit_disc()), E1, -0.1)


def test_rejected_exploratory_price_cuts():
    state = new_state(unit_disc())
    decision = decide_price(state, E1, 0.3)
    state = observe(state, E1, 0.3, decision, Feedback(accepted=False))
    np.testing.assert_allclose(state.knowledge.shape, np.diag([0.751111, 1.213333]), atol=1e-6)
    np.testing.assert_allclose(state.knowledge.center, [-0.133333, 0.0], atol=1e-6)


def test_rejection_far_above_the_midpoint_keeps_the_set():
    state = new_state(unit_disc())
    decision = decide_price(state, E1, 0.8)
    after = observe(state, E1, 0.8, decision, Feedback(accepted=False))
    assert after.knowledge is state.knowledge
    assert after.exploratory_count == 1


def test_acceptance_above_the_midpoint_cuts_deep():
    state = new_state(unit_disc())
    decision = decide_price(state, E1, 0.5)
    after = observe(state, E1, 0.5, decision, Feedback(accepted=True))
    # depth 0.5 keeps {theta_1 >= 0.5}; center moves by (1 + n * depth) / (n + 1)
    np.testing.assert_allclose(after.knowledge.center, [2 / 3, 0.0], atol=1e-12)
    assert value_bounds(after, E1).lower == pytest.approx(1 / 3)


def test_conservative_rounds_do_not_cut_by_default():
    state = new_state(unit_disc(epsilon=10.0))
    decision = decide_price(state, E1, 0.0)
    after = observe(state, E1, 0.0, decision, Feedback(accepted=True))
    assert after.knowledge is state.knowledge
    assert after.exploratory_count == 0


def test_conservative_cuts_when_allowed():
    state = new_state(unit_disc(epsilon=10.0, allow_conservative_cuts=True))
    decision = decide_price(state, E1, 0.0)
    after = observe(state, E1, 0.0, decision, Feedback(accepted=False))
    np.testing.assert_allclose(after.knowledge.center, [-1 / 3, 0.0], atol=1e-12)


def test_observe_refuses_stale_decisions():
    state = new_state(unit_disc())
    decision = decide_price(state, E1, 0.3)
    state = observe(state, E1, 0.3, decision, Feedback(accepted=True))
    with pytest.raises(ProtocolError):
        observe(state, E1, 0.3, decision, Feedback(accepted=True))


def test_observe_returns_a_new_state():
    state = new_state(unit_disc())
    center = state.knowledge.center.copy()
    decision = decide_price(state, E1, 0.0)
    after = observe(state, E1, 0.0, decision, Feedback(accepted=False))
    np.testing.assert_array_equal(state.knowledge.center, center)
    assert (state.round, after.round) == (0, 1)


def test_interval_rejection_lowers_the_upper_end():
    state = new_state(MechanismConfig(dim=1, R=2.0, initial_lower=0.0, epsilon=0.01))
    decision = decide_price(state, [1.0], 0.0)
    state = observe(state, [1.0], 0.0, decision, Feedback(accepted=False))
    assert state.knowledge == IntervalKnowledge(0.0, 1.0)


def test_interval_skip_above_the_upper_end():
    state = new_state(MechanismConfig(dim=1, R=2.0, initial_lower=0.0))
    assert decide_price(state, [1.0], 2.5).kind is DecisionKind.SKIP


dims = st.sampled_from([2, 5, 20])
seeds = st.integers(min_value=0, max_value=2**32 - 1)


@seed(23)
@settings(max_examples=15, deadline=None)
@given(n=dims, s=seeds, use_reserve=st.booleans(), delta=st.sampled_from([0.0, 0.05]))
def test_true_weights_stay_in_the_knowledge_set(n, s, use_reserve, delta):
    rng = np.random.default_rng(s)
    theta = random_unit(rng, n) * rng.uniform(0.2, 1.0)
    config = MechanismConfig(dim=n, R=1.0, delta=delta, use_reserve=use_reserve, total_rounds_hint=1000)
    state = new_state(config)

    for _ in range(1000):
        x = random_unit(rng, n)
        value = float(x @ theta) + rng.uniform(-delta, delta)
        q = max(value + rng.uniform(-0.5, 0.3), 0.0)
        _, state = play(state, x, q, value)
        assert contains(state.knowledge, theta)


@seed(29)
@settings(max_examples=10, deadline=None)
@given(n=st.sampled_from([2, 5]), s=seeds)
def test_exploratory_rounds_stay_within_budget(n, s):
    rng = np.random.default_rng(s)
    theta = random_unit(rng, n) * 0.9
    config = MechanismConfig(dim=n, R=1.0, total_rounds_hint=1000)
    state = new_state(config)

    for _ in range(1000):
        x = random_unit(rng, n)
        _, state = play(state, x, 0.0, float(x @ theta))

    assert state.exploratory_count <= exploratory_round_bound(n, 1.0, 1.0, state.epsilon)


@seed(31)
@settings(max_examples=20, deadline=None)
@given(n=dims, s=seeds, q=st.floats(min_value=0.0, max_value=2.0))
def test_posted_price_never_below_reserve(n, s, q):
    rng = np.random.default_rng(s)
    state = new_state(MechanismConfig(dim=n, R=1.0, epsilon=rng.uniform(0.01, 3.0)))
    decision = decide_price(state, random_unit(rng, n), q)
    if decision.kind is not DecisionKind.SKIP:
        assert decision.posted_price >= q


def random_market(rng, n, delta):
    theta = random_unit(rng, n) * rng.uniform(0.2, 0.9)

    def query():
        x = random_unit(rng, n)
        value = float(x @ theta) + rng.uniform(-delta, delta)
        return x, value

    return query


@seed(37)
@settings(max_examples=15, deadline=None)
@given(n=dims, s=seeds, delta=st.sampled_from([0.0, 0.05]))
def test_conservative_prices_are_always_accepted(n, s, delta):
    rng = np.random.default_rng(s)
    query = random_market(rng, n, delta)
    config = MechanismConfig(dim=n, R=1.0, delta=delta, use_reserve=False, epsilon=1.5)
    state = new_state(config)

    conservative = 0
    for _ in range(1000):
        x, value = query()
        decision, state = play(state, x, 0.0, value)
        if decision.kind is DecisionKind.CONSERVATIVE:
            conservative += 1
            assert decision.linear_price <= value + 1e-9
    assert conservative > 0


@seed(41)
@settings(max_examples=15, deadline=None)
@given(n=dims, s=seeds, delta=st.sampled_from([0.0, 0.05]))
def test_skipped_queries_could_not_have_sold(n, s, delta):
    rng = np.random.default_rng(s)
    query = random_market(rng, n, delta)
    state = new_state(MechanismConfig(dim=n, R=1.0, delta=delta, total_rounds_hint=1000))

    for _ in range(1000):
        x, value = query()
        q = max(value + rng.uniform(-0.3, 0.6), 0.0)
        decision, state = play(state, x, q, value)
        if decision.kind is DecisionKind.SKIP:
            assert q >= value - 1e-9
            assert q - decision.bounds.midpoint >= decision.bounds.halfwidth + delta


@seed(43)
@settings(max_examples=40, deadline=None)
@given(n=dims, s=seeds, q=st.floats(min_value=0.0, max_value=1.5), delta=st.sampled_from([0.0, 0.05]))
def test_exploratory_price_is_never_below_the_conservative_one(n, s, q, delta):
    rng = np.random.default_rng(s)
    knowledge = Ellipsoid(center=random_unit(rng, n) * 0.3, shape=0.5 * np.eye(n))
    state = replace(new_state(MechanismConfig(dim=n, R=1.0, delta=delta)), knowledge=knowledge)
    x = random_unit(rng, n)

    explore = decide_price(replace(state, epsilon=1e-6), x, q)
    exploit = decide_price(replace(state, epsilon=1e6), x, q)
    if explore.kind is DecisionKind.SKIP:
        assert exploit.kind is DecisionKind.SKIP
        return
    assert explore.kind is DecisionKind.EXPLORATORY
    assert exploit.kind is DecisionKind.CONSERVATIVE
    assert explore.linear_price >= exploit.linear_price
    assert exploit.posted_price >= q


@seed(47)
@settings(max_examples=10, deadline=None)
@given(n=dims, s=seeds)
def test_same_inputs_give_the_same_decisions(n, s):
    rng = np.random.default_rng(s)
    query = random_market(rng, n, 0.0)
    state = new_state(MechanismConfig(dim=n, R=1.0, total_rounds_hint=300))

    for _ in range(300):
        x, value = query()
        q = max(value - 0.1, 0.0)
        decision = decide_price(state, x, q)
        assert decide_price(state, x, q) == decision
        feedback = buyer_response(value, math.inf if decision.posted_price is None else decision.posted_price)
        following = observe(state, x, q, decision, feedback)
        again = observe(state, x, q, decision, feedback)
        assert np.array_equal(following.knowledge.center, again.knowledge.center)
        assert np.array_equal(following.knowledge.shape, again.knowledge.shape)
        assert following.exploratory_count == again.exploratory_count
        state = following
