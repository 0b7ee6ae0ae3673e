import numpy as np
import pytest

from price_sim.app.core.pricing import ConfigError, DecisionKind, exploratory_round_bound
from price_sim.app.tasks.adversary import (
    adversary_scenario,
    max_adversary_rounds,
    run_adversary_demo,
)


def test_max_adversary_rounds():
    assert max_adversary_rounds(2) == 1700
    assert max_adversary_rounds(3) > max_adversary_rounds(2)


def test_adversary_scenario_layout():
    scenario = adversary_scenario(3, 100)
    np.testing.assert_allclose(scenario.model.theta_star, [2**-0.5, 2**-0.5, 0.0])
    assert scenario.radius == 1.0


@pytest.mark.parametrize("n, rounds", [(1, 100), (2, 1), (2, 5000)])
def test_adversary_scenario_rejects_bad_shapes(n, rounds):
    with pytest.raises(ConfigError):
        adversary_scenario(n, rounds)


def test_demo_needs_four_rounds():
    with pytest.raises(ConfigError):
        run_adversary_demo(2, 3, allow_conservative_cuts=False)


def test_first_half_queries_sit_at_the_midpoint():
    result = run_adversary_demo(2, 40, allow_conservative_cuts=True)
    first_half = result.records[:20]
    # value 1/sqrt(2) along e1 against reserves that start at 0
    assert first_half[0].reserve == pytest.approx(0.0)
    assert all(r.value == pytest.approx(2**-0.5) for r in result.records)


def test_first_half_keeps_cutting_once_the_width_drops_below_float_resolution():
    # e1 halfwidth falls under one ulp of the 0.707 midpoint after ~90 cuts
    result = run_adversary_demo(2, 400, allow_conservative_cuts=True)
    first_half = result.records[:200]
    assert not any(r.kind is DecisionKind.SKIP for r in first_half)
    assert all(r.posted == r.reserve for r in first_half[1:])
    assert first_half[-1].knowledge_width < 1e-30


def test_longest_horizon_runs_to_the_end():
    T = max_adversary_rounds(2)
    result = run_adversary_demo(2, T, allow_conservative_cuts=True)
    assert len(result.records) == T
    assert not any(r.kind is DecisionKind.SKIP for r in result.records[: T // 2])


def test_conservative_cuts_make_regret_linear():
    result = run_adversary_demo(2, 1600, allow_conservative_cuts=True)
    assert result.growth >= 1.8


def test_without_conservative_cuts_regret_flattens():
    result = run_adversary_demo(2, 1600, allow_conservative_cuts=False)
    assert result.growth <= 1.2
    explored = sum(r.kind is DecisionKind.EXPLORATORY for r in result.records)
    assert explored <= exploratory_round_bound(2, 1.0, 1.0, 4 / 1600)
