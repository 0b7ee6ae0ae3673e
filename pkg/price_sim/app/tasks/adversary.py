"""
Worst-case stream for a mechanism that also cuts on conservative prices.

For the first floor(T/2) rounds every query is e1 and its reserve is the
mechanism's own midpoint, so each round is a central cut along e1. Those cuts
stretch the ellipsoid along e2; from then on the queries switch to e2 with no
reserve. With conservative cuts the first half never stops cutting, the e2
width grows geometrically in T, and the second half keeps paying for
exploration: cumulative regret roughly doubles when T doubles.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from price_sim.app.core.pricing import ConfigError
from price_sim.app.core.valuation import MarketModel
from price_sim.app.tasks.generate_queries import AdversarialAxes, MidpointFirstHalf
from price_sim.app.tasks.run_scenario import (
    RoundRecord,
    Scenario,
    mechanism_config,
    run_scenario,
)

logger = logging.getLogger(__name__)

# Hundreds of consecutive cuts along e1 shrink x^T A x far below the default floor
ADVERSARY_DIRECTION_FLOOR = 1e-300


@dataclass(frozen=True)
class AdversaryResult:
    records: list[RoundRecord]
    # cumulative regret of the same stream built for horizon floor(T/2)
    half_regret: float
    full_regret: float

    @property
    def growth(self) -> float:
        if self.half_regret == 0:
            return math.inf if self.full_regret > 0 else 1.0
        return self.full_regret / self.half_regret


def max_adversary_rounds(n: int) -> int:
    """
    Longest even horizon T whose last e1 query, after k = T/2 - 1 central
    cuts, still sees e1^T A e1 = (n / (n + 1))^(2k) above the adversary's
    direction floor. Float64 caps n = 2 at T = 1700.
    """
    cuts = math.floor(-math.log(ADVERSARY_DIRECTION_FLOOR) / (2.0 * math.log((n + 1) / n)))
    return 2 * (cuts - 1)


def adversary_scenario(n: int, rounds: int, seed: int = 0) -> Scenario:
    """R = S = 1 and theta* = (1, 1, 0, ..., 0) / sqrt(2)."""
    if n < 2:
        raise ConfigError(f"The adversarial stream needs n >= 2, got {n}")
    if not 2 <= rounds <= max_adversary_rounds(n):
        raise ConfigError(
            f"The adversarial stream needs 2 <= T <= {max_adversary_rounds(n)} "
            f"for n={n}, got {rounds}"
        )
    theta = np.zeros(n)
    theta[:2] = 1.0 / math.sqrt(2.0)
    return Scenario(
        name=f"adversary_n{n}",
        dim=n,
        rounds=rounds,
        feature_gen=AdversarialAxes(),
        reserve_policy=MidpointFirstHalf(),
        model=MarketModel(theta_star=theta),
        seed=seed,
        radius=1.0,
    )


def _run(n: int, rounds: int, allow_conservative_cuts: bool, seed: int) -> list[RoundRecord]:
    scenario = adversary_scenario(n, rounds, seed)
    mech = mechanism_config(
        scenario,
        use_reserve=True,
        allow_conservative_cuts=allow_conservative_cuts,
        direction_floor=ADVERSARY_DIRECTION_FLOOR,
    )
    records, _ = run_scenario(scenario, mech, progress=False)
    return records


def run_adversary_demo(
    n: int, T: int, allow_conservative_cuts: bool, seed: int = 0
) -> AdversaryResult:
    """
    Function:
        - Run the reserve-carrying mechanism (delta = 0, default epsilon) on
          the adversarial stream for horizons floor(T/2) and T.
        - The stream switches axes at half its own horizon, so both runs are
          complete instances of the construction.

    Returns:
        - AdversaryResult with the horizon-T trace and both cumulative regrets

    Raise:
        - ConfigError for n < 2 or T outside [4, max_adversary_rounds(n)]
    """
    if T < 4:
        raise ConfigError(f"The adversary demo needs T >= 4, got {T}")

    logger.info("=" * 60)
    logger.info(
        f"Adversarial stream: n={n}, T={T}, conservative cuts "
        f"{'on' if allow_conservative_cuts else 'off'}"
    )
    half_records = _run(n, T // 2, allow_conservative_cuts, seed)
    records = _run(n, T, allow_conservative_cuts, seed)

    result = AdversaryResult(
        records=records,
        half_regret=float(sum(r.regret for r in half_records)),
        full_regret=float(sum(r.regret for r in records)),
    )
    logger.info(
        f"✓ regret at T/2={T // 2}: {result.half_regret:.4f}, at T={T}: "
        f"{result.full_regret:.4f} (x{result.growth:.3f})"
    )
    logger.info("=" * 60)
    return result
