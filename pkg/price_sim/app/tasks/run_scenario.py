import logging
import math
import os
import time
from dataclasses import dataclass, replace

import numpy as np
from tqdm import tqdm

from price_sim.app.core.links import FeatureMap, LinkFunction
from price_sim.app.core.pricing import (
    ConfigError,
    DecisionKind,
    MechanismConfig,
    decide_price,
    new_state,
    observe,
    value_bounds,
)
from price_sim.app.core.valuation import (
    MarketModel,
    NoiseSpec,
    buyer_response,
    market_value,
    single_round_regret,
)
from price_sim.app.tasks.generate_queries import (
    AggregatedCompensations,
    Constant,
    Distribution,
    FeatureGenSpec,
    Fixed,
    HashedOneHot,
    MidpointFirstHalf,
    NoReserve,
    QueryStream,
    RandomUnit,
    ReservePolicy,
    SumOfFeatures,
    ValueRatio,
    sample_theta_star,
)
from price_sim.app.utils.seeding import NOISE_STREAM, make_stream
from price_sim.app_config.settings import config

logger = logging.getLogger(__name__)

# Periodic log line when no progress bar is shown
LOG_EVERY = 10_000


class RunAborted(Exception):
    """Raised when a round fails; carries the records produced before it."""

    def __init__(self, message: str, records: list["RoundRecord"], round: int):
        super().__init__(message)
        self.records = records
        self.round = round


@dataclass(frozen=True)
class Scenario:
    name: str
    dim: int
    rounds: int
    feature_gen: FeatureGenSpec
    reserve_policy: ReservePolicy
    model: MarketModel
    seed: int
    # Prior the scenario certifies: ||theta*|| <= radius (theta* >= initial_lower when n = 1)
    radius: float
    initial_lower: float | None = None
    # ||phi(x)|| <= feature_bound for every query of the stream
    feature_bound: float = 1.0

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ConfigError(f"Scenario {self.name!r} needs rounds >= 1, got {self.rounds}")
        if self.dim != self.model.dim:
            raise ConfigError(
                f"Scenario dim={self.dim} disagrees with theta* of dim {self.model.dim}"
            )
        if not self.radius > 0:
            raise ConfigError(f"Scenario radius must be positive, got {self.radius}")
        if not self.feature_bound > 0:
            raise ConfigError(
                f"Scenario feature bound must be positive, got {self.feature_bound}"
            )


@dataclass(frozen=True)
class RoundRecord:
    round: int
    kind: DecisionKind
    posted: float | None
    reserve: float
    value: float
    accepted: bool
    regret: float
    knowledge_width: float


@dataclass(frozen=True)
class RunSummary:
    rounds: int
    cumulative_regret: float
    cumulative_value: float
    regret_ratio: float
    exploratory_rounds: int
    skip_rounds: int
    acceptance_rate: float
    wall_time_per_round: float
    mean_value: float
    mean_reserve: float
    mean_posted_price: float
    posted_price_std: float
    mean_regret: float


def summarize_records(
    records: list[RoundRecord], wall_time_per_round: float = 0.0
) -> RunSummary:
    """
    Function:
        - Aggregate a trace into a RunSummary.
        - cumulative_value sums the sellable part max(v, 0) of every round so
          the regret ratio stays in [0, 1]; skips are left out of the posted
          price statistics and counted in the regret sums.

    Returns:
        - RunSummary; posted-price statistics are nan when nothing was posted
    """
    if not records:
        raise ValueError("Cannot summarize an empty run")

    regrets = np.array([r.regret for r in records])
    values = np.array([r.value for r in records])
    reserves = np.array([r.reserve for r in records])
    posted = np.array([r.posted for r in records if r.posted is not None])
    accepted = sum(1 for r in records if r.posted is not None and r.accepted)

    cumulative_regret = float(regrets.sum())
    cumulative_value = float(np.maximum(values, 0.0).sum())
    ratio = cumulative_regret / cumulative_value if cumulative_value > 0 else 0.0

    return RunSummary(
        rounds=len(records),
        cumulative_regret=cumulative_regret,
        cumulative_value=cumulative_value,
        regret_ratio=ratio,
        exploratory_rounds=sum(1 for r in records if r.kind is DecisionKind.EXPLORATORY),
        skip_rounds=sum(1 for r in records if r.kind is DecisionKind.SKIP),
        acceptance_rate=accepted / posted.size if posted.size else 0.0,
        wall_time_per_round=wall_time_per_round,
        mean_value=float(values.mean()),
        mean_reserve=float(reserves.mean()),
        mean_posted_price=float(posted.mean()) if posted.size else math.nan,
        posted_price_std=float(posted.std()) if posted.size else math.nan,
        mean_regret=float(regrets.mean()),
    )


def _use_progress_bar(progress: bool | None) -> bool:
    if progress is None:
        progress = config.PRICE_SIM_PROGRESS_BAR
    return progress and os.isatty(1)


def _rounds(total: int, desc: str, progress: bool | None):
    if _use_progress_bar(progress):
        logger.info("Using tqdm progress bar (interactive mode activated)")
        return tqdm(range(1, total + 1), desc=desc, unit="round", ascii=True)
    return range(1, total + 1)


def mechanism_config(
    scenario: Scenario,
    *,
    use_reserve: bool = True,
    delta: float = 0.0,
    epsilon: float | None = None,
    allow_conservative_cuts: bool = False,
    R: float | None = None,
    S: float | None = None,
    direction_floor: float | None = None,
) -> MechanismConfig:
    """MechanismConfig matching a scenario's dimension, link, horizon, prior and feature bound."""
    return MechanismConfig(
        dim=scenario.dim,
        R=scenario.radius if R is None else R,
        S=scenario.feature_bound if S is None else S,
        epsilon=epsilon,
        delta=delta,
        use_reserve=use_reserve,
        allow_conservative_cuts=allow_conservative_cuts,
        link=scenario.model.link,
        total_rounds_hint=max(scenario.rounds, 2),
        initial_lower=scenario.initial_lower if scenario.dim == 1 else None,
        direction_floor=(
            config.PRICE_SIM_DIRECTION_FLOOR if direction_floor is None else direction_floor
        ),
    )


def run_scenario(
    scenario: Scenario,
    mech_config: MechanismConfig,
    progress: bool | None = None,
) -> tuple[list[RoundRecord], RunSummary]:
    """
    Function:
        - Play every round of a scenario against one mechanism configuration:
          query -> price -> noisy value -> buyer answer -> regret -> update.
        - Features and noise come from seeded streams that ignore the prices,
          so variants sharing a seed see the same market.
        - Wall time covers decide_price and observe only.

    Args:
        - scenario: market to simulate
        - mech_config: mechanism to run against it
        - progress: tqdm bar on a TTY; None follows PRICE_SIM_PROGRESS_BAR

    Returns:
        - The per-round records and their summary

    Raise:
        - ConfigError when the scenario and the mechanism disagree
        - RunAborted wrapping any error raised inside a round
    """
    if scenario.dim != mech_config.dim:
        raise ConfigError(
            f"Scenario dim={scenario.dim} but mechanism dim={mech_config.dim}"
        )
    if scenario.model.link is not mech_config.link:
        raise ConfigError(
            f"Scenario link {scenario.model.link.value} but mechanism link "
            f"{mech_config.link.value}"
        )

    model = scenario.model
    queries = QueryStream(
        scenario.feature_gen, scenario.reserve_policy, model, scenario.rounds, scenario.seed
    )
    noise_rng = make_stream(scenario.seed, NOISE_STREAM)
    state = new_state(mech_config)

    def midpoint(x: np.ndarray) -> float:
        return value_bounds(state, model.feature_map.apply(x)).midpoint

    records: list[RoundRecord] = []
    elapsed = 0.0
    sellable_skips = 0

    logger.info(f"Running scenario {scenario.name!r}: n={scenario.dim}, T={scenario.rounds:,}")
    for t in _rounds(scenario.rounds, scenario.name, progress):
        try:
            query = queries.query(t, midpoint=midpoint)
            features = model.feature_map.apply(query.x)
            v = market_value(model, query.x, model.noise.sample(noise_rng))

            started = time.perf_counter()
            decision = decide_price(state, features, query.q)
            elapsed += time.perf_counter() - started

            if decision.kind is DecisionKind.SKIP:
                feedback = buyer_response(v, math.inf)
                regret = 0.0
                if query.q < v:
                    sellable_skips += 1
                    logger.debug(f"Round {t}: skipped with q={query.q:.6g} < v={v:.6g}")
            else:
                feedback = buyer_response(v, decision.posted_price)
                regret = single_round_regret(v, query.q, decision.posted_price, feedback.accepted)

            started = time.perf_counter()
            state = observe(state, features, query.q, decision, feedback)
            elapsed += time.perf_counter() - started
        except Exception as e:
            logger.error(f"Round {t} of {scenario.name!r} failed: {e}")
            raise RunAborted(f"Round {t} failed: {e}", records, t) from e

        records.append(
            RoundRecord(
                round=t,
                kind=decision.kind,
                posted=decision.posted_price,
                reserve=query.q,
                value=v,
                accepted=feedback.accepted,
                regret=regret,
                knowledge_width=decision.bounds.width,
            )
        )
        if t % LOG_EVERY == 0 and not _use_progress_bar(progress):
            logger.info(f"  round {t:,}/{scenario.rounds:,}")

    if sellable_skips:
        logger.warning(
            f"{sellable_skips} skipped round(s) had a value above the reserve "
            "(noise beyond the buffer)"
        )

    summary = summarize_records(records, elapsed / scenario.rounds)
    if summary.exploratory_rounds != state.exploratory_count:
        raise RunAborted("Exploratory count disagrees with the mechanism", records, scenario.rounds)
    logger.info(
        f"✓ {scenario.name}: regret={summary.cumulative_regret:.4f}, "
        f"ratio={summary.regret_ratio:.4%}, exploratory={summary.exploratory_rounds}"
    )
    return records, summary


def baseline_records(scenario: Scenario) -> list[RoundRecord]:
    """Trace of the risk-averse seller who posts the reserve price every round."""
    if isinstance(scenario.reserve_policy, (NoReserve, MidpointFirstHalf)):
        raise ConfigError(
            "The reserve-price baseline needs a reserve policy that does not depend "
            f"on a mechanism, got {type(scenario.reserve_policy).__name__}"
        )

    model = scenario.model
    queries = QueryStream(
        scenario.feature_gen, scenario.reserve_policy, model, scenario.rounds, scenario.seed
    )
    noise_rng = make_stream(scenario.seed, NOISE_STREAM)

    records = []
    for t in range(1, scenario.rounds + 1):
        query = queries.query(t)
        v = market_value(model, query.x, model.noise.sample(noise_rng))
        feedback = buyer_response(v, query.q)
        records.append(
            RoundRecord(
                round=t,
                kind=DecisionKind.CONSERVATIVE,
                posted=query.q,
                reserve=query.q,
                value=v,
                accepted=feedback.accepted,
                regret=single_round_regret(v, query.q, query.q, feedback.accepted),
                knowledge_width=0.0,
            )
        )
    return records


def run_risk_averse_baseline(scenario: Scenario) -> RunSummary:
    """
    Function:
        - Post q every round with no knowledge set; regret accounting is the
          same as for the mechanism.

    Raise:
        - ConfigError for the None (and mechanism-dependent) reserve policies
    """
    started = time.perf_counter()
    records = baseline_records(scenario)
    summary = summarize_records(records, (time.perf_counter() - started) / scenario.rounds)
    logger.info(f"✓ baseline {scenario.name}: ratio={summary.regret_ratio:.4%}")
    return summary


# ---------- scenario builders ----------


def linear_query_scenario(
    n: int,
    rounds: int,
    seed: int = 0,
    raw_dim: int = 1000,
    raw_dist: Distribution = Distribution.NORMAL,
    noise: NoiseSpec = NoiseSpec(),
) -> Scenario:
    """
    Noisy linear queries: aggregated privacy compensations as features,
    q = sum(x), ||theta*|| = sqrt(2n) in the positive orthant, R = 2 sqrt(n).
    """
    theta = sample_theta_star(n, math.sqrt(2.0 * n), raw_dist, seed, positive=True)
    return Scenario(
        name=f"linear_n{n}",
        dim=n,
        rounds=rounds,
        feature_gen=AggregatedCompensations(raw_dim=raw_dim, raw_dist=raw_dist),
        reserve_policy=SumOfFeatures(),
        model=MarketModel(theta_star=theta, noise=noise),
        seed=seed,
        radius=2.0 * math.sqrt(n),
    )


def one_dimensional_scenario(
    rounds: int = 100, seed: int = 0, theta: float = math.sqrt(2.0), reserve: float = 1.0
) -> Scenario:
    """x = 1 every round, v = theta, fixed reserve, prior interval [0, 2]."""
    return Scenario(
        name="one_dimensional",
        dim=1,
        rounds=rounds,
        feature_gen=Constant(),
        reserve_policy=Fixed(reserve),
        model=MarketModel(theta_star=np.array([theta])),
        seed=seed,
        radius=2.0,
        initial_lower=0.0,
    )


def log_linear_scenario(
    n: int, rounds: int, seed: int = 0, rho: float = 0.6, theta_norm: float = 2.0
) -> Scenario:
    """log v = x^T theta*; the reserve sits at a fixed ratio rho of log v."""
    theta = sample_theta_star(n, theta_norm, Distribution.NORMAL, seed, positive=True)
    return Scenario(
        name=f"log_linear_n{n}_rho{rho:g}",
        dim=n,
        rounds=rounds,
        feature_gen=AggregatedCompensations(),
        reserve_policy=ValueRatio(rho),
        model=MarketModel(theta_star=theta, link=LinkFunction.NATURAL_EXP),
        seed=seed,
        radius=2.0 * theta_norm,
    )


def logistic_scenario(
    n: int,
    rounds: int,
    seed: int = 0,
    dense: bool = True,
    nonzero: int = 21,
    fields: int = 3,
    cardinality: int = 2,
    theta_norm: float = 1.0,
) -> Scenario:
    """
    Click-through values v = sigmoid(x^T theta*) over categorical fields
    one-hot encoded with the hashing trick. The sparse case keeps all n
    coordinates with `nonzero` weights set.
    The prior radius is ||theta*|| itself.
    """
    theta = sample_theta_star(
        n, theta_norm, Distribution.NORMAL, seed, nonzero=0 if dense else nonzero
    )
    return Scenario(
        name=f"logistic_n{n}_{'dense' if dense else 'sparse'}",
        dim=n,
        rounds=rounds,
        feature_gen=HashedOneHot(active=fields, cardinality=cardinality),
        reserve_policy=NoReserve(),
        model=MarketModel(theta_star=theta, link=LinkFunction.LOGISTIC_SIGMOID),
        seed=seed,
        radius=theta_norm,
    )


def stream_feature_bound(scenario: Scenario) -> float:
    """Largest ||phi(x)|| over the scenario's query stream, replayed from its seed."""
    stream = QueryStream(
        scenario.feature_gen, NoReserve(), scenario.model, scenario.rounds, scenario.seed
    )
    phi = scenario.model.feature_map
    return max(phi.bound(stream.query(t).x) for t in range(1, scenario.rounds + 1))


def log_log_scenario(
    n: int, rounds: int, seed: int = 0, rho: float = 0.6, theta_norm: float = 0.5
) -> Scenario:
    """
    log v = sum_i theta*_i log x_i over aggregated compensations, reserve at
    ratio rho of log v. theta* sits in the negative orthant so that log v > 0
    for features inside the unit ball. S is the stream's largest ||log x||.
    """
    theta = -sample_theta_star(n, theta_norm, Distribution.NORMAL, seed, positive=True)
    scenario = Scenario(
        name=f"log_log_n{n}_rho{rho:g}",
        dim=n,
        rounds=rounds,
        feature_gen=AggregatedCompensations(),
        reserve_policy=ValueRatio(rho),
        model=MarketModel(
            theta_star=theta,
            link=LinkFunction.NATURAL_EXP,
            feature_map=FeatureMap.ELEMENTWISE_LOG,
        ),
        seed=seed,
        radius=2.0 * theta_norm,
    )
    return replace(scenario, feature_bound=stream_feature_bound(scenario))


def random_unit_scenario(n: int, rounds: int, seed: int = 0, noise: NoiseSpec = NoiseSpec()) -> Scenario:
    """Unit-sphere features with a reserve q = sum(x) clamped at 0."""
    theta = sample_theta_star(n, math.sqrt(2.0 * n), Distribution.NORMAL, seed, positive=True)
    return Scenario(
        name=f"random_unit_n{n}",
        dim=n,
        rounds=rounds,
        feature_gen=RandomUnit(),
        reserve_policy=SumOfFeatures(),
        model=MarketModel(theta_star=theta, noise=noise),
        seed=seed,
        radius=2.0 * math.sqrt(n),
    )


def with_rounds(scenario: Scenario, rounds: int) -> Scenario:
    """Same market over another horizon; a mapped feature bound is recomputed for it."""
    resized = replace(scenario, rounds=rounds)
    if scenario.model.feature_map is FeatureMap.IDENTITY:
        return resized
    return replace(resized, feature_bound=stream_feature_bound(resized))


def noise_free(scenario: Scenario) -> Scenario:
    """Same features, reserves and theta*, with the value noise switched off."""
    return replace(scenario, model=replace(scenario.model, noise=NoiseSpec()))
