"""
Ellipsoid-based posted-price mechanism with reserve price and noise buffer.

One session is a sequence decide_price -> (buyer answers) -> observe. Both
functions take the state as a value; observe returns the next state. The four
published variants are configurations of the same machine:

    use_reserve  delta   variant
    False        0       pure
    False        > 0     uncertainty
    True         0       reserve
    True         > 0     reserve + uncertainty

All prices and cuts live in the pre-link linear space; only the posted price
goes through the link.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray

from price_sim.app.core.ellipsoid import (
    DEGENERACY_MARGIN,
    DIRECTION_FLOOR,
    CutSide,
    Ellipsoid,
    SupportBounds,
    cut_update,
    initial_ball,
    support_bounds,
)
from price_sim.app.core.links import DomainError, LinkFunction

logger = logging.getLogger(__name__)

FEATURE_NORM_SLACK = 1e-9

__all__ = [
    "ConfigError",
    "DecisionKind",
    "DomainError",
    "Feedback",
    "FeatureNormError",
    "IntervalKnowledge",
    "MechanismConfig",
    "MechanismState",
    "PriceDecision",
    "PricingError",
    "ProtocolError",
    "decide_price",
    "default_epsilon",
    "exploratory_round_bound",
    "new_state",
    "observe",
    "value_bounds",
]


class PricingError(Exception):
    """Base class for mechanism errors."""

    pass


class ConfigError(PricingError):
    """Raised when a configuration field is missing, mistyped or inconsistent."""

    pass


class FeatureNormError(PricingError):
    """Raised when a feature vector exceeds the declared norm bound S."""

    pass


class ProtocolError(PricingError):
    """Raised when observe is called with a decision from another state or query."""

    pass


def default_epsilon(n: int, T: int, delta: float = 0.0) -> float:
    """
    Function:
        - Exploration threshold used when none is configured.
        - n = 1: log2(T) / T (interval bisection).
        - n >= 2: max(n^2 / T, 4 n delta).
    """
    if n < 1 or T < 2:
        raise DomainError(f"default_epsilon needs n >= 1 and T >= 2, got n={n}, T={T}")
    if n == 1:
        return math.log2(T) / T
    return max(n * n / T, 4.0 * n * delta)


def exploratory_round_bound(n: int, R: float, S: float, epsilon: float) -> float:
    """Upper bound 20 n^2 ln(20 R S^2 (n+1) / epsilon) on exploratory rounds."""
    if n < 2 or not (R > 0 and S > 0 and epsilon > 0):
        raise DomainError(
            f"Bound needs n >= 2 and positive R, S, epsilon; got {n}, {R}, {S}, {epsilon}"
        )
    return 20.0 * n * n * math.log(20.0 * R * S * S * (n + 1) / epsilon)


@dataclass(frozen=True)
class MechanismConfig:
    dim: int
    R: float
    S: float = 1.0
    epsilon: float | None = None
    delta: float = 0.0
    use_reserve: bool = True
    allow_conservative_cuts: bool = False
    link: LinkFunction = LinkFunction.IDENTITY
    total_rounds_hint: int = 1000
    # n = 1 only: start from [initial_lower, R] instead of [-R, R]
    initial_lower: float | None = None
    direction_floor: float = DIRECTION_FLOOR

    @property
    def effective_epsilon(self) -> float:
        if self.epsilon is not None:
            return self.epsilon
        return default_epsilon(self.dim, self.total_rounds_hint, self.delta)

    def validate(self) -> None:
        """
        Function:
            - Check field ranges and cross-field consistency.
            - Warn (not fail) when epsilon < 4 n delta, the precondition of the
              exploratory-round bound.

        Raise:
            - ConfigError naming the offending field
        """
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if not self.R > 0:
            raise ConfigError(f"R must be positive, got {self.R}")
        if not self.S > 0:
            raise ConfigError(f"S must be positive, got {self.S}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not self.delta >= 0:
            raise ConfigError(f"delta must be nonnegative, got {self.delta}")
        if self.total_rounds_hint < 2:
            raise ConfigError(
                f"total_rounds_hint must be >= 2, got {self.total_rounds_hint}"
            )
        if not self.direction_floor > 0:
            raise ConfigError(f"direction_floor must be positive, got {self.direction_floor}")
        if self.initial_lower is not None:
            if self.dim != 1:
                raise ConfigError("initial_lower applies only when dim = 1")
            if self.initial_lower > self.R:
                raise ConfigError(
                    f"initial_lower={self.initial_lower} exceeds R={self.R}"
                )

        eps = self.effective_epsilon
        if self.delta > 0 and eps < 4.0 * self.dim * self.delta:
            logger.warning(
                f"epsilon={eps:.4g} < 4*n*delta={4.0 * self.dim * self.delta:.4g}; "
                "the exploratory-round bound does not apply"
            )


@dataclass(frozen=True)
class IntervalKnowledge:
    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not self.lower <= self.upper:
            raise ConfigError(f"Interval [{self.lower}, {self.upper}] is empty")

    def contains(self, theta: float) -> bool:
        return self.lower <= theta <= self.upper


Knowledge = Ellipsoid | IntervalKnowledge


@dataclass(frozen=True)
class MechanismState:
    config: MechanismConfig
    knowledge: Knowledge
    epsilon: float
    round: int = 0
    exploratory_count: int = 0


class DecisionKind(Enum):
    SKIP = "skip"
    EXPLORATORY = "exploratory"
    CONSERVATIVE = "conservative"


@dataclass(frozen=True)
class PriceDecision:
    kind: DecisionKind
    posted_price: float | None
    linear_price: float | None
    bounds: SupportBounds
    # state.round the decision was made in; observe refuses any other state
    round: int


@dataclass(frozen=True)
class Feedback:
    accepted: bool


def new_state(config: MechanismConfig) -> MechanismState:
    """
    Function:
        - Start a pricing session: the ball of radius R (n >= 2) or the
          interval [-R, R] / [initial_lower, R] (n = 1).

    Raise:
        - ConfigError for invalid configuration fields
    """
    config.validate()
    if config.dim == 1:
        lower = -config.R if config.initial_lower is None else config.initial_lower
        knowledge: Knowledge = IntervalKnowledge(lower=lower, upper=config.R)
    else:
        knowledge = initial_ball(config.dim, config.R)
    return MechanismState(
        config=config, knowledge=knowledge, epsilon=config.effective_epsilon
    )


def _check_features(config: MechanismConfig, x: ArrayLike) -> NDArray[np.float64]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (config.dim,):
        raise ProtocolError(f"Feature vector must have shape ({config.dim},), got {x.shape}")
    norm = float(np.linalg.norm(x))
    if norm > config.S + FEATURE_NORM_SLACK:
        raise FeatureNormError(f"||x|| = {norm:.6g} exceeds S = {config.S:.6g}")
    return x


def _interval_bounds(knowledge: IntervalKnowledge, x0: float) -> SupportBounds:
    a, b = x0 * knowledge.lower, x0 * knowledge.upper
    lower, upper = min(a, b), max(a, b)
    return SupportBounds(
        lower=lower,
        upper=upper,
        halfwidth=0.5 * (upper - lower),
        midpoint=0.5 * (lower + upper),
    )


def _bounds(state: MechanismState, x: NDArray[np.float64]) -> SupportBounds:
    if isinstance(state.knowledge, IntervalKnowledge):
        return _interval_bounds(state.knowledge, float(x[0]))
    return support_bounds(state.knowledge, x, floor=state.config.direction_floor)


def value_bounds(state: MechanismState, x: ArrayLike) -> SupportBounds:
    """Current [p_low, p_high] for x^T theta over the knowledge set."""
    return _bounds(state, _check_features(state.config, x))


def _reserve_linear(config: MechanismConfig, q: float) -> float:
    if not config.use_reserve:
        return -math.inf
    if q < 0:
        raise DomainError(f"Reserve price must be nonnegative, got {q}")
    return float(config.link.inverse(q))


def decide_price(state: MechanismState, x: ArrayLike, q: float) -> PriceDecision:
    """
    Function:
        - Choose the price for one query without touching the state.
        - Skip when the reserve is at least the largest possible value plus
          the buffer, explore at the midpoint while the value interval is
          wider than epsilon, otherwise post the conservative lower end minus
          the buffer. The reserve floors both prices.

    Args:
        - state: current session state
        - x: feature vector (already passed through the feature map)
        - q: reserve price in posted-price units

    Returns:
        - PriceDecision with the linear price and the posted g(linear price)

    Raise:
        - FeatureNormError, DegenerateDirection, DomainError
    """
    config = state.config
    x = _check_features(config, x)
    bounds = _bounds(state, x)
    q_lin = _reserve_linear(config, q)
    delta = config.delta

    # Measured from the midpoint so a halfwidth below its ulp still counts
    if config.use_reserve and q_lin - bounds.midpoint >= bounds.halfwidth + delta:
        return PriceDecision(
            kind=DecisionKind.SKIP,
            posted_price=None,
            linear_price=None,
            bounds=bounds,
            round=state.round,
        )

    if bounds.width > state.epsilon:
        kind = DecisionKind.EXPLORATORY
        linear = max(q_lin, bounds.midpoint)
    else:
        kind = DecisionKind.CONSERVATIVE
        linear = max(q_lin, bounds.lower - delta)

    return PriceDecision(
        kind=kind,
        posted_price=float(config.link.forward(linear)),
        linear_price=linear,
        bounds=bounds,
        round=state.round,
    )


def _guard_upper(config: MechanismConfig, side: CutSide) -> float:
    # Noise-free rejections use the narrow range [-1/n, 0]; noise-free
    # acceptances and every buffered cut use [-1/n, 1]
    if config.delta == 0 and side is CutSide.RETAIN_BELOW:
        return 0.0
    return 1.0


def _cut_ellipsoid(
    state: MechanismState,
    knowledge: Ellipsoid,
    x: NDArray[np.float64],
    decision: PriceDecision,
    accepted: bool,
) -> Ellipsoid:
    config = state.config
    n = config.dim
    bounds = decision.bounds
    price = decision.linear_price

    if accepted:
        alpha = (bounds.midpoint - (price - config.delta)) / bounds.halfwidth
        depth, side = -alpha, CutSide.RETAIN_ABOVE
    else:
        alpha = (bounds.midpoint - (price + config.delta)) / bounds.halfwidth
        depth, side = alpha, CutSide.RETAIN_BELOW

    if not (-1.0 / n <= depth <= _guard_upper(config, side)):
        logger.debug(
            f"Round {state.round}: guard kept the knowledge set "
            f"(alpha={alpha:.4g}, {side.value})"
        )
        return knowledge

    if depth >= 1.0 - DEGENERACY_MARGIN:
        logger.warning(
            f"Round {state.round}: cut at alpha={alpha:.6g} would collapse the "
            "knowledge set; left unchanged"
        )
        return knowledge

    return cut_update(knowledge, x, alpha, side, floor=config.direction_floor)


def _cut_interval(
    state: MechanismState,
    knowledge: IntervalKnowledge,
    x0: float,
    decision: PriceDecision,
    accepted: bool,
) -> IntervalKnowledge:
    if x0 == 0.0:
        return knowledge

    delta = state.config.delta
    lower, upper = knowledge.lower, knowledge.upper
    # Rejection: x0*theta <= p + delta. Acceptance: x0*theta >= p - delta.
    if accepted:
        threshold = (decision.linear_price - delta) / x0
        keeps_above = x0 > 0
    else:
        threshold = (decision.linear_price + delta) / x0
        keeps_above = x0 < 0

    if keeps_above:
        lower = min(max(lower, threshold), upper)
    else:
        upper = max(min(upper, threshold), lower)
    return IntervalKnowledge(lower=lower, upper=upper)


def observe(
    state: MechanismState,
    x: ArrayLike,
    q: float,
    decision: PriceDecision,
    feedback: Feedback,
) -> MechanismState:
    """
    Function:
        - Fold the buyer's answer into the knowledge set and advance the round.
        - Exploratory prices cut at the effective price (p + delta on rejection,
          p - delta on acceptance) when the cut offset passes the guard.
        - Conservative prices and skips leave the knowledge set unchanged
          unless allow_conservative_cuts is on.

    Args:
        - state: the state decide_price was called with
        - x, q: the same query
        - decision: what decide_price returned
        - feedback: the buyer's answer (ignored for skips)

    Returns:
        - The next MechanismState

    Raise:
        - ProtocolError if the decision belongs to another round
    """
    if decision.round != state.round:
        raise ProtocolError(
            f"Decision from round {decision.round} observed in round {state.round}"
        )
    config = state.config
    x = _check_features(config, x)

    exploratory = decision.kind is DecisionKind.EXPLORATORY
    cuts = exploratory or (
        decision.kind is DecisionKind.CONSERVATIVE and config.allow_conservative_cuts
    )

    knowledge = state.knowledge
    if cuts:
        if decision.linear_price is None:
            raise ProtocolError(f"{decision.kind.value} decision carries no price")
        if isinstance(knowledge, IntervalKnowledge):
            knowledge = _cut_interval(state, knowledge, float(x[0]), decision, feedback.accepted)
        else:
            knowledge = _cut_ellipsoid(state, knowledge, x, decision, feedback.accepted)

    return replace(
        state,
        knowledge=knowledge,
        round=state.round + 1,
        exploratory_count=state.exploratory_count + int(exploratory),
    )
