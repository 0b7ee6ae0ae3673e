from price_sim.app.core.ellipsoid import (
    CutSide,
    DegenerateDirection,
    Ellipsoid,
    EllipsoidError,
    InvalidCutPosition,
    InvalidDimension,
    InvalidRadius,
    NumericalFailure,
    SupportBounds,
    contains,
    cut_update,
    direction_vector,
    initial_ball,
    log_volume,
    smallest_eigenvalue,
    support_bounds,
    volume,
)
from price_sim.app.core.links import DomainError, FeatureMap, LinkFunction
from price_sim.app.core.pricing import (
    ConfigError,
    DecisionKind,
    Feedback,
    FeatureNormError,
    IntervalKnowledge,
    MechanismConfig,
    MechanismState,
    PriceDecision,
    ProtocolError,
    decide_price,
    default_epsilon,
    exploratory_round_bound,
    new_state,
    observe,
    value_bounds,
)
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

__all__ = [
    "ConfigError",
    "CutSide",
    "DecisionKind",
    "DegenerateDirection",
    "DomainError",
    "Ellipsoid",
    "EllipsoidError",
    "FeatureMap",
    "FeatureNormError",
    "Feedback",
    "IntervalKnowledge",
    "InvalidCutPosition",
    "InvalidDimension",
    "InvalidRadius",
    "LinkFunction",
    "MarketModel",
    "MechanismConfig",
    "MechanismState",
    "NoiseFamily",
    "NoiseSpec",
    "NumericalFailure",
    "PriceDecision",
    "ProtocolError",
    "SupportBounds",
    "buyer_response",
    "contains",
    "cut_update",
    "decide_price",
    "default_epsilon",
    "direction_vector",
    "exploratory_round_bound",
    "initial_ball",
    "log_volume",
    "market_value",
    "new_state",
    "noise_sigma_for_buffer",
    "observe",
    "single_round_regret",
    "smallest_eigenvalue",
    "support_bounds",
    "uncertainty_buffer",
    "value_bounds",
    "volume",
]
