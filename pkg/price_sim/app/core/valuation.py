"""
Market side of the simulation: how a query is valued and how the buyer answers.

v = g(phi(x)^T theta* + noise). The noise is added before the link, so the
mechanism's buffer delta lives in the same linear space as its cuts.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray

from price_sim.app.core.links import DomainError, FeatureMap, LinkFunction
from price_sim.app.core.pricing import Feedback

logger = logging.getLogger(__name__)

# The buffer formula is only valid from this horizon on
MIN_BUFFER_ROUNDS = 8


class NoiseFamily(Enum):
    NONE = "none"
    NORMAL = "normal"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class NoiseSpec:
    """
    SubGaussian noise with Pr(|d| > z) <= C exp(-z^2 / (2 sigma^2)).

    UNIFORM draws from [-sigma, sigma]; it is bounded by sigma, so a buffer
    delta = sigma keeps the true weight vector inside the knowledge set.
    """

    family: NoiseFamily = NoiseFamily.NONE
    sigma: float = 0.0
    C: float = 2.0

    def __post_init__(self) -> None:
        if not self.sigma >= 0:
            raise DomainError(f"Noise sigma must be nonnegative, got {self.sigma}")
        if not self.C >= 1:
            raise DomainError(f"Tail constant C must be >= 1, got {self.C}")
        if self.family is NoiseFamily.NONE and self.sigma != 0:
            raise DomainError("Noise family 'none' requires sigma = 0")

    def sample(
        self, rng: np.random.Generator, size: int | None = None
    ) -> float | NDArray[np.float64]:
        if self.family is NoiseFamily.NORMAL:
            draw = self.sigma * rng.standard_normal(size)
        elif self.family is NoiseFamily.UNIFORM:
            draw = self.sigma * rng.uniform(-1.0, 1.0, size)
        else:
            draw = np.zeros(() if size is None else size)
        return float(draw) if size is None else np.asarray(draw, dtype=np.float64)

    def tail_bound(self, z: float) -> float:
        if self.sigma == 0:
            return 0.0 if z > 0 else 1.0
        return self.C * math.exp(-(z * z) / (2.0 * self.sigma * self.sigma))


@dataclass(frozen=True)
class MarketModel:
    theta_star: NDArray[np.float64]
    link: LinkFunction = LinkFunction.IDENTITY
    feature_map: FeatureMap = FeatureMap.IDENTITY
    noise: NoiseSpec = NoiseSpec()

    def __post_init__(self) -> None:
        theta = np.array(self.theta_star, dtype=np.float64)
        if theta.ndim != 1:
            raise DomainError(f"theta* must be a vector, got shape {theta.shape}")
        theta.setflags(write=False)
        object.__setattr__(self, "theta_star", theta)

    @property
    def dim(self) -> int:
        return int(self.theta_star.shape[0])

    def linear_value(self, x: ArrayLike) -> float:
        """phi(x)^T theta*, the noiseless pre-link score."""
        return float(self.feature_map.apply(x) @ self.theta_star)


def market_value(model: MarketModel, x: ArrayLike, noise_draw: float) -> float:
    """
    Function:
        - v = g(phi(x)^T theta* + noise_draw).
        - The draw comes from the caller's seeded stream, so this stays pure.

    Raise:
        - DomainError for features outside the feature map's domain
    """
    return float(model.link.forward(model.linear_value(x) + noise_draw))


def buyer_response(v: float, p: float) -> Feedback:
    """A myopic buyer takes any price no higher than the market value."""
    return Feedback(accepted=bool(p <= v))


def uncertainty_buffer(sigma: float, C: float, T: int) -> float:
    """
    Function:
        - Buffer delta = sqrt(2 ln C) * sigma * ln T. With probability close to
          one every |noise| over T rounds stays below it.

    Raise:
        - DomainError for T < 8, C < 1 or sigma < 0
    """
    if T < MIN_BUFFER_ROUNDS:
        raise DomainError(f"Buffer bound needs T >= {MIN_BUFFER_ROUNDS}, got {T}")
    if not C >= 1 or not sigma >= 0:
        raise DomainError(f"Buffer needs C >= 1 and sigma >= 0, got C={C}, sigma={sigma}")
    return math.sqrt(2.0 * math.log(C)) * sigma * math.log(T)


def noise_sigma_for_buffer(delta: float, C: float, T: int) -> float:
    """sigma such that uncertainty_buffer(sigma, C, T) == delta."""
    if T < MIN_BUFFER_ROUNDS:
        raise DomainError(f"Buffer bound needs T >= {MIN_BUFFER_ROUNDS}, got {T}")
    if not C > 1:
        raise DomainError(f"Inverting the buffer needs C > 1, got {C}")
    if not delta >= 0:
        raise DomainError(f"delta must be nonnegative, got {delta}")
    return delta / (math.sqrt(2.0 * math.log(C)) * math.log(T))


def single_round_regret(
    v: float, q: float, p: float | None, accepted: bool
) -> float:
    """
    Function:
        - Regret against a seller who knows v: zero when the reserve exceeds
          the value, the full value when a sellable query is lost, else v - p.
        - p = None means the round was skipped; a skip at q == v loses nothing.

    Returns:
        - A value in [0, max(v, 0)]
    """
    if q > v:
        return 0.0
    if p is None:
        return 0.0 if q >= v else float(v)
    if not accepted:
        return float(v)
    return float(v - p)
