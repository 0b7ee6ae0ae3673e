import logging
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import expit, logit

logger = logging.getLogger(__name__)

# Pre-link values are checked and reported on [-LINK_DOMAIN, LINK_DOMAIN]
LINK_DOMAIN = 30.0


class DomainError(Exception):
    """Raised when an input lies outside the domain of a formula."""

    pass


def _scalar_or_array(value: NDArray[np.float64]) -> float | NDArray[np.float64]:
    return float(value) if value.ndim == 0 else value


class LinkFunction(Enum):
    """Strictly increasing link g mapping the linear score to a market value."""

    IDENTITY = "identity"
    NATURAL_EXP = "natural_exp"
    LOGISTIC_SIGMOID = "logistic_sigmoid"

    def forward(self, z: ArrayLike) -> float | NDArray[np.float64]:
        z = np.asarray(z, dtype=np.float64)
        if self is LinkFunction.IDENTITY:
            out = z
        elif self is LinkFunction.NATURAL_EXP:
            with np.errstate(over="ignore"):
                out = np.exp(z)
        else:
            # 1 / (1 + exp(-z)); the decreasing form is absorbed into theta*
            out = expit(z)
        return _scalar_or_array(np.asarray(out, dtype=np.float64))

    def inverse(self, y: ArrayLike) -> float | NDArray[np.float64]:
        """
        Function:
            - Map a post-link value back to the linear score.
            - Values below the link's range map to -inf and values above it to
              +inf, so a zero reserve never binds and an unreachable one always
              does.
        """
        y = np.asarray(y, dtype=np.float64)
        if self is LinkFunction.IDENTITY:
            out = y
        elif self is LinkFunction.NATURAL_EXP:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(y > 0.0, np.log(np.where(y > 0.0, y, 1.0)), -np.inf)
        else:
            inside = np.clip(y, 0.0, 1.0)
            with np.errstate(divide="ignore"):
                out = np.where(
                    y <= 0.0, -np.inf, np.where(y >= 1.0, np.inf, logit(inside))
                )
        return _scalar_or_array(np.asarray(out, dtype=np.float64))

    def lipschitz(self, bound: float = LINK_DOMAIN) -> float:
        """Lipschitz constant of g on [-bound, bound]."""
        if self is LinkFunction.IDENTITY:
            return 1.0
        if self is LinkFunction.NATURAL_EXP:
            return float(np.exp(bound))
        return 0.25


class FeatureMap(Enum):
    IDENTITY = "identity"
    ELEMENTWISE_LOG = "elementwise_log"

    def apply(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=np.float64)
        if self is FeatureMap.IDENTITY:
            return x
        if np.any(x <= 0.0):
            raise DomainError("Elementwise log needs strictly positive features")
        return np.log(x)

    def bound(self, x: ArrayLike) -> float:
        """||phi(x)||, the quantity the feature-norm bound S (or U) limits."""
        return float(np.linalg.norm(self.apply(x)))
