"""
Ellipsoidal knowledge set of the weight vector.

The set is E = {theta : (theta - c)^T A^{-1} (theta - c) <= 1} with center c and
symmetric positive-definite shape A. Per-round operations (support bounds and
cuts) cost O(n^2); the eigen/Cholesky diagnostics are for tests and reports.
"""

import logging
import math
from dataclasses import InitVar, dataclass
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg
from scipy.special import gammaln

logger = logging.getLogger(__name__)

# x^T A x at or below this counts as a flat direction
DIRECTION_FLOOR = 1e-14

# Cuts with |alpha| this close to 1 would collapse the retained cap
DEGENERACY_MARGIN = 1e-9

SYMMETRY_RTOL = 1e-10
CONTAINMENT_SLACK = 1e-8


class EllipsoidError(Exception):
    """Base class for knowledge-set geometry errors."""

    pass


class InvalidDimension(EllipsoidError):
    """Raised when an ellipsoid would have fewer than two dimensions."""

    pass


class InvalidRadius(EllipsoidError):
    """Raised when the initial ball radius is not positive."""

    pass


class InvalidShape(EllipsoidError):
    """Raised when center/shape/vector sizes disagree or A is not symmetric positive definite."""

    pass


class DegenerateDirection(EllipsoidError):
    """Raised when the ellipsoid is numerically flat along the query direction."""

    pass


class InvalidCutPosition(EllipsoidError):
    """Raised when a cut offset alpha lies outside the valid range."""

    pass


class NumericalFailure(EllipsoidError):
    """Raised when a factorization or eigen-solve does not succeed."""

    pass


class CutSide(Enum):
    RETAIN_BELOW = "retain_below"  # keep {theta : p >= x^T theta}, the rejection case
    RETAIN_ABOVE = "retain_above"  # keep {theta : p <= x^T theta}, the acceptance case


@dataclass(frozen=True)
class SupportBounds:
    lower: float
    upper: float
    halfwidth: float
    # x^T c, kept exactly rather than rebuilt from lower + upper
    midpoint: float

    @property
    def width(self) -> float:
        return 2.0 * self.halfwidth


@dataclass(frozen=True)
class Ellipsoid:
    """
    Immutable knowledge set; every operation returns a new value.
    verify=False skips the Cholesky test of positive definiteness; cut_update
    builds its result that way.
    """

    center: NDArray[np.float64]
    shape: NDArray[np.float64]
    verify: InitVar[bool] = True

    def __post_init__(self, verify: bool) -> None:
        center = np.array(self.center, dtype=np.float64)
        shape = np.array(self.shape, dtype=np.float64)

        if center.ndim != 1:
            raise InvalidShape(f"Center must be a vector, got shape {center.shape}")
        n = center.shape[0]
        if n < 2:
            raise InvalidDimension(f"Ellipsoid needs dim >= 2, got {n}")
        if shape.shape != (n, n):
            raise InvalidShape(f"Shape must be {n}x{n}, got {shape.shape}")

        scale = max(1.0, float(np.max(np.abs(shape))))
        if float(np.max(np.abs(shape - shape.T))) > SYMMETRY_RTOL * scale:
            raise InvalidShape("Shape matrix is not symmetric")
        if not np.all(np.diag(shape) > 0):
            raise InvalidShape("Shape matrix must have a positive diagonal")
        if verify:
            try:
                linalg.cholesky(shape, lower=True, check_finite=True)
            except (linalg.LinAlgError, ValueError) as e:
                raise InvalidShape(f"Shape matrix is not positive definite: {e}") from e

        center.setflags(write=False)
        shape.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "shape", shape)

    @property
    def dim(self) -> int:
        return int(self.center.shape[0])


def initial_ball(n: int, R: float) -> Ellipsoid:
    """
    Function:
        - Build the starting knowledge set, the ball of radius R around 0.

    Args:
        - n: dimension of the weight vector (at least 2)
        - R: radius bounding the norm of the true weight vector

    Returns:
        - Ellipsoid with center 0 and shape R^2 I

    Raise:
        - InvalidDimension, InvalidRadius
    """
    if n < 2:
        raise InvalidDimension(f"Ellipsoid needs dim >= 2, got {n}")
    if not R > 0:
        raise InvalidRadius(f"Radius must be positive, got {R}")
    return Ellipsoid(center=np.zeros(n), shape=(R * R) * np.eye(n))


def _as_query(E: Ellipsoid, x: ArrayLike) -> NDArray[np.float64]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (E.dim,):
        raise InvalidShape(f"Query vector must have shape ({E.dim},), got {x.shape}")
    return x


def _project(
    E: Ellipsoid, x: NDArray[np.float64], floor: float
) -> tuple[NDArray[np.float64], float]:
    Ax = E.shape @ x
    quad = float(x @ Ax)
    # `not >` also catches nan
    if not quad > floor:
        raise DegenerateDirection(
            f"x^T A x = {quad:.3e} is at or below the floor {floor:.1e}"
        )
    return Ax, quad


def direction_vector(
    E: Ellipsoid, x: ArrayLike, floor: float = DIRECTION_FLOOR
) -> NDArray[np.float64]:
    """
    Function:
        - Compute b = A x / sqrt(x^T A x), the semi-axis of E along x.

    Returns:
        - b, with x^T b = sqrt(x^T A x)

    Raise:
        - DegenerateDirection if x^T A x <= floor (includes x = 0)
    """
    x = _as_query(E, x)
    Ax, quad = _project(E, x, floor)
    return Ax / math.sqrt(quad)


def support_bounds(
    E: Ellipsoid, x: ArrayLike, floor: float = DIRECTION_FLOOR
) -> SupportBounds:
    """
    Function:
        - Minimum and maximum of x^T theta over theta in E.

    Returns:
        - SupportBounds(lower = x^T c - h, upper = x^T c + h, halfwidth = h)
          with h = sqrt(x^T A x)
    """
    x = _as_query(E, x)
    _, quad = _project(E, x, floor)
    halfwidth = math.sqrt(quad)
    mid = float(x @ E.center)
    return SupportBounds(
        lower=mid - halfwidth, upper=mid + halfwidth, halfwidth=halfwidth, midpoint=mid
    )


def cut_update(
    E: Ellipsoid,
    x: ArrayLike,
    alpha: float,
    side: CutSide,
    floor: float = DIRECTION_FLOOR,
) -> Ellipsoid:
    """
    Function:
        - Replace E by the Lowner-John ellipsoid of the cap kept by the cut
          x^T theta = x^T c - alpha * sqrt(x^T A x) (retain-below convention).
        - RETAIN_ABOVE with alpha is the mirror of RETAIN_BELOW with -alpha.

    Args:
        - E: current knowledge set
        - x: query direction
        - alpha: signed cut offset in units of the halfwidth along x
        - side: which halfspace survives
        - floor: flat-direction threshold forwarded to direction_vector

    Returns:
        - The updated, re-symmetrized ellipsoid

    Raise:
        - InvalidCutPosition if the mirrored offset is outside [-1/n, 1 - margin)
        - DegenerateDirection propagated from direction_vector
    """
    n = E.dim
    x = _as_query(E, x)

    depth = alpha if side is CutSide.RETAIN_BELOW else -alpha
    if not (-1.0 / n <= depth < 1.0 - DEGENERACY_MARGIN):
        raise InvalidCutPosition(
            f"alpha={alpha:.6g} ({side.value}) outside [-1/n, 1) for n={n}"
        )

    Ax, quad = _project(E, x, floor)
    b = Ax / math.sqrt(quad)

    scale = n * n * (1.0 - depth * depth) / (n * n - 1.0)
    coeff = 2.0 * (1.0 + n * depth) / ((n + 1.0) * (1.0 + depth))
    step = (1.0 + n * depth) / (n + 1.0)

    shape = scale * (E.shape - coeff * np.outer(b, b))
    shape = 0.5 * (shape + shape.T)

    if side is CutSide.RETAIN_BELOW:
        center = E.center - step * b
    else:
        center = E.center + step * b

    return Ellipsoid(center=center, shape=shape, verify=False)


def unit_ball_log_volume(n: int) -> float:
    """log V_n = (n/2) log(pi) - log Gamma(n/2 + 1)."""
    return 0.5 * n * math.log(math.pi) - float(gammaln(0.5 * n + 1.0))


def log_volume(E: Ellipsoid) -> float:
    """
    Function:
        - log V(E) = log V_n + 0.5 log det A, with log det from a Cholesky factor.
        - Stays finite long after det A itself underflows.

    Raise:
        - NumericalFailure if A is not numerically positive definite
    """
    try:
        factor = linalg.cholesky(E.shape, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalFailure(f"Cholesky factorization failed: {e}") from e
    log_det = 2.0 * float(np.sum(np.log(np.diag(factor))))
    return unit_ball_log_volume(E.dim) + 0.5 * log_det


def volume(E: Ellipsoid) -> float:
    return math.exp(log_volume(E))


def smallest_eigenvalue(E: Ellipsoid) -> float:
    """Smallest eigenvalue of A via LAPACK's symmetric eigen-solver."""
    try:
        values = linalg.eigh(
            E.shape, eigvals_only=True, subset_by_index=[0, 0], check_finite=True
        )
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalFailure(f"Symmetric eigen-solve did not converge: {e}") from e
    return float(values[0])


def contains(E: Ellipsoid, theta: ArrayLike, slack: float = CONTAINMENT_SLACK) -> bool:
    """
    Function:
        - Test (theta - c)^T A^{-1} (theta - c) <= 1 + slack.
        - Uses a Cholesky solve, never an explicit inverse.

    Raise:
        - NumericalFailure if the solve fails
    """
    theta = _as_query(E, theta)
    diff = theta - E.center
    try:
        factor = linalg.cho_factor(E.shape, lower=True, check_finite=True)
        solved = linalg.cho_solve(factor, diff, check_finite=False)
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalFailure(f"Containment solve failed: {e}") from e
    return bool(float(diff @ solved) <= 1.0 + slack)
