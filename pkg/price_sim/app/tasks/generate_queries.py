import logging
import zlib
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from price_sim.app.core.pricing import ConfigError
from price_sim.app.core.valuation import MarketModel
from price_sim.app.utils.seeding import FEATURE_STREAM, THETA_STREAM, make_stream

logger = logging.getLogger(__name__)

# Laplace-noise variances of simulated queries are 10^k for k in this range
NOISE_EXPONENTS = (-4, 4)

RESERVE_COLUMN = "reserve"


class IngestError(Exception):
    """Raised when a query CSV cannot be read or does not match the scenario."""

    pass


class Distribution(Enum):
    NORMAL = "normal"
    UNIFORM = "uniform"


# ---------- feature generators ----------


@dataclass(frozen=True)
class AggregatedCompensations:
    """Sorted per-owner compensations summed over n even partitions."""

    raw_dim: int = 1000
    raw_dist: Distribution = Distribution.NORMAL


@dataclass(frozen=True)
class RandomUnit:
    dist: Distribution = Distribution.NORMAL


@dataclass(frozen=True)
class CsvStream:
    path: str


@dataclass(frozen=True)
class AdversarialAxes:
    """e1 for the first floor(T/2) rounds, e2 afterwards."""

    pass


@dataclass(frozen=True)
class Constant:
    """x = 1/sqrt(n) * (1, ..., 1) every round; x = 1 when n = 1."""

    pass


@dataclass(frozen=True)
class HashedOneHot:
    """
    `active` categorical fields one-hot encoded with the hashing trick, then
    normalized. With `cardinality` set, field f takes one of that many values
    and lands in slot hashed_slot(f, value, n); without it every round picks
    `active` distinct slots at random.
    """

    active: int = 8
    cardinality: int | None = None


FeatureGenSpec = (
    AggregatedCompensations | RandomUnit | CsvStream | AdversarialAxes | Constant | HashedOneHot
)


# ---------- reserve policies ----------


@dataclass(frozen=True)
class NoReserve:
    pass


@dataclass(frozen=True)
class SumOfFeatures:
    pass


@dataclass(frozen=True)
class ValueRatio:
    """Reserve at a fixed ratio of the noiseless pre-link value (evaluation oracle)."""

    rho: float

    def __post_init__(self) -> None:
        if not 0.0 < self.rho < 1.0:
            raise ConfigError(f"ValueRatio rho must lie in (0, 1), got {self.rho}")


@dataclass(frozen=True)
class MidpointFirstHalf:
    """Adversarial reserve: the mechanism's own midpoint for t <= floor(T/2), 0 after."""

    pass


@dataclass(frozen=True)
class Fixed:
    value: float

    def __post_init__(self) -> None:
        if not self.value >= 0:
            raise ConfigError(f"Fixed reserve must be nonnegative, got {self.value}")


ReservePolicy = NoReserve | SumOfFeatures | ValueRatio | MidpointFirstHalf | Fixed

# Maps x to the mechanism's current linear midpoint (p_low + p_high) / 2
MidpointOracle = Callable[[NDArray[np.float64]], float]


@dataclass(frozen=True)
class Query:
    x: NDArray[np.float64]
    q: float


@dataclass(frozen=True)
class QueryTable:
    features: NDArray[np.float64]
    reserves: NDArray[np.float64] | None

    def __len__(self) -> int:
        return int(self.features.shape[0])


def hashed_slot(field: int, value: int, n: int) -> int:
    """Slot of a (field, value) pair; colliding pairs share a slot."""
    return zlib.crc32(f"{field}={value}".encode()) % n


def _normalize(x: NDArray[np.float64]) -> NDArray[np.float64]:
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        return np.full(x.shape[0], 1.0 / np.sqrt(x.shape[0]))
    return x / norm


def _draw(dist: Distribution, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
    if dist is Distribution.NORMAL:
        return rng.standard_normal(size)
    return rng.uniform(-1.0, 1.0, size)


def aggregate_compensations(
    raw_dim: int, raw_dist: Distribution, n: int, rng: np.random.Generator
) -> NDArray[np.float64]:
    """
    Function:
        - Simulate one query's privacy compensations and aggregate them into an
          n-dimensional feature vector.
        - Query weights w ~ raw_dist, Laplace noise variance 10^k, privacy
          leakage |w_i| / b with b = sqrt(variance / 2), compensation
          tanh(leakage). Compensations are sorted, split evenly into n
          partitions and summed per partition.

    Returns:
        - Unit-norm feature vector with nonnegative entries
    """
    if raw_dim < n:
        raise ConfigError(f"raw_dim={raw_dim} must be at least dim={n}")
    weights = _draw(raw_dist, rng, raw_dim)
    exponent = int(rng.integers(NOISE_EXPONENTS[0], NOISE_EXPONENTS[1] + 1))
    laplace_scale = np.sqrt(10.0**exponent / 2.0)
    compensations = np.sort(np.tanh(np.abs(weights) / laplace_scale))
    features = np.array([part.sum() for part in np.array_split(compensations, n)])
    return _normalize(features)


def sample_theta_star(
    n: int,
    norm: float,
    dist: Distribution = Distribution.NORMAL,
    seed: int = 0,
    positive: bool = False,
    nonzero: int = 0,
) -> NDArray[np.float64]:
    """
    Function:
        - Draw the true weight vector: a direction from `dist`, optionally
          folded into the positive orthant and/or restricted to `nonzero`
          random coordinates, rescaled to exactly `norm`.

    Returns:
        - theta* with ||theta*|| = norm
    """
    if n < 1 or not norm > 0:
        raise ConfigError(f"theta* needs n >= 1 and norm > 0, got n={n}, norm={norm}")
    rng = make_stream(seed, THETA_STREAM)
    theta = _draw(dist, rng, n)
    if 0 < nonzero < n:
        mask = np.zeros(n, dtype=bool)
        mask[rng.choice(n, size=nonzero, replace=False)] = True
        theta = np.where(mask, theta, 0.0)
    if positive:
        theta = np.abs(theta)
    length = float(np.linalg.norm(theta))
    if length == 0.0:
        theta, length = np.eye(n)[0], 1.0
    return theta * (norm / length)


def load_query_csv(path: str | Path, dim: int) -> QueryTable:
    """
    Function:
        - Read a query stream with header `f1,...,fn[,reserve]`, one query per
          line, and normalize every feature row to unit norm.

    Args:
        - path: CSV file (UTF-8, decimal point)
        - dim: expected feature dimension n

    Returns:
        - QueryTable with the normalized features and optional reserves

    Raise:
        - IngestError naming the file line of the first bad row
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"Query CSV not found: {path}")

    logger.info(f"Reading query stream from: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, UnicodeDecodeError, pd.errors.EmptyDataError) as e:
        raise IngestError(f"Could not parse {path}: {e}") from e

    feature_columns = [f"f{i}" for i in range(1, dim + 1)]
    columns = list(df.columns)
    if columns not in (feature_columns, feature_columns + [RESERVE_COLUMN]):
        raise IngestError(
            f"Header must be {','.join(feature_columns)}[,{RESERVE_COLUMN}] "
            f"for dim={dim}, found {','.join(columns)}"
        )

    numeric = df.apply(pd.to_numeric, errors="coerce")
    bad_rows = np.flatnonzero(numeric.isna().any(axis=1).to_numpy())
    if bad_rows.size:
        # +2: one header line, 1-based numbering
        raise IngestError(f"{path}: line {int(bad_rows[0]) + 2} has a non-numeric field")

    features = numeric[feature_columns].to_numpy(dtype=np.float64)
    norms = np.linalg.norm(features, axis=1)
    zero_rows = np.flatnonzero(norms == 0.0)
    if zero_rows.size:
        raise IngestError(f"{path}: line {int(zero_rows[0]) + 2} has an all-zero feature row")

    reserves = None
    if RESERVE_COLUMN in numeric.columns:
        reserves = numeric[RESERVE_COLUMN].to_numpy(dtype=np.float64)
        negative = np.flatnonzero(reserves < 0)
        if negative.size:
            raise IngestError(f"{path}: line {int(negative[0]) + 2} has a negative reserve")

    logger.info(f"✓ Loaded {len(df):,} queries of dimension {dim}")
    return QueryTable(features=features / norms[:, None], reserves=reserves)


def _features(
    spec: FeatureGenSpec,
    n: int,
    round: int,
    total_rounds: int,
    rng: np.random.Generator,
    table: QueryTable | None,
) -> NDArray[np.float64]:
    if isinstance(spec, AggregatedCompensations):
        return aggregate_compensations(spec.raw_dim, spec.raw_dist, n, rng)
    if isinstance(spec, RandomUnit):
        return _normalize(_draw(spec.dist, rng, n))
    if isinstance(spec, Constant):
        return np.full(n, 1.0 / np.sqrt(n))
    if isinstance(spec, HashedOneHot):
        x = np.zeros(n)
        if spec.cardinality is None:
            x[rng.choice(n, size=min(spec.active, n), replace=False)] = 1.0
        else:
            values = rng.integers(spec.cardinality, size=spec.active)
            for field, value in enumerate(values.tolist()):
                x[hashed_slot(field, value, n)] += 1.0
        return _normalize(x)
    if isinstance(spec, AdversarialAxes):
        if n < 2:
            raise ConfigError("AdversarialAxes needs dim >= 2")
        return np.eye(n)[0 if round <= total_rounds // 2 else 1]
    if isinstance(spec, CsvStream):
        if table is None:
            raise IngestError("CsvStream queries need a loaded QueryTable")
        if round > len(table):
            raise IngestError(f"Round {round} exceeds the {len(table)} rows of {spec.path}")
        return table.features[round - 1]
    raise ConfigError(f"Unknown feature generator: {spec!r}")


def _reserve(
    policy: ReservePolicy,
    model: MarketModel,
    x: NDArray[np.float64],
    round: int,
    total_rounds: int,
    midpoint: MidpointOracle | None,
) -> float:
    if isinstance(policy, NoReserve):
        return 0.0
    if isinstance(policy, SumOfFeatures):
        return max(float(np.sum(x)), 0.0)
    if isinstance(policy, Fixed):
        return policy.value
    if isinstance(policy, ValueRatio):
        return float(model.link.forward(policy.rho * model.linear_value(x)))
    if isinstance(policy, MidpointFirstHalf):
        if round > total_rounds // 2:
            return 0.0
        if midpoint is None:
            raise ConfigError("MidpointFirstHalf needs the mechanism's midpoint")
        return max(float(model.link.forward(midpoint(x))), 0.0)
    raise ConfigError(f"Unknown reserve policy: {policy!r}")


def generate_query(
    spec: FeatureGenSpec,
    policy: ReservePolicy,
    model: MarketModel,
    round: int,
    rng: np.random.Generator,
    total_rounds: int,
    midpoint: MidpointOracle | None = None,
    table: QueryTable | None = None,
) -> Query:
    """
    Function:
        - Produce the query of a 1-based round: a unit-norm feature vector and
          its reserve price.
        - A `reserve` column in a CSV stream takes precedence over the policy.

    Raise:
        - IngestError for CSV streams that run out or do not match
        - ConfigError for policies that cannot be evaluated
    """
    x = _features(spec, model.dim, round, total_rounds, rng, table)
    if isinstance(spec, CsvStream) and table is not None and table.reserves is not None:
        return Query(x=x, q=float(table.reserves[round - 1]))
    return Query(x=x, q=_reserve(policy, model, x, round, total_rounds, midpoint))


class QueryStream:
    """Seeded query source for one run; draws never depend on prices posted."""

    def __init__(
        self,
        spec: FeatureGenSpec,
        policy: ReservePolicy,
        model: MarketModel,
        total_rounds: int,
        seed: int,
    ) -> None:
        self.spec = spec
        self.policy = policy
        self.model = model
        self.total_rounds = total_rounds
        self.rng = make_stream(seed, FEATURE_STREAM)
        self.table = (
            load_query_csv(spec.path, model.dim) if isinstance(spec, CsvStream) else None
        )
        if self.table is not None and len(self.table) < total_rounds:
            raise IngestError(
                f"{spec.path} holds {len(self.table)} queries, the run needs {total_rounds}"
            )

    def query(self, round: int, midpoint: MidpointOracle | None = None) -> Query:
        return generate_query(
            self.spec,
            self.policy,
            self.model,
            round,
            self.rng,
            self.total_rounds,
            midpoint=midpoint,
            table=self.table,
        )
