import json
import logging
import math
import tomllib
from dataclasses import replace
from enum import Enum
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from price_sim.app.core.links import FeatureMap, LinkFunction
from price_sim.app.core.pricing import ConfigError, MechanismConfig, default_epsilon
from price_sim.app.core.valuation import MarketModel, NoiseFamily, NoiseSpec
from price_sim.app.tasks.generate_queries import (
    AdversarialAxes,
    AggregatedCompensations,
    Constant,
    CsvStream,
    Distribution,
    FeatureGenSpec,
    Fixed,
    HashedOneHot,
    MidpointFirstHalf,
    NoReserve,
    RandomUnit,
    ReservePolicy,
    SumOfFeatures,
    ValueRatio,
    sample_theta_star,
)
from price_sim.app.tasks.run_scenario import Scenario, mechanism_config, stream_feature_bound
from price_sim.app.tasks.variant_sweep import Variant
from price_sim.app.utils.seeding import MAX_SEED, derive_seed
from price_sim.app_config.settings import config as settings

logger = logging.getLogger(__name__)

FeatureGenName = Literal[
    "aggregated_compensations",
    "random_unit",
    "csv",
    "adversarial_axes",
    "constant",
    "hashed_one_hot",
]
ReservePolicyName = Literal[
    "none", "sum_of_features", "value_ratio", "midpoint_first_half", "fixed"
]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ScenarioSection(_Section):
    name: str = "experiment"
    dim: int = Field(ge=1)
    rounds: int = Field(ge=1)
    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    feature_gen: FeatureGenName = "aggregated_compensations"
    feature_dist: Distribution = Distribution.NORMAL
    # raw_dim for aggregated_compensations, active slots for hashed_one_hot
    feature_param: int | None = Field(default=None, ge=1)
    # values per field for hashed_one_hot; unset draws random slots
    feature_cardinality: int | None = Field(default=None, ge=1)
    reserve_policy: ReservePolicyName = "sum_of_features"
    # rho for value_ratio, the reserve for fixed
    reserve_param: float | None = None
    link: LinkFunction = LinkFunction.IDENTITY
    feature_map: FeatureMap = FeatureMap.IDENTITY
    theta_norm: float | None = Field(default=None, gt=0)
    theta_positive: bool = True
    theta_nonzero: int = Field(default=0, ge=0)
    noise_family: NoiseFamily = NoiseFamily.NORMAL
    noise_sigma: float = Field(default=0.0, ge=0)
    noise_C: float = Field(default=2.0, ge=1)
    csv_path: str | None = None


class MechanismSection(_Section):
    epsilon: float | None = Field(default=None, gt=0)
    delta: float = Field(default=0.0, ge=0)
    R: float | None = Field(default=None, gt=0)
    # None takes the largest ||phi(x)|| of the scenario stream
    S: float | None = Field(default=None, gt=0)
    use_reserve: bool = True
    allow_conservative_cuts: bool = False
    initial_lower: float | None = None


class OutputSection(_Section):
    dir: str = settings.PRICE_SIM_OUTPUT_DIR
    trace: bool = False
    repeats: int = Field(default=1, ge=1)
    # None runs the single variant selected by mechanism.use_reserve / delta
    variants: list[Variant] | None = None
    checkpoints: list[int] = Field(default_factory=list)


class ExperimentConfig(_Section):
    scenario: ScenarioSection
    mechanism: MechanismSection = MechanismSection()
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _cross_fields(self) -> "ExperimentConfig":
        s, m, o = self.scenario, self.mechanism, self.output
        if s.feature_gen == "csv" and not s.csv_path:
            raise ValueError("scenario.csv_path is required when feature_gen = 'csv'")
        if s.reserve_policy in ("value_ratio", "fixed") and s.reserve_param is None:
            raise ValueError(
                f"scenario.reserve_param is required for reserve_policy = '{s.reserve_policy}'"
            )
        if s.reserve_policy == "value_ratio" and not 0 < s.reserve_param < 1:
            raise ValueError("scenario.reserve_param must lie in (0, 1) for value_ratio")
        if s.reserve_policy == "fixed" and s.reserve_param < 0:
            raise ValueError("scenario.reserve_param must be nonnegative for fixed")
        if s.feature_gen == "adversarial_axes" and s.dim < 2:
            raise ValueError("scenario.dim must be >= 2 for adversarial_axes")
        if s.theta_nonzero > s.dim:
            raise ValueError(f"scenario.theta_nonzero exceeds scenario.dim={s.dim}")
        if m.initial_lower is not None and s.dim != 1:
            raise ValueError("mechanism.initial_lower applies only when scenario.dim = 1")
        if o.checkpoints:
            if o.checkpoints != sorted(set(o.checkpoints)):
                raise ValueError("output.checkpoints must be strictly ascending")
            if o.checkpoints[0] < 1 or o.checkpoints[-1] > s.rounds:
                raise ValueError(f"output.checkpoints must lie in [1, {s.rounds}]")
        if o.variants is not None and not o.variants:
            raise ValueError("output.variants must not be empty")
        return self


def _key_path(error: dict[str, Any]) -> str:
    return ".".join(str(part) for part in error["loc"]) or "<root>"


def _fill_defaults(cfg: ExperimentConfig) -> ExperimentConfig:
    s, m = cfg.scenario, cfg.mechanism
    if m.epsilon is not None or s.rounds < 2:
        return cfg
    eps = default_epsilon(s.dim, s.rounds, m.delta)
    return cfg.model_copy(update={"mechanism": m.model_copy(update={"epsilon": eps})})


def parse_config(text: str) -> ExperimentConfig:
    """
    Function:
        - Parse a flat dotted-key experiment document and validate it.
        - Missing epsilon is filled with default_epsilon(dim, rounds, delta).

    Args:
        - text: TOML text such as `scenario.dim = 20`

    Returns:
        - Validated ExperimentConfig

    Raise:
        - ConfigError naming the dotted key of the first problem
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Config is not a valid key-value document: {e}") from e

    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(f"{_key_path(first)}: {first['msg']}") from e

    return _fill_defaults(cfg)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    logger.info(f"Loading experiment config from: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    return parse_config(text)


def _format_value(value: Any) -> str:
    if isinstance(value, Enum):
        value = value.value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, list):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    raise ConfigError(f"Cannot emit value of type {type(value).__name__}")


def emit_config(cfg: ExperimentConfig) -> str:
    """Write cfg back as the flat dotted-key document parse_config reads."""
    lines = []
    for section_name in ("scenario", "mechanism", "output"):
        section: BaseModel = getattr(cfg, section_name)
        for key in type(section).model_fields:
            value = getattr(section, key)
            if value is None:
                continue
            lines.append(f"{section_name}.{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


# ---------- builders ----------


def _feature_gen(s: ScenarioSection) -> FeatureGenSpec:
    if s.feature_gen == "aggregated_compensations":
        return AggregatedCompensations(raw_dim=s.feature_param or 1000, raw_dist=s.feature_dist)
    if s.feature_gen == "random_unit":
        return RandomUnit(dist=s.feature_dist)
    if s.feature_gen == "csv":
        return CsvStream(path=s.csv_path)
    if s.feature_gen == "adversarial_axes":
        return AdversarialAxes()
    if s.feature_gen == "constant":
        return Constant()
    return HashedOneHot(active=s.feature_param or 8, cardinality=s.feature_cardinality)


def _reserve_policy(s: ScenarioSection) -> ReservePolicy:
    if s.reserve_policy == "none":
        return NoReserve()
    if s.reserve_policy == "sum_of_features":
        return SumOfFeatures()
    if s.reserve_policy == "value_ratio":
        return ValueRatio(rho=s.reserve_param)
    if s.reserve_policy == "fixed":
        return Fixed(value=s.reserve_param)
    return MidpointFirstHalf()


def theta_norm(cfg: ExperimentConfig) -> float:
    """Configured ||theta*||, sqrt(2n) by default."""
    s = cfg.scenario
    return s.theta_norm if s.theta_norm is not None else math.sqrt(2.0 * s.dim)


def repeat_seed(cfg: ExperimentConfig, repeat: int) -> int:
    """Repeat 0 runs on scenario.seed; later repeats on derived seeds."""
    seed = cfg.scenario.seed
    return seed if repeat == 0 else derive_seed(seed, repeat)


def build_scenario(cfg: ExperimentConfig, repeat: int = 0) -> Scenario:
    """
    Function:
        - Turn the scenario section into a Scenario for one repeat.
        - The prior radius is mechanism.R, else twice ||theta*||.
        - A feature map other than the identity gets its S from the stream.

    Raise:
        - ConfigError for combinations the market cannot represent
    """
    s, m = cfg.scenario, cfg.mechanism
    seed = repeat_seed(cfg, repeat)
    norm = theta_norm(cfg)

    theta = sample_theta_star(
        s.dim, norm, s.feature_dist, seed, positive=s.theta_positive, nonzero=s.theta_nonzero
    )
    if s.noise_sigma == 0:
        noise = NoiseSpec()
    else:
        if s.noise_family is NoiseFamily.NONE:
            raise ConfigError("scenario.noise_family: 'none' requires noise_sigma = 0")
        noise = NoiseSpec(family=s.noise_family, sigma=s.noise_sigma, C=s.noise_C)

    scenario = Scenario(
        name=s.name,
        dim=s.dim,
        rounds=s.rounds,
        feature_gen=_feature_gen(s),
        reserve_policy=_reserve_policy(s),
        model=MarketModel(
            theta_star=theta, link=s.link, feature_map=s.feature_map, noise=noise
        ),
        seed=seed,
        radius=m.R if m.R is not None else 2.0 * norm,
        initial_lower=m.initial_lower,
    )
    if s.feature_map is FeatureMap.IDENTITY:
        return scenario
    return replace(scenario, feature_bound=stream_feature_bound(scenario))


def build_mechanism(cfg: ExperimentConfig, scenario: Scenario) -> MechanismConfig:
    m = cfg.mechanism
    return mechanism_config(
        scenario,
        use_reserve=m.use_reserve,
        delta=m.delta,
        epsilon=m.epsilon,
        allow_conservative_cuts=m.allow_conservative_cuts,
        S=m.S,
    )


def configured_variants(cfg: ExperimentConfig) -> list[Variant]:
    """output.variants, or the one variant mechanism.use_reserve / delta describe."""
    if cfg.output.variants is not None:
        return list(cfg.output.variants)
    m = cfg.mechanism
    if m.use_reserve:
        return [Variant.RESERVE_UNCERTAINTY if m.delta > 0 else Variant.RESERVE]
    return [Variant.UNCERTAINTY if m.delta > 0 else Variant.PURE]
