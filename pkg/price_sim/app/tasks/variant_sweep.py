import logging
import math
from dataclasses import asdict, dataclass, replace
from enum import Enum
from multiprocessing import Pool

import pandas as pd

from price_sim.app.core.pricing import ConfigError, MechanismConfig
from price_sim.app.core.valuation import MIN_BUFFER_ROUNDS, NoiseFamily, uncertainty_buffer
from price_sim.app.tasks.generate_queries import MidpointFirstHalf, NoReserve
from price_sim.app.tasks.run_scenario import (
    RoundRecord,
    RunSummary,
    Scenario,
    baseline_records,
    run_scenario,
    summarize_records,
    with_rounds,
)
from price_sim.app_config.settings import config

logger = logging.getLogger(__name__)


class Variant(Enum):
    PURE = "pure"
    UNCERTAINTY = "uncertainty"
    RESERVE = "reserve"
    RESERVE_UNCERTAINTY = "reserve_uncertainty"
    BASELINE = "baseline"

    @property
    def uses_reserve(self) -> bool:
        return self in (Variant.RESERVE, Variant.RESERVE_UNCERTAINTY)

    @property
    def uses_buffer(self) -> bool:
        return self in (Variant.UNCERTAINTY, Variant.RESERVE_UNCERTAINTY)


MECHANISM_VARIANTS = (
    Variant.PURE,
    Variant.UNCERTAINTY,
    Variant.RESERVE,
    Variant.RESERVE_UNCERTAINTY,
)


@dataclass(frozen=True)
class SweepCell:
    variant: Variant
    rounds: int
    summary: RunSummary
    # horizon and epsilon of the run this cell is a prefix of
    run_rounds: int = 0
    epsilon: float = math.nan


def variant_buffer(scenario: Scenario, base: MechanismConfig) -> float:
    """delta for the buffered variants: the configured one, else derived from the noise."""
    if base.delta > 0:
        return base.delta
    noise = scenario.model.noise
    if noise.family is NoiseFamily.NONE or scenario.rounds < MIN_BUFFER_ROUNDS:
        return 0.0
    return uncertainty_buffer(noise.sigma, noise.C, scenario.rounds)


def variant_config(
    scenario: Scenario, base: MechanismConfig, variant: Variant
) -> MechanismConfig:
    """
    Function:
        - Specialize a base configuration to one of the four mechanism variants.
        - Non-buffered variants run with delta = 0; the horizon hint follows
          the scenario so a default epsilon matches its T.

    Raise:
        - ConfigError for the baseline, which runs no mechanism
    """
    if variant is Variant.BASELINE:
        raise ConfigError("The baseline variant has no mechanism configuration")
    return replace(
        base,
        use_reserve=variant.uses_reserve,
        delta=variant_buffer(scenario, base) if variant.uses_buffer else 0.0,
        total_rounds_hint=max(scenario.rounds, 2),
    )


def run_variant(
    scenario: Scenario, base: MechanismConfig, variant: Variant
) -> tuple[list[RoundRecord], RunSummary]:
    """One variant over a scenario; the baseline goes through the reserve-posting trace."""
    if variant is Variant.BASELINE:
        records = baseline_records(scenario)
        return records, summarize_records(records)
    return run_scenario(scenario, variant_config(scenario, base, variant), progress=False)


def _cells(
    scenario: Scenario, base: MechanismConfig, variant: Variant, t_grid: list[int]
) -> list[SweepCell]:
    records, summary = run_variant(scenario, base, variant)
    epsilon = (
        math.nan
        if variant is Variant.BASELINE
        else variant_config(scenario, base, variant).effective_epsilon
    )
    cells = []
    for t in t_grid:
        prefix = summarize_records(records[:t], summary.wall_time_per_round)
        cells.append(SweepCell(variant, t, prefix, scenario.rounds, epsilon))
    return cells


def _supports_baseline(scenario: Scenario) -> bool:
    return not isinstance(scenario.reserve_policy, (NoReserve, MidpointFirstHalf))


def variant_sweep(
    scenario: Scenario,
    t_grid: list[int],
    base: MechanismConfig,
    variants: tuple[Variant, ...] = tuple(Variant),
    workers: int | None = None,
) -> list[SweepCell]:
    """
    Function:
        - Run each variant once at the largest horizon of t_grid and summarize
          the prefix at every checkpoint, so cells are paired by seed and
          cumulative regret is nondecreasing along the grid.
        - A cell below the largest horizon is a prefix of that run and keeps
          its epsilon; it is not a run tuned to its own T.
        - Variants run in a process pool when workers > 1.

    Args:
        - scenario: shared market (seed, features, noise)
        - t_grid: horizons to report, each <= the largest
        - base: mechanism fields common to all variants
        - variants: subset to run; the baseline is dropped for policies it cannot post
        - workers: pool size, default PRICE_SIM_SWEEP_WORKERS

    Returns:
        - One SweepCell per (variant, T), ordered by variant then T
    """
    if not t_grid:
        raise ConfigError("t_grid must not be empty")
    grid = sorted(set(t_grid))
    if grid[0] < 1:
        raise ConfigError(f"Horizons must be positive, got {grid[0]}")
    horizon = with_rounds(scenario, grid[-1])

    selected = [v for v in variants if v is not Variant.BASELINE or _supports_baseline(scenario)]
    if len(selected) < len(variants):
        logger.warning(
            f"Baseline dropped: reserve policy {type(scenario.reserve_policy).__name__} "
            "cannot be posted on its own"
        )

    workers = config.PRICE_SIM_SWEEP_WORKERS if workers is None else workers
    logger.info("=" * 60)
    logger.info(
        f"Sweeping {[v.value for v in selected]} over T={grid} "
        f"({workers} worker{'s' if workers > 1 else ''})"
    )

    jobs = [(horizon, base, variant, grid) for variant in selected]
    if workers > 1 and len(jobs) > 1:
        with Pool(min(workers, len(jobs))) as pool:
            results = pool.starmap(_cells, jobs)
    else:
        results = [_cells(*job) for job in jobs]

    logger.info("✓ Sweep finished")
    logger.info("=" * 60)
    return [cell for cells in results for cell in cells]


def sweep_table(cells: list[SweepCell]) -> pd.DataFrame:
    """
    One row per cell. run_T and epsilon name the run a cell was cut from: a
    row with T < run_T is a prefix of that run, not a run tuned to horizon T.
    """
    rows = [
        {
            "variant": c.variant.value,
            "T": c.rounds,
            "run_T": c.run_rounds,
            "epsilon": c.epsilon,
            **asdict(c.summary),
        }
        for c in cells
    ]
    return pd.DataFrame(rows)
