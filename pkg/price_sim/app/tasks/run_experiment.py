import logging
import math
import platform
from pathlib import Path

import pandas as pd
import pendulum

from price_sim.app.core.pricing import ConfigError, exploratory_round_bound
from price_sim.app.tasks.cleanup import cleanup_outputs
from price_sim.app.tasks.export_results import (
    curve_frame,
    package_versions,
    trace_frame,
    write_csv,
    write_text,
)
from price_sim.app.tasks.generate_queries import MidpointFirstHalf, NoReserve, ValueRatio
from price_sim.app.tasks.load_config import (
    ExperimentConfig,
    build_mechanism,
    build_scenario,
    configured_variants,
    emit_config,
    repeat_seed,
)
from price_sim.app.tasks.run_scenario import RunSummary
from price_sim.app.tasks.variant_sweep import Variant, run_variant, variant_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

SUMMARY_COLUMNS = [
    "variant",
    "repeat",
    "seed",
    "rounds",
    "epsilon",
    "delta",
    "cumulative_regret",
    "cumulative_value",
    "regret_ratio",
    "exploratory_rounds",
    "exploratory_bound",
    "skip_rounds",
    "acceptance_rate",
    "wall_time_per_round",
    "mean_value",
    "mean_reserve",
    "mean_posted_price",
    "posted_price_std",
    "mean_regret",
]


def _summary_row(
    variant: Variant,
    repeat: int,
    seed: int,
    summary: RunSummary,
    epsilon: float,
    delta: float,
    bound: float,
) -> dict:
    return {
        "variant": variant.value,
        "repeat": repeat,
        "seed": seed,
        "rounds": summary.rounds,
        "epsilon": epsilon,
        "delta": delta,
        "cumulative_regret": summary.cumulative_regret,
        "cumulative_value": summary.cumulative_value,
        "regret_ratio": summary.regret_ratio,
        "exploratory_rounds": summary.exploratory_rounds,
        "exploratory_bound": bound,
        "skip_rounds": summary.skip_rounds,
        "acceptance_rate": summary.acceptance_rate,
        "wall_time_per_round": summary.wall_time_per_round,
        "mean_value": summary.mean_value,
        "mean_reserve": summary.mean_reserve,
        "mean_posted_price": summary.mean_posted_price,
        "posted_price_std": summary.posted_price_std,
        "mean_regret": summary.mean_regret,
    }


def _meta_text(cfg: ExperimentConfig, seeds: list[int], notes: list[str]) -> str:
    lines = [
        f"generated_at = {pendulum.now('UTC').to_iso8601_string()}",
        f"python = {platform.python_version()}",
    ]
    lines += [f"version.{name} = {version}" for name, version in package_versions().items()]
    lines += [f"seed.{rep} = {seed}" for rep, seed in enumerate(seeds)]
    lines += [f"note = {note}" for note in notes]
    lines += ["", "# config", emit_config(cfg)]
    return "\n".join(lines)


def _notes(cfg: ExperimentConfig, policy: object) -> list[str]:
    notes = [
        "mean_posted_price and posted_price_std exclude skip rounds; "
        "skip rounds count in the regret sums",
        "cumulative_value sums max(v, 0) over all rounds",
    ]
    if isinstance(policy, ValueRatio):
        notes.append(
            "reserve_policy value_ratio reads the noiseless market value: "
            "an evaluation oracle, not a deployable reserve"
        )
    if isinstance(policy, MidpointFirstHalf):
        notes.append(
            "reserve_policy midpoint_first_half reads the mechanism's own knowledge set"
        )
    if cfg.output.checkpoints:
        notes.append(
            f"curve rows are prefixes of one run per variant tuned to T={cfg.scenario.rounds}; "
            "a row at a smaller T keeps that run's epsilon"
        )
    if cfg.scenario.dim < 2:
        notes.append("exploratory_bound is undefined for n = 1")
    return notes


def _run_all(cfg: ExperimentConfig, out: Path, trace: bool, written: list[Path]) -> None:
    rows = []
    seeds = []
    variants = configured_variants(cfg)
    policy = None

    for rep in range(cfg.output.repeats):
        scenario = build_scenario(cfg, rep)
        base = build_mechanism(cfg, scenario)
        seeds.append(repeat_seed(cfg, rep))
        policy = scenario.reserve_policy
        logger.info(f"Repeat {rep} (seed={scenario.seed})")

        for variant in variants:
            if variant is Variant.BASELINE and isinstance(
                policy, (NoReserve, MidpointFirstHalf)
            ):
                logger.warning(
                    f"Skipping baseline: reserve policy {type(policy).__name__} "
                    "cannot be posted on its own"
                )
                continue

            records, summary = run_variant(scenario, base, variant)
            if variant is Variant.BASELINE:
                epsilon, delta, bound = math.nan, math.nan, math.nan
            else:
                mech = variant_config(scenario, base, variant)
                epsilon, delta = mech.effective_epsilon, mech.delta
                bound = (
                    exploratory_round_bound(mech.dim, mech.R, mech.S, epsilon)
                    if mech.dim >= 2
                    else math.nan
                )
            rows.append(_summary_row(variant, rep, scenario.seed, summary, epsilon, delta, bound))

            if trace:
                path = out / f"trace_{variant.value}_{rep}.csv"
                written.append(path)
                write_csv(trace_frame(records), path)
            if cfg.output.checkpoints:
                path = out / f"curve_{variant.value}_{rep}.csv"
                written.append(path)
                write_csv(curve_frame(records, cfg.output.checkpoints), path)

    if not rows:
        raise ConfigError("output.variants: no variant can run on this scenario")

    path = out / "summary.csv"
    written.append(path)
    write_csv(pd.DataFrame(rows, columns=SUMMARY_COLUMNS), path)

    path = out / "meta.txt"
    written.append(path)
    write_text(_meta_text(cfg, seeds, _notes(cfg, policy)), path)


def run_experiment(
    cfg: ExperimentConfig, out_dir: str | Path | None = None, trace: bool | None = None
) -> int:
    """
    Function:
        - Run every configured variant for every repeat and write summary.csv,
          meta.txt and the optional trace and curve files.
        - On failure the files written so far (and a directory this call
          created) are removed.

    Args:
        - cfg: validated experiment configuration
        - out_dir: overrides output.dir
        - trace: overrides output.trace

    Returns:
        - Exit status: 0 success, 2 configuration error, 3 runtime error
    """
    out = Path(out_dir if out_dir is not None else cfg.output.dir)
    trace = cfg.output.trace if trace is None else trace
    created = not out.exists()
    written: list[Path] = []

    logger.info("=" * 60)
    logger.info(f"Experiment {cfg.scenario.name!r} -> {out}")
    try:
        out.mkdir(parents=True, exist_ok=True)
        _run_all(cfg, out, trace, written)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        cleanup_outputs(written, out if created else None)
        return EXIT_CONFIG
    except Exception as e:
        logger.error(f"Experiment failed: {type(e).__name__}: {e}")
        cleanup_outputs(written, out if created else None)
        return EXIT_RUNTIME

    logger.info(f"✓ Experiment finished: {len(written)} file(s) in {out}")
    logger.info("=" * 60)
    return EXIT_OK
