import logging
from importlib import metadata
from pathlib import Path

import numpy as np
import pandas as pd

from price_sim.app.core.pricing import ConfigError
from price_sim.app.tasks.run_scenario import RoundRecord

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.9g"

TRACE_COLUMNS = [
    "round",
    "kind",
    "posted",
    "reserve",
    "value",
    "accepted",
    "regret",
    "knowledge_width",
]
CURVE_COLUMNS = ["t", "cum_regret", "cum_value", "regret_ratio"]

VERSIONED_PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "pydantic-settings")


class ExportError(Exception):
    """Raised when a result file cannot be written."""

    pass


class EmptyRun(Exception):
    """Raised when there are no round records to export."""

    pass


def trace_frame(records: list[RoundRecord]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "round": [r.round for r in records],
            "kind": [r.kind.value for r in records],
            "posted": [np.nan if r.posted is None else r.posted for r in records],
            "reserve": [r.reserve for r in records],
            "value": [r.value for r in records],
            "accepted": [r.accepted for r in records],
            "regret": [r.regret for r in records],
            "knowledge_width": [r.knowledge_width for r in records],
        },
        columns=TRACE_COLUMNS,
    )


def curve_frame(records: list[RoundRecord], checkpoints: list[int]) -> pd.DataFrame:
    """
    Function:
        - Cumulative regret, cumulative sellable value and their ratio at each
          checkpoint t (1-based, inclusive); empty checkpoints means [T].

    Raise:
        - EmptyRun for an empty trace
        - ConfigError for checkpoints that are not ascending or exceed T
    """
    if not records:
        raise EmptyRun("No round records to build a regret curve from")
    T = len(records)
    checkpoints = list(checkpoints) or [T]
    if checkpoints != sorted(set(checkpoints)) or checkpoints[0] < 1 or checkpoints[-1] > T:
        raise ConfigError(f"Checkpoints must be strictly ascending within [1, {T}]")

    cum_regret = np.cumsum([r.regret for r in records])
    cum_value = np.cumsum([max(r.value, 0.0) for r in records])
    idx = np.asarray(checkpoints) - 1

    regret_at, value_at = cum_regret[idx], cum_value[idx]
    ratio = np.divide(
        regret_at, value_at, out=np.zeros_like(regret_at), where=value_at > 0
    )
    return pd.DataFrame(
        {"t": checkpoints, "cum_regret": regret_at, "cum_value": value_at, "regret_ratio": ratio},
        columns=CURVE_COLUMNS,
    )


def to_csv_text(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def emit_regret_curve(records: list[RoundRecord], checkpoints: list[int]) -> str:
    """CSV text `t,cum_regret,cum_value,regret_ratio`, one row per checkpoint."""
    return to_csv_text(curve_frame(records, checkpoints))


def write_text(text: str, path: Path) -> Path:
    """
    Function:
        - Write a UTF-8 text file and confirm it landed on disk.

    Raise:
        - ExportError on any I/O failure
    """
    try:
        logger.info(f"Writing: {path}")
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)

        if not path.exists():
            raise ExportError(f"Failed to create file: {path}")
        logger.info(f"File created: {path.stat().st_size} bytes")
        return path

    except OSError as e:
        logger.error(f"File I/O error while writing {path}: {e}")
        raise ExportError(f"Cannot write {path}: {e}") from e


def write_csv(df: pd.DataFrame, path: Path) -> Path:
    return write_text(to_csv_text(df), path)


def package_versions() -> dict[str, str]:
    versions = {}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions
