import math
from pathlib import Path

import numpy as np
import pytest

from price_sim.app.core.ellipsoid import Ellipsoid


def random_spd(rng: np.random.Generator, n: int, cond: float = 50.0) -> np.ndarray:
    """SPD matrix with eigenvalues spread over [1/cond, 1] in a random basis."""
    basis, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigenvalues = np.exp(rng.uniform(-math.log(cond), 0.0, n))
    shape = basis @ np.diag(eigenvalues) @ basis.T
    return 0.5 * (shape + shape.T)


def random_unit(rng: np.random.Generator, n: int) -> np.ndarray:
    x = rng.standard_normal(n)
    return x / np.linalg.norm(x)


def random_ellipsoid(rng: np.random.Generator, n: int) -> Ellipsoid:
    return Ellipsoid(center=rng.uniform(-0.5, 0.5, n), shape=random_spd(rng, n))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def write_config(tmp_path: Path):
    """Write experiment text to a file and return its path."""

    def _write(text: str, name: str = "experiment.toml") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


MINIMAL_CONFIG = """
scenario.dim = 2
scenario.rounds = 100
scenario.seed = 1
"""

ONE_DIMENSIONAL_CONFIG = """
scenario.name = "one_dimensional"
scenario.dim = 1
scenario.rounds = 100
scenario.feature_gen = "constant"
scenario.reserve_policy = "fixed"
scenario.reserve_param = 1.0
scenario.theta_norm = 1.4142135623730951
mechanism.R = 2.0
mechanism.initial_lower = 0.0
"""
