"""Shared test fixtures.

Settings come from environment variables, so every test runs against a
coarse grid and small Monte Carlo budgets set here; the settings cache is
cleared around each test so overrides never leak.
"""

import numpy as np
import pytest

from taplab.config import get_settings
from taplab.core.measures import AtomicMeasure, PrefixSpec
from taplab.core.mixture import Mixture
from taplab.core.parisi_pde import GridSpec

TEST_ENV = {
    "GRID_POINTS": "1025",
    "QUAD_NODES": "48",
    "MC_PATHS": "4000",
    "MC_CHUNK_SIZE": "2000",
    "SIMPLEX_STALL_ITERATIONS": "60",
    "SIMPLEX_MAX_ITERATIONS": "800",
    "MULTISTART": "2",
}


@pytest.fixture(autouse=True)
def _test_settings(monkeypatch, tmp_path):
    for key, value in TEST_ENV.items():
        monkeypatch.setenv(key, value)
    monkeypatch.setenv("OUTPUT_DIR", str(tmp_path / "out"))
    get_settings.cache_clear()
    yield get_settings()
    get_settings.cache_clear()


def _make_grid(**overrides) -> GridSpec:
    """A coarse grid that still resolves the layers of moderate mixtures."""
    defaults = {"half_width": None, "points": 1025, "quad_nodes": 48}
    defaults.update(overrides)
    return GridSpec(**defaults)


def _make_mixture(**overrides) -> Mixture:
    """ξ(t) = ½t² + ¼t⁴ unless coefficients are overridden by degree, e.g. ``p4=0.1``."""
    coeffs = {2: 0.5, 4: 0.25}
    for key, value in overrides.items():
        coeffs[int(key.removeprefix("p"))] = value
    return Mixture.from_pairs(coeffs.items())


def _make_prefix(**overrides) -> PrefixSpec:
    defaults = {"u": (0.2, 0.6), "q": (0.3, 0.7), "tail": None}
    defaults.update(overrides)
    return PrefixSpec(**defaults)


@pytest.fixture()
def grid() -> GridSpec:
    return _make_grid()


@pytest.fixture()
def mixture() -> Mixture:
    return _make_mixture()


@pytest.fixture()
def sk_half() -> Mixture:
    """SK at β = 0.5, inside the replica-symmetric phase."""
    return Mixture.sk(0.5)


@pytest.fixture()
def two_atoms() -> AtomicMeasure:
    return AtomicMeasure([0.0, 0.5], [0.3, 0.7])


@pytest.fixture()
def prefix() -> PrefixSpec:
    return _make_prefix()


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
