"""Shared fixtures: a small deterministic corpus reused across test modules."""
import numpy as np
import pytest

from sigver.features import extract_features
from sigver.synth import SynthConfig, generate_records

TINY_SEED = 424242


@pytest.fixture(scope="session")
def tiny_config() -> SynthConfig:
    return SynthConfig(n_users=6, seed=TINY_SEED)


@pytest.fixture(scope="session")
def tiny_records(tiny_config):
    return generate_records(tiny_config)


@pytest.fixture(scope="session")
def tiny_features(tiny_records):
    return {r.key: extract_features(r) for r in tiny_records}


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
