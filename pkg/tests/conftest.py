import numpy as np
import pytest

from app.config import ScenarioConfig


def spd(rng, n, lo=0.5, hi=2.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (q * rng.uniform(lo, hi, n)) @ q.T


def psd(rng, n, rank=2):
    g = rng.standard_normal((rank, n))
    return g.T @ g


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """Two robots, short horizon: fast end-to-end runs."""
    return ScenarioConfig(
        num_robots=2, horizon=2, t_end=4, lane_scale=4.0,
        feature_count=60, feature_margin=10.0, seed=5, replicates=1,
    )


@pytest.fixture
def small_config():
    return ScenarioConfig(
        num_robots=3, horizon=4, t_end=8, lane_scale=4.0,
        feature_count=120, feature_margin=10.0, seed=3, replicates=1,
    )
