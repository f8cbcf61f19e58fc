import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

logger = logging.getLogger(__name__)


def run_jobs(fn, items, workers: int = 1) -> list:
    """Apply fn to every item; results come back in submission order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug("running %d jobs on %d workers", len(items), workers)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(fn, item) for item in items]
        return [f.result() for f in futures]


def spawn_generators(seed, count: int) -> list[np.random.Generator]:
    """Independent child streams for Monte Carlo replicates."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]
