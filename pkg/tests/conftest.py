"""Shared instance generators for the solver and estimator test suites."""

import numpy as np
import pytest

from aggrex.aggregate import CandidatePool


def random_pool(
    seed: int,
    n_max: int = 10,
    ball_prob: float = 0.35,
    agree_prob: float = 0.85,
    max_pairs_per_candidate: int = 4,
    max_pairs_total: int = 12,
) -> CandidatePool:
    """Random square pool with self-membership and bounded disagreeing pairs.

    Bounds keep brute_force enumeration cheap; the seed stream is fixed, so
    regenerating on a bound violation stays deterministic.
    """
    rng = np.random.default_rng(seed)
    for _ in range(200):
        n = int(rng.integers(3, n_max + 1))
        within = rng.random((n, n)) < ball_prob
        np.fill_diagonal(within, True)
        agree = rng.random((n, n)) < agree_prob
        per_candidate = (within & ~agree).sum(axis=1)
        if per_candidate.max(initial=0) <= max_pairs_per_candidate and per_candidate.sum() <= max_pairs_total:
            radii = rng.uniform(0.5, 2.0, size=n)
            return CandidatePool(radii=radii, within=within, agree=agree)
    raise RuntimeError(f"could not generate a bounded pool from seed {seed}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
