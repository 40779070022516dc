"""Exhaustive reference implementations for small instances.

Nothing here shares code with the Pareto solver: every subset is enumerated
as a bitmask, sums are built by doubling the table one bid at a time (so each
subset is summed in bid order) and dominance is checked pairwise.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np

from app.core.config import settings
from app.core.errors import OracleLimitExceeded
from app.models.allocation import Allocation, AllocationDistribution, FractionalAllocation

logger = logging.getLogger(__name__)


def _enumerate(problem, prices: Optional[np.ndarray], limit: Optional[int]):
    limit = limit or settings.ORACLE_MAX_BIDS
    demands, capacities = problem.demands, problem.capacities
    n = demands.shape[0]
    if n > limit:
        raise OracleLimitExceeded(f"oracle refuses {n} bids (limit {limit})", bids=n, limit=limit)
    prices = problem.prices if prices is None else np.asarray(prices, dtype=np.float64)

    welfare = np.zeros(1)
    usage = np.zeros((1, capacities.shape[0]))
    for t in range(n):
        welfare = np.concatenate([welfare, welfare + prices[t]])
        usage = np.concatenate([usage, usage + demands[t]])
    masks = np.arange(1 << n, dtype=np.int64)

    feasible = np.all(usage <= capacities, axis=1)
    user_index = np.asarray(problem.user_index)
    for w in range(len(problem.user_ids)):
        group = 0
        for t in np.flatnonzero(user_index == w):
            group |= 1 << int(t)
        chosen = masks & group
        feasible &= (chosen & (chosen - 1)) == 0

    # x_0 is the most significant position of the lexicographic order
    lex = np.zeros_like(masks)
    for t in range(n):
        lex |= ((masks >> t) & 1) << (n - 1 - t)
    return n, masks, welfare, usage, feasible, lex


def _allocation(mask: int, n: int) -> Allocation:
    return Allocation(x=[(mask >> t) & 1 for t in range(n)])


def brute_force_optimal(problem, prices: Optional[np.ndarray] = None, limit: int = None) -> Tuple[Allocation, float]:
    """Best feasible subset; ties go to the lexicographically smallest x."""
    n, masks, welfare, _, feasible, lex = _enumerate(problem, prices, limit)
    best = welfare[feasible].max()
    candidates = np.flatnonzero(feasible & (welfare == best))
    winner = candidates[np.argmin(lex[candidates])]
    return _allocation(int(masks[winner]), n), float(best)


def brute_force_pareto(
    problem,
    prices: Optional[np.ndarray] = None,
    limit: int = None,
    chunk: int = 512,
) -> List[Allocation]:
    """All feasible non-dominated allocations, one lex-smallest x per (welfare, usage) value."""
    n, masks, welfare, usage, feasible, lex = _enumerate(problem, prices, limit)
    index = np.flatnonzero(feasible)
    s, c = welfare[index], usage[index]
    dominated = np.zeros(index.size, dtype=bool)
    for lo in range(0, index.size, chunk):
        hi = min(index.size, lo + chunk)
        weak = (s[None, :] >= s[lo:hi, None]) & np.all(c[None, :, :] <= c[lo:hi, None, :], axis=2)
        strict = (s[None, :] > s[lo:hi, None]) | np.any(c[None, :, :] < c[lo:hi, None, :], axis=2)
        dominated[lo:hi] = np.any(weak & strict, axis=1)

    representatives = {}
    for k in np.flatnonzero(~dominated):
        value = (float(s[k]),) + tuple(float(v) for v in c[k])
        if value not in representatives or lex[index[k]] < lex[index[representatives[value]]]:
            representatives[value] = k
    front = sorted(representatives.values(), key=lambda k: lex[index[k]])
    logger.debug(f"Oracle front: {len(front)} of {index.size} feasible subsets")
    return [_allocation(int(masks[index[k]]), n) for k in front]


def exact_expected_allocation(dist: AllocationDistribution) -> FractionalAllocation:
    """Sum over the support of probability times allocation."""
    n = len(dist.support[0])
    expected = np.zeros(n)
    for allocation, probability in zip(dist.support, dist.probabilities):
        expected += probability * allocation.x
    return FractionalAllocation(x=expected)
