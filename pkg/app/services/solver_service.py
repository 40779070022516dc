import logging
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from app.core.config import settings
from app.core.errors import ContractViolation, FrontSizeExceeded, SolverDriftError, WorkBudgetExceeded
from app.models.allocation import Allocation, ParetoEntry, ParetoFront
from app.models.base import frozen_array

logger = logging.getLogger(__name__)


def dominates(a: ParetoEntry, b: ParetoEntry) -> bool:
    """True iff a is at least as good as b in welfare and every usage, strictly in one."""
    if a.stage != b.stage or a.usage.shape != b.usage.shape:
        raise ContractViolation(f"cannot compare entries of stage {a.stage} and {b.stage}")
    if a.welfare < b.welfare or np.any(a.usage > b.usage):
        return False
    return a.welfare > b.welfare or bool(np.any(a.usage < b.usage))


class ParetoSolver:
    """Stage-wise Pareto-front dynamic program for the welfare ILP.

    Stage i extends every entry of P(i-1) by rejecting or (if capacity and the
    user's XOR group allow) accepting bid i, then prunes. An entry b is pruned
    when some a has welfare >= and usage <= b's, the users a has already
    served that still bid later are a subset of b's, and a is either strictly
    better somewhere or ranks before b. Rank orders by welfare descending, then
    usage, then x, lexicographically. After the last stage no user bids later,
    so the kept set is the Pareto set with one lex-smallest x per value class.
    """

    def __init__(
        self,
        front_size_limit: int = None,
        debug_recompute: bool = None,
        chunk_elements: int = None,
        operation_budget: int = None,
    ):
        self.front_size_limit = front_size_limit or settings.FRONT_SIZE_LIMIT
        self.debug_recompute = settings.SOLVER_DEBUG_RECOMPUTE if debug_recompute is None else debug_recompute
        self.chunk_elements = chunk_elements or settings.PRUNE_CHUNK_ELEMENTS
        # 0 disables the budget
        self.operation_budget = settings.SOLVER_OPERATION_BUDGET if operation_budget is None else operation_budget

    def pareto_front(self, problem, prices: Optional[np.ndarray] = None, keep_stages: bool = False) -> ParetoFront:
        """
        Compute P(N) for an instance or a perturbed instance.

        Args:
            problem: anything exposing demands, capacities, user_index, user_ids and prices
            prices: objective coefficients (defaults to problem.prices)
            keep_stages: also return the x-matrix of every intermediate front

        Returns:
            ParetoFront ordered by rank; entry 0 is the welfare maximizer
        """
        demands = problem.demands
        capacities = problem.capacities
        prices = problem.prices if prices is None else np.asarray(prices, dtype=np.float64)
        n, dims = demands.shape[0], capacities.shape[0]
        if prices.shape != (n,):
            raise ContractViolation(f"expected {n} prices, got {prices.shape}")
        user_index = np.asarray(problem.user_index, dtype=np.int64)
        users = len(problem.user_ids)
        last_bid = np.full(users, -1, dtype=np.int64)
        np.maximum.at(last_bid, user_index, np.arange(n))

        x = np.zeros((1, n), dtype=np.int8)
        welfare = np.zeros(1)
        usage = np.zeros((1, dims))
        wins = np.zeros((1, users), dtype=bool)
        stage_sizes = []
        history = [] if keep_stages else None
        operations = 0

        for i in range(n):
            user = user_index[i]
            grown = usage + demands[i]
            accept = ~wins[:, user] & np.all(grown <= capacities, axis=1)
            extended_x = x[accept].copy()
            extended_x[:, i] = 1
            extended_wins = wins[accept].copy()
            extended_wins[:, user] = True

            x = np.concatenate([x, extended_x])
            welfare = np.concatenate([welfare, welfare[accept] + prices[i]])
            usage = np.concatenate([usage, grown[accept]])
            wins = np.concatenate([wins, extended_wins])

            m = x.shape[0]
            operations += m * m * (dims + 1) + len(accept) * dims
            if self.operation_budget and operations > self.operation_budget:
                raise WorkBudgetExceeded(stage=i + 1, operations=operations, budget=self.operation_budget)
            order = self._rank(x[:, : i + 1], welfare, usage)
            x, welfare, usage, wins = x[order], welfare[order], usage[order], wins[order]
            future = wins[:, last_bid > i]
            keep = ~self._beaten(welfare, usage, future)
            x, welfare, usage, wins = x[keep], welfare[keep], usage[keep], wins[keep]

            size = x.shape[0]
            stage_sizes.append(size)
            if size > self.front_size_limit:
                raise FrontSizeExceeded(stage=i + 1, size=size, limit=self.front_size_limit)
            if self.debug_recompute:
                self._verify(x, welfare, usage, prices, demands, stage=i + 1)
            if keep_stages:
                history.append(frozen_array(x[:, : i + 1], dtype=np.int8, ndim=2))
            logger.debug(f"Stage {i + 1}/{n}: {m} candidates, {size} kept")

        front = ParetoFront(
            stage=n,
            x=frozen_array(x, dtype=np.int8, ndim=2),
            welfare=frozen_array(welfare, ndim=1),
            usage=frozen_array(usage, ndim=2),
            user_index=frozen_array(user_index, dtype=np.int64, ndim=1),
            user_ids=list(problem.user_ids),
            stage_sizes=stage_sizes,
            operations=operations,
            history=history,
        )
        if not front.is_monotone:
            logger.debug(f"Front sizes decreased along the stages: {stage_sizes}")
        return front

    @staticmethod
    def _rank(x: np.ndarray, welfare: np.ndarray, usage: np.ndarray) -> np.ndarray:
        # np.lexsort treats its last key as primary
        keys = [x[:, k] for k in reversed(range(x.shape[1]))]
        keys += [usage[:, j] for j in reversed(range(usage.shape[1]))]
        keys.append(-welfare)
        return np.lexsort(keys)

    def _beaten(self, welfare: np.ndarray, usage: np.ndarray, future: np.ndarray) -> np.ndarray:
        """Mark every ranked candidate that some other candidate beats."""
        m, dims = usage.shape
        packed = np.packbits(future, axis=1)
        beaten = np.zeros(m, dtype=bool)
        positions = np.arange(m)
        chunk = max(1, self.chunk_elements // max(1, m * (dims + 1)))
        for lo in range(0, m, chunk):
            hi = min(m, lo + chunk)
            s_b = welfare[lo:hi, None]
            c_b = usage[lo:hi, None, :]
            weak = (welfare[None, :] >= s_b) & np.all(usage[None, :, :] <= c_b, axis=2)
            strict = (welfare[None, :] > s_b) | np.any(usage[None, :, :] < c_b, axis=2)
            earlier = positions[None, :] < positions[lo:hi, None]
            rows, cols = np.nonzero(weak & (strict | earlier))
            if rows.size == 0:
                continue
            # served-later users of a must be a subset of b's
            nested = ~np.any(packed[cols] & ~packed[lo + rows], axis=1)
            beaten[lo + rows[nested]] = True
        return beaten

    @staticmethod
    def _verify(x, welfare, usage, prices, demands, stage: int) -> None:
        expected_welfare = x.astype(np.float64) @ prices
        expected_usage = x.astype(np.float64) @ demands
        if not np.allclose(welfare, expected_welfare) or not np.allclose(usage, expected_usage):
            raise SolverDriftError(f"Running sums drifted at stage {stage}", stage=stage)

    def solve_exact(self, problem, prices: Optional[np.ndarray] = None) -> Tuple[Allocation, float]:
        """Maximize prices . x.

        Welfare ties go to the smallest usage vector, then the lexicographically
        smallest x, not to the first maximizer found in stage order. The choice
        only depends on the front, so it is stable under pruning order and
        chunking.
        """
        front = self.pareto_front(problem, prices)
        return Allocation(x=front.x[0]), float(front.welfare[0])


def front_trace_frame(front: ParetoFront) -> pd.DataFrame:
    """Per-stage front sizes as (stage, front_size) rows, stages numbered from 1."""
    return pd.DataFrame({
        "stage": np.arange(1, len(front.stage_sizes) + 1),
        "front_size": np.asarray(front.stage_sizes, dtype=np.int64),
    })
