import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from app.core.config import settings
from app.core.errors import AuctionError, ContractViolation
from app.models.allocation import Allocation
from app.models.instance import AuctionInstance
from app.models.response import AllocationTrace, AuctionOutcome
from app.services.allocation_service import AllocationService
from app.utils.artifacts import key_label, write_csv
from app.utils.rng import MARGINAL, SeedLike, as_key, child_key

logger = logging.getLogger(__name__)


def marginal_prices(instance: AuctionInstance, i: int) -> np.ndarray:
    """b_{-i}: the price vector with bid i's price set to 0, demands untouched."""
    prices = np.array(instance.prices, dtype=np.float64)
    prices[i] = 0.0
    return prices


def externality(prices: np.ndarray, i: int, y: np.ndarray, prices_minus: np.ndarray, y_minus: np.ndarray) -> float:
    """b_{-i}.y_{-i} - (b.y - b_i y_i); works for 0/1 samples and for expectations."""
    return float(prices_minus @ y_minus - (prices @ y - prices[i] * y[i]))


class PaymentService:
    """Randomized VCG payments and the full auction."""

    def __init__(self, allocation_service: AllocationService = None, jobs: int = None):
        self.allocation_service = allocation_service or AllocationService()
        self.jobs = jobs or settings.JOBS

    def vcg_payment(
        self,
        instance: AuctionInstance,
        epsilon: float,
        i: int,
        y_eps: Allocation,
        seed: SeedLike,
        zero_theta: bool = False,
        force_primary: bool = False,
        policy: str = None,
    ) -> Tuple[float, AllocationTrace]:
        """
        Realized payment of bid i for the sampled allocation y_eps.

        The marginal run re-solves with b_i = 0 on its own stream
        (seed, MARGINAL, i), independent of the run that produced y_eps.
        """
        n = instance.bid_count
        if not 0 <= i < n or len(y_eps) != n:
            raise ContractViolation(f"bid {i} / allocation length {len(y_eps)} for {n} bids")
        prices_minus = marginal_prices(instance, i)
        try:
            y_minus, trace = self.allocation_service.allocate(
                instance,
                epsilon,
                child_key(seed, MARGINAL, i),
                prices=prices_minus,
                zero_theta=zero_theta,
                force_primary=force_primary,
                policy=policy,
            )
        except AuctionError as e:
            e.with_context(marginal=i)
            raise
        y = y_eps.x.astype(np.float64)
        payment = externality(instance.prices, i, y, prices_minus, y_minus.x.astype(np.float64))
        return payment, trace

    def run_auction(
        self,
        instance: AuctionInstance,
        epsilon: float,
        seed: SeedLike,
        zero_theta: bool = False,
        force_primary: bool = False,
        policy: str = None,
    ) -> AuctionOutcome:
        """One allocation for y_eps, then one marginal run per bid (winners and losers)."""
        y, trace = self.allocation_service.allocate(
            instance, epsilon, seed, zero_theta=zero_theta, force_primary=force_primary, policy=policy
        )

        def payment(i: int) -> Tuple[float, AllocationTrace]:
            return self.vcg_payment(instance, epsilon, i, y, seed, zero_theta, force_primary, policy)

        indices = range(instance.bid_count)
        if self.jobs > 1 and instance.bid_count > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as executor:
                results = list(executor.map(payment, indices))
        else:
            results = [payment(i) for i in indices]

        outcome = AuctionOutcome(
            allocation=y,
            payments=np.array([p for p, _ in results], dtype=np.float64),
            prices=instance.prices,
            user_ids=instance.user_ids,
            bid_users=[bid.user_id for bid in instance.bids],
            trace=trace,
            marginal_traces=[t for _, t in results],
            seed=list(as_key(seed)),
        )
        logger.info(
            f"Auction {key_label(as_key(seed))}: {len(y.winners)} winners, welfare {outcome.welfare:.6g}, "
            f"revenue {outcome.revenue:.6g}"
        )
        return outcome

    def expected_payment(
        self,
        instance: AuctionInstance,
        epsilon: float,
        i: int,
        seed: SeedLike,
        zero_theta: bool = False,
        policy: str = None,
    ) -> float:
        """
        Payment of bid i with both runs averaged exactly over their finite supports.

        Theta is still drawn from the same streams as run_auction uses, so for a
        given seed this is the conditional mean of the realized payment.
        """
        service = self.allocation_service
        prices_minus = marginal_prices(instance, i)
        y = service.expected_allocation(instance, epsilon, seed, zero_theta=zero_theta, policy=policy)
        y_minus = service.expected_allocation(
            instance, epsilon, child_key(seed, MARGINAL, i), prices=prices_minus, zero_theta=zero_theta, policy=policy
        )
        return externality(instance.prices, i, y, prices_minus, y_minus)


def outcome_frame(outcome: AuctionOutcome) -> pd.DataFrame:
    return pd.DataFrame({
        "bid_id": np.arange(len(outcome.allocation)),
        "user_id": outcome.bid_users,
        "price": outcome.prices,
        "won": outcome.allocation.x.astype(int),
        "payment_realized": outcome.payments,
        "payment_charged": outcome.charged,
        "seed": key_label(outcome.seed),
    })


def write_outcome_csv(outcome: AuctionOutcome, path: str, metadata: Optional[dict] = None) -> str:
    meta = {"seed": outcome.seed, "charged": "winners only", "revenue": outcome.revenue}
    meta.update(metadata or {})
    return write_csv(outcome_frame(outcome), path, meta)
