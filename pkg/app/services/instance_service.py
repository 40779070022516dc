import json
import logging
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.core.errors import ContractViolation, ParameterError, SchemaError
from app.models.allocation import Allocation
from app.models.instance import (
    AuctionInstance,
    BidDocument,
    BidRequest,
    InstanceDocument,
    UserDocument,
    VmCatalog,
)
from app.models.response import FeasibilityReport, SmallBidReport
from app.utils.rng import INSTANCE, SeedLike, stream

logger = logging.getLogger(__name__)

AllocationLike = Union[Allocation, Sequence[int], np.ndarray]


def as_vector(x: AllocationLike, n: int) -> np.ndarray:
    """Return x as a float vector of length n, or raise ContractViolation."""
    values = x.x if isinstance(x, Allocation) else np.asarray(x)
    if values.ndim != 1 or values.shape[0] != n:
        raise ContractViolation(f"allocation of length {values.shape[0] if values.ndim else 0} for {n} bids")
    return values.astype(np.float64)


def social_welfare(x: AllocationLike, instance, prices: Optional[np.ndarray] = None) -> float:
    """s(x) = sum_i b_i x_i, under the instance's prices unless others are given."""
    prices = instance.prices if prices is None else np.asarray(prices, dtype=np.float64)
    return float(prices @ as_vector(x, prices.shape[0]))


def resource_usage(x: AllocationLike, instance) -> np.ndarray:
    demands = instance.demands
    return as_vector(x, demands.shape[0]) @ demands


def check_feasible(x: AllocationLike, instance) -> FeasibilityReport:
    """Check capacities (non-strict) and that no user wins twice."""
    vector = as_vector(x, instance.demands.shape[0])
    usage = vector @ instance.demands
    violated = [int(j) for j in np.flatnonzero(usage > instance.capacities)]
    wins = np.bincount(instance.user_index, weights=vector, minlength=len(instance.user_ids))
    users = [instance.user_ids[w] for w in np.flatnonzero(wins > 1)]
    return FeasibilityReport(feasible=not violated and not users, violated_constraints=violated, violated_users=users)


def small_bid_threshold(resource_count: int, datacenter_count: int, epsilon: float) -> float:
    return 1.0 / (2 * resource_count * datacenter_count * (2 + 1 / epsilon))


def check_small_bid(instance: AuctionInstance, epsilon: float) -> SmallBidReport:
    """Compare max_{i,j} R_i^j / c_j against 1 / (2KD(2 + 1/eps))."""
    if not 0 < epsilon < 1:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    threshold = small_bid_threshold(instance.resource_count, instance.datacenter_count, epsilon)
    demands, capacities = instance.demands, instance.capacities
    if demands.size == 0:
        return SmallBidReport(passes=True, max_ratio=0.0, threshold=threshold)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(demands > 0, demands / capacities, 0.0)
    max_ratio = float(ratios.max())
    return SmallBidReport(passes=max_ratio <= threshold, max_ratio=max_ratio, threshold=threshold)


def _bid_from_document(user_id: str, bid: BidDocument) -> BidRequest:
    if bid.R is not None:
        return BidRequest(user_id=user_id, price=bid.price, demands=bid.R)
    counts: Dict[Tuple[int, int], int] = {}
    for vm_type, datacenter, count in bid.q:
        counts[(vm_type, datacenter)] = counts.get((vm_type, datacenter), 0) + count
    return BidRequest(user_id=user_id, price=bid.price, vm_counts=counts)


def instance_from_document(document: InstanceDocument) -> AuctionInstance:
    try:
        catalog = VmCatalog(vm_types=document.catalog) if document.catalog is not None else None
        bids = []
        for user in document.users:
            if not user.bids:
                logger.debug(f"User {user.id} submitted no bids")
            bids.extend(_bid_from_document(user.id, bid) for bid in user.bids)
        return AuctionInstance(
            resource_count=document.K,
            datacenter_count=document.D,
            bids=bids,
            capacities=document.capacities,
            catalog=catalog,
            epsilon=document.epsilon,
        )
    except ValidationError as e:
        raise SchemaError(f"Invalid instance: {e}") from e


def load_instance(path: str) -> AuctionInstance:
    """Read an instance JSON file (0-based VM type and datacenter indices)."""
    try:
        document = InstanceDocument.parse_file(path)
    except ValidationError as e:
        raise SchemaError(f"Invalid instance file {path}: {e}") from e
    instance = instance_from_document(document)
    logger.info(f"Loaded instance from {path}: {instance.bid_count} bids, {instance.user_count} users")
    return instance


def instance_to_document(instance: AuctionInstance) -> InstanceDocument:
    users: Dict[str, UserDocument] = {}
    for bid, row in zip(instance.bids, instance.demands):
        if bid.demands is None and instance.catalog is not None:
            q = [(m, d, count) for (m, d), count in sorted(bid.vm_counts.items())]
            document = BidDocument(price=bid.price, q=q)
        else:
            document = BidDocument(price=bid.price, R=row.tolist())
        users.setdefault(bid.user_id, UserDocument(id=bid.user_id)).bids.append(document)
    return InstanceDocument(
        epsilon=instance.epsilon,
        K=instance.resource_count,
        D=instance.datacenter_count,
        catalog=instance.catalog.vm_types.tolist() if instance.catalog is not None else None,
        users=list(users.values()),
        capacities=instance.capacities.tolist(),
    )


def dump_instance(instance: AuctionInstance, path: str) -> None:
    document = instance_to_document(instance)
    with open(path, "w") as f:
        json.dump(json.loads(document.json(exclude_none=True)), f, indent=2)
    logger.info(f"Wrote instance with {instance.bid_count} bids to {path}")


def round_robin_users(bid_count: int, user_count: int) -> list:
    return [f"u{i % user_count}" for i in range(bid_count)]


def random_instance(
    seed: SeedLike,
    bids: int,
    resources: int = 1,
    datacenters: int = 1,
    users: Optional[int] = None,
    capacity_factor: Tuple[float, float] = (0.2, 0.6),
    epsilon: Optional[float] = None,
) -> AuctionInstance:
    """Random explicit-demand instance with random XOR groups.

    Prices are drawn from U(1, 10), demands from U(0, 5) and each capacity is a
    random fraction of the column's total demand.
    """
    rng = stream(seed, INSTANCE)
    width = resources * datacenters
    user_count = users or (int(rng.integers(1, bids + 1)) if bids else 1)
    owners = rng.integers(0, user_count, size=bids)
    prices = rng.uniform(1.0, 10.0, size=bids)
    demands = rng.uniform(0.0, 5.0, size=(bids, width))
    capacities = demands.sum(axis=0) * rng.uniform(*capacity_factor, size=width)
    return AuctionInstance.from_arrays(
        prices,
        demands,
        capacities,
        users=[f"u{w}" for w in owners],
        resource_count=resources,
        datacenter_count=datacenters,
        epsilon=epsilon,
    )


def small_bid_instance(
    seed: SeedLike,
    bids: int,
    epsilon: float,
    resources: int = 1,
    datacenters: int = 1,
    users: Optional[int] = None,
) -> AuctionInstance:
    """Random instance whose demand-to-capacity ratios pass check_small_bid.

    Users are assigned round-robin; the default of floor(N/2) users gives every
    user at least two bids.
    """
    rng = stream(seed, INSTANCE)
    width = resources * datacenters
    user_count = users or max(bids // 2, 1)
    prices = rng.uniform(1.0, 10.0, size=bids)
    demands = rng.uniform(0.1, 1.0, size=(bids, width))
    threshold = small_bid_threshold(resources, datacenters, epsilon)
    peak = demands.max(axis=0) if bids else np.ones(width)
    capacities = peak / threshold * rng.uniform(1.0, 1.5, size=width)
    return AuctionInstance.from_arrays(
        prices,
        demands,
        capacities,
        users=round_robin_users(bids, user_count),
        resource_count=resources,
        datacenter_count=datacenters,
        epsilon=epsilon,
    )


def with_price(instance: AuctionInstance, i: int, price: float) -> AuctionInstance:
    """Copy of the instance where bid i reports ``price``."""
    bids = list(instance.bids)
    bids[i] = bids[i].copy(update={"price": float(price)})
    return AuctionInstance(
        resource_count=instance.resource_count,
        datacenter_count=instance.datacenter_count,
        bids=bids,
        capacities=instance.capacities,
        catalog=instance.catalog,
        epsilon=instance.epsilon,
    )
