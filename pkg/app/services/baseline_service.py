import logging

import numpy as np

from app.models.allocation import Allocation
from app.models.instance import AuctionInstance

logger = logging.getLogger(__name__)

BASELINE_LABEL = "PDAA-proxy"


def bid_densities(instance: AuctionInstance) -> np.ndarray:
    """b_i / sum_j R_i^j / c_j; zero-demand bids get +inf, zero-price zero-demand bids 0."""
    demands, capacities = instance.demands, instance.capacities
    with np.errstate(divide="ignore", invalid="ignore"):
        normalized = np.where(demands > 0, demands / capacities, 0.0).sum(axis=1)
        density = np.where(normalized > 0, instance.prices / normalized, np.inf)
    return np.where((normalized == 0) & (instance.prices == 0), 0.0, density)


def greedy_allocate(instance: AuctionInstance) -> Allocation:
    """
    Greedy density baseline standing in for the primal-dual comparison auction.

    Bids are visited by descending density (zero-demand bids first, by price;
    remaining ties by lower index) and accepted when capacity and the user's
    XOR group still allow it.
    """
    n = instance.bid_count
    x = np.zeros(n, dtype=np.int8)
    if n == 0:
        return Allocation(x=x)
    density = bid_densities(instance)
    zero_demand = ~np.any(instance.demands > 0, axis=1)
    # lexsort: last key primary
    order = np.lexsort((np.arange(n), -instance.prices * zero_demand, -density))
    usage = np.zeros(instance.constraint_count)
    served = np.zeros(instance.user_count, dtype=bool)
    for i in order:
        user = instance.user_index[i]
        grown = usage + instance.demands[i]
        if served[user] or np.any(grown > instance.capacities):
            continue
        x[i], usage, served[user] = 1, grown, True
    logger.debug(f"{BASELINE_LABEL} accepted {int(x.sum())} of {n} bids")
    return Allocation(x=x)
