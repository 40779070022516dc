import logging
from typing import Optional

import numpy as np

from app.core.config import settings
from app.core.errors import ContractViolation, ParameterError
from app.models.allocation import Allocation, FractionalAllocation, PerturbedInstance, ThetaDraw
from app.models.instance import AuctionInstance
from app.utils.rng import THETA, SeedLike, as_key, stream

logger = logging.getLogger(__name__)


def check_epsilon(epsilon: float) -> float:
    if not 0 < epsilon < 1:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    return float(epsilon)


def perturbed_columns(constraint_count: int, unperturbed: int = None) -> np.ndarray:
    """Flattened constraint indices perturbed by theta rows 1..KD-1, ascending."""
    unperturbed = settings.UNPERTURBED_CONSTRAINT if unperturbed is None else unperturbed
    if not -constraint_count <= unperturbed < constraint_count:
        raise ParameterError(f"unperturbed constraint {unperturbed} out of range for {constraint_count}")
    skipped = unperturbed % constraint_count
    return np.array([j for j in range(constraint_count) if j != skipped], dtype=np.int64)


def draw_thetas(epsilon: float, bid_count: int, constraint_count: int, seed: SeedLike) -> ThetaDraw:
    """Draw a KD x N matrix of i.i.d. U[0, eps/N] entries from the THETA stream of ``seed``."""
    epsilon = check_epsilon(epsilon)
    if bid_count < 1 or constraint_count < 1:
        raise ParameterError("draw_thetas needs N >= 1 and KD >= 1")
    rng = stream(seed, THETA)
    theta = rng.uniform(0.0, epsilon / bid_count, size=(constraint_count, bid_count))
    return ThetaDraw(epsilon=epsilon, theta=theta, seed=list(as_key(seed)))


def zero_thetas(epsilon: float, bid_count: int, constraint_count: int) -> ThetaDraw:
    """Deterministic theta = 0 draw used by derandomized runs."""
    return ThetaDraw(epsilon=check_epsilon(epsilon), theta=np.zeros((constraint_count, bid_count)))


def perturb_instance(
    instance: AuctionInstance,
    theta: ThetaDraw,
    prices: Optional[np.ndarray] = None,
    unperturbed: int = None,
) -> PerturbedInstance:
    """
    Perturb prices and all but one capacity column.

    b_hat_i = (1 - eps/2) b_i + theta0_i * sum(b) / N
    R_hat_i^j = R_i^j + theta_i^j * sum_i' R_i'^j / N   (j perturbed)

    Args:
        instance: base instance
        theta: noise draw of shape (KD, N)
        prices: price vector replacing the instance's own (marginal runs zero one entry)
        unperturbed: flattened constraint left untouched (default from settings, -1 = last)
    """
    n, dims = instance.bid_count, instance.constraint_count
    if theta.theta.shape != (dims, n):
        raise ContractViolation(f"theta has shape {theta.theta.shape}, expected {(dims, n)}")
    prices = instance.prices if prices is None else np.asarray(prices, dtype=np.float64)
    if prices.shape != (n,):
        raise ContractViolation(f"expected {n} prices, got {prices.shape}")
    epsilon = theta.epsilon
    b_hat = (1 - epsilon / 2) * prices + theta.objective * prices.sum() / n

    columns = perturbed_columns(dims, unperturbed)
    R_hat = np.array(instance.demands, dtype=np.float64)
    column_totals = instance.demands[:, columns].sum(axis=0)
    R_hat[:, columns] += theta.theta[1:].T * column_totals / n
    return PerturbedInstance(
        base=instance,
        b_hat=b_hat,
        R_hat=R_hat,
        theta=theta,
        unperturbed_constraint=int(np.setdiff1d(np.arange(dims), columns)[0]),
    )


def apply_p_transpose(x: Allocation, theta: ThetaDraw) -> FractionalAllocation:
    """x^f_i = (1 - eps/2) x_i + (theta0 . x) / N."""
    n = theta.bid_count
    if len(x) != n:
        raise ContractViolation(f"allocation of length {len(x)} for theta over {n} bids")
    values = x.x.astype(np.float64)
    mass = float(theta.objective @ values)
    return FractionalAllocation(x=(1 - theta.epsilon / 2) * values + mass / n)
