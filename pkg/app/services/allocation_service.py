import logging
from typing import List, Optional, Tuple

import numpy as np

from app.core.config import settings
from app.core.errors import ContractViolation, InfeasibleBasis, InvalidDistribution, ParameterError
from app.models.allocation import Allocation, AllocationDistribution, ThetaDraw
from app.models.instance import AuctionInstance
from app.models.response import AllocationTrace
from app.services.perturbation_service import check_epsilon, draw_thetas, perturb_instance, zero_thetas
from app.services.solver_service import ParetoSolver
from app.utils.rng import SAMPLE, SeedLike, as_key, stream

logger = logging.getLogger(__name__)

POLICIES = ("reject", "renormalize")
REMAINDER_TOLERANCE = 1e-12


def individually_feasible(instance) -> np.ndarray:
    """Mask of bids whose demand row fits the capacities on its own."""
    return np.all(instance.demands <= instance.capacities, axis=1)


def build_distribution(
    x_p: Allocation,
    theta: ThetaDraw,
    instance,
    policy: str = None,
) -> AllocationDistribution:
    """
    Build the law over [x^p, l_1..l_N, 0].

    Pr[x^p] = 1 - eps/2, Pr[l_i] = (theta0 . x^p) / N and the zero vector takes
    the remainder eps/2 - theta0 . x^p. A negative remainder raises
    InvalidDistribution unless policy is "renormalize", which gives every l_i
    (eps/2)/N and the zero vector nothing.
    """
    policy = policy or settings.DISTRIBUTION_POLICY
    if policy not in POLICIES:
        raise ParameterError(f"unknown distribution policy {policy!r}")
    n = theta.bid_count
    if len(x_p) != n:
        raise ContractViolation(f"x^p has length {len(x_p)} but theta covers {n} bids")
    infeasible = np.flatnonzero(~individually_feasible(instance))
    if infeasible.size:
        raise InfeasibleBasis(infeasible.tolist())

    epsilon = theta.epsilon
    mass = float(theta.objective @ x_p.x.astype(np.float64))
    basis_probability = mass / n
    remainder = epsilon / 2 - mass
    renormalized = False
    if remainder < 0:
        if remainder > -REMAINDER_TOLERANCE:
            remainder = 0.0
        elif policy == "reject":
            raise InvalidDistribution(mass=mass, remainder=remainder, epsilon=epsilon)
        else:
            logger.warning(f"Renormalizing distribution: mass {mass:.6g} exceeds eps/2={epsilon / 2:.6g}")
            basis_probability, remainder, renormalized = epsilon / 2 / n, 0.0, True

    support = [x_p] + [Allocation.basis(n, i) for i in range(n)] + [Allocation.zeros(n)]
    probabilities = np.concatenate([[1 - epsilon / 2], np.full(n, basis_probability), [remainder]])
    return AllocationDistribution(
        support=support,
        probabilities=probabilities,
        basis=list(range(n)),
        theta=theta,
        policy=policy,
        renormalized=renormalized,
    )


def sample_allocation(dist: AllocationDistribution, rng: np.random.Generator) -> Allocation:
    return dist.support[dist.sample_index(rng)]


class AllocationService:
    """Randomized allocation: perturb, solve exactly, then sample around x^p."""

    def __init__(self, solver: ParetoSolver = None, policy: str = None, unperturbed: int = None):
        self.solver = solver or ParetoSolver()
        self.policy = policy or settings.DISTRIBUTION_POLICY
        self.unperturbed = settings.UNPERTURBED_CONSTRAINT if unperturbed is None else unperturbed

    def perturbed_optimum(
        self,
        instance: AuctionInstance,
        epsilon: float,
        seed: SeedLike,
        prices: Optional[np.ndarray] = None,
        zero_theta: bool = False,
    ) -> Tuple[List[int], AuctionInstance, Optional[ThetaDraw], Allocation, float]:
        """Return (eligible bids, sub-instance, theta, x^p, POPT) on the individually feasible bids."""
        epsilon = check_epsilon(epsilon)
        prices = instance.prices if prices is None else np.asarray(prices, dtype=np.float64)
        if prices.shape != (instance.bid_count,):
            raise ContractViolation(f"expected {instance.bid_count} prices, got {prices.shape}")
        mask = individually_feasible(instance)
        eligible = [int(i) for i in np.flatnonzero(mask)]
        if len(eligible) < instance.bid_count:
            logger.warning(f"Excluding {instance.bid_count - len(eligible)} individually infeasible bids")
            sub = instance.restrict(eligible)
        else:
            sub = instance
        if not eligible:
            return eligible, sub, None, Allocation.zeros(0), 0.0

        n, dims = len(eligible), instance.constraint_count
        theta = zero_thetas(epsilon, n, dims) if zero_theta else draw_thetas(epsilon, n, dims, seed)
        perturbed = perturb_instance(sub, theta, prices=prices[eligible], unperturbed=self.unperturbed)
        x_p, popt = self.solver.solve_exact(perturbed)
        return eligible, sub, theta, x_p, popt

    def distribution(
        self,
        instance: AuctionInstance,
        epsilon: float,
        seed: SeedLike,
        prices: Optional[np.ndarray] = None,
        zero_theta: bool = False,
        policy: str = None,
    ) -> Tuple[List[int], Optional[AllocationDistribution], AllocationTrace]:
        eligible, sub, theta, x_p, popt = self.perturbed_optimum(instance, epsilon, seed, prices, zero_theta)
        n = instance.bid_count
        trace = AllocationTrace(
            seed=list(as_key(seed)),
            epsilon=epsilon,
            bid_count=n,
            eligible=eligible,
            excluded=sorted(set(range(n)) - set(eligible)),
            theta=theta,
            x_p=x_p.lift(eligible, n),
            popt=popt,
            zero_theta=zero_theta,
        )
        if theta is None:
            return eligible, None, trace
        try:
            dist = build_distribution(x_p, theta, sub, policy or self.policy)
        except (InvalidDistribution, InfeasibleBasis) as e:
            e.with_context(trace=trace)
            raise
        return eligible, dist, trace.copy(update={"distribution": dist})

    def allocate(
        self,
        instance: AuctionInstance,
        epsilon: float,
        seed: SeedLike,
        prices: Optional[np.ndarray] = None,
        zero_theta: bool = False,
        force_primary: bool = False,
        policy: str = None,
    ) -> Tuple[Allocation, AllocationTrace]:
        """
        Run one randomized allocation.

        Args:
            instance: base instance
            epsilon: approximation parameter in (0, 1)
            seed: stream key; theta and the final sample use disjoint substreams
            prices: replaces the instance's prices (b_i = 0 for marginal runs)
            zero_theta: use theta = 0 instead of a random draw
            force_primary: return x^p instead of sampling
            policy: "reject" or "renormalize" for invalid distributions

        Returns:
            (y_eps over all N bids, audit trace)
        """
        n = instance.bid_count
        eligible, dist, trace = self.distribution(instance, epsilon, seed, prices, zero_theta, policy)
        if dist is None:
            return Allocation.zeros(n), trace
        index = 0 if force_primary else dist.sample_index(stream(seed, SAMPLE))
        y = dist.support[index].lift(eligible, n)
        trace = trace.copy(update={"sampled_index": index, "force_primary": force_primary})
        logger.debug(f"Allocation {as_key(seed)}: POPT={trace.popt:.6g}, sampled support index {index}")
        return y, trace

    def expected_allocation(
        self,
        instance: AuctionInstance,
        epsilon: float,
        seed: SeedLike,
        prices: Optional[np.ndarray] = None,
        zero_theta: bool = False,
        policy: str = None,
    ) -> np.ndarray:
        """E[y_eps] over the finite support for the theta drawn from ``seed``, lifted to N bids."""
        n = instance.bid_count
        eligible, dist, _ = self.distribution(instance, epsilon, seed, prices, zero_theta, policy)
        expected = np.zeros(n)
        if dist is not None:
            support = np.vstack([a.x for a in dist.support]).astype(np.float64)
            expected[eligible] = dist.probabilities @ support
        return expected
