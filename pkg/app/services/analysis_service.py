import logging
from typing import Dict, List

import numpy as np

from app.core.errors import ContractViolation
from app.models.allocation import Allocation, PerturbedInstance, ThetaDraw
from app.models.instance import AuctionInstance
from app.models.response import RatioReport, RepairReport
from app.services.instance_service import check_feasible
from app.services.oracle_service import brute_force_optimal
from app.services.perturbation_service import perturb_instance
from app.services.solver_service import ParetoSolver

logger = logging.getLogger(__name__)


def drop_on_sort(x_star: Allocation, perturbed: PerturbedInstance) -> RepairReport:
    """
    Make a base-feasible allocation feasible for the perturbed demands.

    Constraints violated under the perturbed demands are visited in index
    order. In each round the still-accepted bids are sorted by increasing
    b_hat_i / R_hat_i^j (ties to the lower index, zero demand last) and dropped
    until constraint j holds. Drops carry over to later rounds.
    """
    base = perturbed.base
    if len(x_star) != base.bid_count:
        raise ContractViolation(f"allocation of length {len(x_star)} for {base.bid_count} bids")
    if not check_feasible(x_star, base).feasible:
        raise ContractViolation("drop_on_sort needs an allocation feasible for the base instance")

    R_hat, b_hat, capacities = perturbed.R_hat, perturbed.b_hat, perturbed.capacities
    x = x_star.x.astype(np.float64)
    violated = [int(j) for j in np.flatnonzero(x @ R_hat > capacities)]
    total_welfare = float(b_hat @ x)

    dropped_per_round: Dict[int, List[int]] = {}
    dropped_demand: Dict[int, float] = {}
    dropped_welfare: Dict[int, float] = {}
    for j in violated:
        accepted = np.flatnonzero(x)
        column = R_hat[accepted, j]
        with np.errstate(divide="ignore", invalid="ignore"):
            density = np.where(column > 0, b_hat[accepted] / column, np.inf)
        order = accepted[np.lexsort((accepted, density))]
        dropped = []
        for i in order:
            if (x @ R_hat)[j] <= capacities[j]:
                break
            x[i] = 0.0
            dropped.append(int(i))
        dropped_per_round[j] = dropped
        dropped_demand[j] = float(R_hat[dropped, j].sum())
        dropped_welfare[j] = float(b_hat[dropped].sum()) / total_welfare if total_welfare > 0 else 0.0
        logger.debug(f"Constraint {j}: dropped bids {dropped}")

    x_minus = Allocation(x=x.astype(np.int8))
    retained = float(b_hat @ x) / total_welfare if total_welfare > 0 else 1.0
    return RepairReport(
        x_minus=x_minus,
        round_order=violated,
        dropped_per_round=dropped_per_round,
        dropped_demand=dropped_demand,
        welfare_retained_fraction=retained,
        dropped_welfare_fraction=dropped_welfare,
    )


def perturbed_welfare_ratio(
    instance: AuctionInstance,
    theta: ThetaDraw,
    solver: ParetoSolver = None,
    use_oracle: bool = False,
) -> RatioReport:
    """POPT / OPT for one theta draw; the ratio is undefined when OPT is 0."""
    solver = solver or ParetoSolver()
    perturbed = perturb_instance(instance, theta)
    _, popt = solver.solve_exact(perturbed)
    if use_oracle:
        _, opt = brute_force_optimal(instance)
    else:
        _, opt = solver.solve_exact(instance)
    if opt <= 0:
        logger.info("OPT is 0; perturbed welfare ratio undefined")
        return RatioReport(popt=popt, opt=opt)
    return RatioReport(popt=popt, opt=opt, ratio=popt / opt)
