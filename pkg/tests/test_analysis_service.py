import numpy as np
import pytest

from app.core.errors import ContractViolation
from app.models.allocation import Allocation, ThetaDraw
from app.models.instance import AuctionInstance
from app.services.analysis_service import drop_on_sort, perturbed_welfare_ratio
from app.services.instance_service import check_feasible, small_bid_instance
from app.services.perturbation_service import draw_thetas, perturb_instance, zero_thetas


@pytest.fixture
def tight_instance():
    """Three equal bids that exactly fill both resources."""
    return AuctionInstance.from_arrays(
        prices=[5.0, 5.0, 5.0],
        demands=[[4.0, 3.0]] * 3,
        capacities=[12.0, 9.0],
        resource_count=2,
    )


def test_drop_on_sort_by_hand(tight_instance):
    theta = ThetaDraw(epsilon=0.3, theta=[[0.0, 0.0, 0.0], [0.05, 0.05, 0.05]])
    perturbed = perturb_instance(tight_instance, theta, unperturbed=-1)
    report = drop_on_sort(Allocation(x=[1, 1, 1]), perturbed)

    assert report.x_minus.as_tuple() == (0, 1, 1)
    assert report.round_order == [0]
    assert report.dropped_per_round == {0: [0]}
    assert report.dropped_demand[0] == pytest.approx(4.2)
    assert report.welfare_retained_fraction == pytest.approx(2 / 3)
    assert report.tie_break == "lower bid index"


def test_drop_on_sort_keeps_feasible_allocations(tight_instance):
    perturbed = perturb_instance(tight_instance, zero_thetas(0.3, 3, 2))
    report = drop_on_sort(Allocation(x=[1, 1, 1]), perturbed)
    assert report.x_minus.as_tuple() == (1, 1, 1)
    assert report.round_order == []
    assert report.welfare_retained_fraction == 1.0


def test_drop_on_sort_drops_lowest_density_first():
    instance = AuctionInstance.from_arrays(
        prices=[1.0, 9.0, 4.0], demands=[[2.0, 0.0], [2.0, 0.0], [2.0, 0.0]], capacities=[6.0, 1.0], resource_count=2
    )
    theta = ThetaDraw(epsilon=0.3, theta=[[0.0, 0.0, 0.0], [0.09, 0.09, 0.09]])
    report = drop_on_sort(Allocation(x=[1, 1, 1]), perturb_instance(instance, theta))
    assert report.dropped_per_round == {0: [0]}
    assert report.x_minus.as_tuple() == (0, 1, 1)


def test_drop_on_sort_requires_base_feasibility(tight_instance):
    overfull = AuctionInstance.from_arrays([1.0, 1.0], [[2.0], [2.0]], [3.0])
    perturbed = perturb_instance(overfull, zero_thetas(0.1, 2, 1))
    with pytest.raises(ContractViolation):
        drop_on_sort(Allocation(x=[1, 1]), perturbed)
    with pytest.raises(ContractViolation):
        drop_on_sort(Allocation(x=[1]), perturbed)


def test_drop_on_sort_output_is_perturbed_feasible(solver, random_instances):
    for t, instance in enumerate(random_instances(30, seed=71)):
        theta = draw_thetas(0.2, instance.bid_count, instance.constraint_count, (71, t))
        perturbed = perturb_instance(instance, theta)
        x_star, _ = solver.solve_exact(instance)
        report = drop_on_sort(x_star, perturbed)
        usage = report.x_minus.x @ perturbed.R_hat
        assert np.all(usage <= perturbed.capacities + 1e-12)
        assert check_feasible(report.x_minus, instance).feasible
        assert np.all(report.x_minus.x <= x_star.x)


def test_perturbed_welfare_ratio_under_small_bids(solver):
    for t in range(10):
        instance = small_bid_instance((73, t), 10, 0.05, resources=1, datacenters=2)
        theta = draw_thetas(0.05, instance.bid_count, instance.constraint_count, (73, t))
        report = perturbed_welfare_ratio(instance, theta, solver=solver, use_oracle=True)
        assert report.defined
        assert report.ratio >= 0.95 - 1e-9


def test_perturbed_welfare_ratio_undefined_without_welfare(solver):
    instance = AuctionInstance.from_arrays([0.0, 0.0], [[1.0], [1.0]], [1.0])
    report = perturbed_welfare_ratio(instance, zero_thetas(0.1, 2, 1), solver=solver)
    assert not report.defined
    assert report.opt == 0.0


def test_dropped_demand_per_round_is_bounded(solver, random_instances):
    epsilon = 0.2
    for t, instance in enumerate(random_instances(40, seed=79)):
        theta = draw_thetas(epsilon, instance.bid_count, instance.constraint_count, (79, t))
        x_star, _ = solver.solve_exact(instance)
        report = drop_on_sort(x_star, perturb_instance(instance, theta))
        peaks = instance.demands.max(axis=0)
        for j, dropped in report.dropped_demand.items():
            assert dropped <= (1 + 2 * epsilon) * peaks[j] + 1e-9


@pytest.mark.parametrize("epsilon", [0.05, 0.2])
def test_dropped_welfare_under_small_bids(solver, epsilon):
    for t in range(20):
        instance = small_bid_instance((83, t), 12, epsilon, resources=1, datacenters=2)
        theta = draw_thetas(epsilon, instance.bid_count, instance.constraint_count, (83, t))
        x_star, _ = solver.solve_exact(instance)
        report = drop_on_sort(x_star, perturb_instance(instance, theta))
        assert sum(report.dropped_welfare_fraction.values()) <= epsilon / 2 + 1e-9
        assert 1 - report.welfare_retained_fraction <= epsilon / 2 + 1e-9


def test_perturbed_welfare_ratio_upper_bound(solver):
    epsilon = 0.2
    for t in range(20):
        instance = small_bid_instance((89, t), 10, epsilon, resources=2, datacenters=1)
        theta = draw_thetas(epsilon, instance.bid_count, instance.constraint_count, (89, t))
        report = perturbed_welfare_ratio(instance, theta, solver=solver)
        assert report.defined
        assert report.ratio <= 1 + epsilon + 1e-9


@pytest.mark.parametrize("epsilon", [0.05, 0.3])
def test_zero_theta_ratio_is_exact(solver, random_instances, epsilon):
    for instance in random_instances(10, seed=97):
        theta = zero_thetas(epsilon, instance.bid_count, instance.constraint_count)
        report = perturbed_welfare_ratio(instance, theta, solver=solver)
        if report.defined:
            assert report.ratio == pytest.approx(1 - epsilon / 2)
