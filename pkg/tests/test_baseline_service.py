import numpy as np

from app.models.instance import AuctionInstance
from app.services.baseline_service import bid_densities, greedy_allocate
from app.services.instance_service import check_feasible, social_welfare
from app.services.oracle_service import brute_force_optimal


def test_greedy_can_miss_the_optimum():
    instance = AuctionInstance.from_arrays([7.0, 10.0], [[4.0], [10.0]], [10.0])
    np.testing.assert_allclose(bid_densities(instance), [17.5, 10.0])
    x = greedy_allocate(instance)
    assert x.as_tuple() == (1, 0)
    assert social_welfare(x, instance) == 7.0
    assert brute_force_optimal(instance)[1] == 10.0


def test_greedy_respects_xor_groups():
    instance = AuctionInstance.from_arrays([3.0, 2.0], [[1.0], [1.0]], [5.0], users=["u", "u"])
    assert greedy_allocate(instance).as_tuple() == (1, 0)


def test_zero_demand_bids_go_first():
    instance = AuctionInstance.from_arrays([1.0, 8.0, 0.0], [[0.0], [1.0], [0.0]], [1.0])
    densities = bid_densities(instance)
    assert densities[0] == np.inf
    assert densities[2] == 0.0
    assert greedy_allocate(instance).as_tuple() == (1, 1, 1)


def test_density_ties_go_to_lower_index():
    instance = AuctionInstance.from_arrays([2.0, 2.0], [[1.0], [1.0]], [1.0])
    assert greedy_allocate(instance).as_tuple() == (1, 0)


def test_greedy_is_feasible_and_never_beats_optimum(random_instances):
    for instance in random_instances(40, seed=79):
        x = greedy_allocate(instance)
        assert check_feasible(x, instance).feasible
        assert social_welfare(x, instance) <= brute_force_optimal(instance)[1] + 1e-9


def test_greedy_on_empty_instance():
    instance = AuctionInstance.from_arrays([], np.zeros((0, 1)), [1.0])
    assert len(greedy_allocate(instance)) == 0


def test_mechanism_beats_greedy_when_density_misleads(allocation_service):
    # the densest bid blocks two cheaper bids that together earn more
    instance = AuctionInstance.from_arrays(
        prices=[5.0, 3.0, 3.0], demands=[[8.0], [5.0], [5.0]], capacities=[10.0], users=["a", "b", "c"]
    )
    bid_users = ["a", "b", "c"]
    greedy = greedy_allocate(instance)
    assert greedy.as_tuple() == (1, 0, 0)

    samples = [allocation_service.allocate(instance, 0.1, (113, s), policy="renormalize")[0] for s in range(200)]
    welfare = np.mean([social_welfare(y, instance) for y in samples])
    satisfaction = np.mean([len({bid_users[i] for i in y.winners}) / 3 for y in samples])
    assert welfare > social_welfare(greedy, instance)
    assert satisfaction > 1 / 3
