import numpy as np
import pytest

from app.core.errors import ContractViolation, FrontSizeExceeded, SolverLimitExceeded, WorkBudgetExceeded
from app.models.allocation import Allocation, ParetoEntry
from app.models.instance import AuctionInstance
from app.services.instance_service import check_feasible
from app.services.solver_service import ParetoSolver, dominates, front_trace_frame


def entry(x, welfare, usage):
    return ParetoEntry(x=Allocation(x=x), welfare=welfare, usage=usage, winners_per_user={})


def test_dominates():
    a = entry([1, 0], 5.0, [3.0])
    assert dominates(a, entry([0, 1], 4.0, [3.0]))
    assert dominates(a, entry([0, 1], 5.0, [4.0]))
    assert not dominates(a, entry([0, 1], 5.0, [3.0]))
    assert not dominates(a, entry([0, 1], 6.0, [4.0]))


def test_dominates_needs_same_stage():
    with pytest.raises(ContractViolation):
        dominates(entry([1], 1.0, [1.0]), entry([1, 0], 1.0, [1.0]))


def test_second_price_instance(solver, second_price_instance):
    x, welfare = solver.solve_exact(second_price_instance)
    assert x.as_tuple() == (1, 0)
    assert welfare == 5.0


def test_xor_group_wins_once(solver):
    instance = AuctionInstance.from_arrays([3.0, 4.0], [[1.0], [1.0]], [10.0], users=["u", "u"])
    x, welfare = solver.solve_exact(instance)
    assert x.as_tuple() == (0, 1)
    assert welfare == 4.0


def test_xor_instance_optimum(solver, xor_instance):
    x, welfare = solver.solve_exact(xor_instance)
    # bids 1 and 2 would need 11 units
    assert x.as_tuple() == (1, 0, 1, 0)
    assert welfare == 12.0


def test_ties_go_to_smaller_usage(solver):
    instance = AuctionInstance.from_arrays([2.0, 2.0], [[3.0], [1.0]], [3.0])
    x, _ = solver.solve_exact(instance)
    assert x.as_tuple() == (0, 1)


def test_empty_and_zero_capacity(solver):
    empty = AuctionInstance.from_arrays([], np.zeros((0, 1)), [1.0])
    x, welfare = solver.solve_exact(empty)
    assert len(x) == 0 and welfare == 0.0

    blocked = AuctionInstance.from_arrays([3.0, 1.0], [[1.0], [0.0]], [0.0])
    x, welfare = solver.solve_exact(blocked)
    assert x.as_tuple() == (0, 1)
    assert welfare == 1.0


def test_front_is_feasible_and_mutually_nondominated(solver, random_instances):
    for instance in random_instances(30, max_bids=7, seed=3):
        front = solver.pareto_front(instance)
        entries = front.entries
        for e in entries:
            assert check_feasible(e.x, instance).feasible
        for a in entries:
            for b in entries:
                assert not dominates(a, b)
        assert front.welfare[0] == front.welfare.max()


def test_front_prefixes_appear_in_earlier_stages(solver, random_instances):
    for instance in random_instances(20, max_bids=7, seed=5):
        front = solver.pareto_front(instance, keep_stages=True)
        assert len(front.history) == instance.bid_count
        for row in front.x:
            for i, stage in enumerate(front.history, start=1):
                assert np.any(np.all(stage == row[:i], axis=1))


def test_front_sizes_can_shrink(solver):
    instance = AuctionInstance.from_arrays([5.0, 8.0, 10.0], [[5.0], [6.0], [5.0]], [9.5])
    front = solver.pareto_front(instance)
    assert front.stage_sizes == [2, 3, 2]
    assert not front.is_monotone
    assert front.peak_size == 3
    assert sorted(a.as_tuple() for a in front.allocations) == [(0, 0, 0), (0, 0, 1)]


def test_front_size_limit(second_price_instance):
    with pytest.raises(FrontSizeExceeded) as info:
        ParetoSolver(front_size_limit=1).pareto_front(second_price_instance)
    assert info.value.exit_code == 4
    assert info.value.context["stage"] == 1


def test_chunking_does_not_change_the_front(random_instances):
    small = ParetoSolver(chunk_elements=1)
    large = ParetoSolver(chunk_elements=2 ** 22)
    for instance in random_instances(10, seed=11):
        np.testing.assert_array_equal(small.pareto_front(instance).x, large.pareto_front(instance).x)


def test_operation_counter_bound(solver, random_instances):
    for instance in random_instances(10, seed=13):
        front = solver.pareto_front(instance)
        n, dims = instance.bid_count, instance.constraint_count
        peak = front.peak_size
        assert front.operations <= 5 * (dims + 1) * n * peak * peak


def test_prices_override_and_length_check(solver, second_price_instance):
    x, welfare = solver.solve_exact(second_price_instance, prices=[0.0, 4.0])
    assert x.as_tuple() == (0, 1)
    assert welfare == 4.0
    with pytest.raises(ContractViolation):
        solver.solve_exact(second_price_instance, prices=[1.0])


def test_front_trace_frame(solver, xor_instance):
    front = solver.pareto_front(xor_instance)
    frame = front_trace_frame(front)
    assert list(frame.columns) == ["stage", "front_size"]
    assert frame["stage"].tolist() == list(range(1, xor_instance.bid_count + 1))
    assert frame["front_size"].tolist() == list(front.stage_sizes)


def test_operation_budget_stops_before_pruning(xor_instance):
    capped = ParetoSolver(operation_budget=10)
    with pytest.raises(WorkBudgetExceeded) as info:
        capped.pareto_front(xor_instance)
    assert isinstance(info.value, SolverLimitExceeded)
    assert info.value.exit_code == 4
    assert info.value.context["operations"] > 10

    unbounded = ParetoSolver(operation_budget=0).pareto_front(xor_instance)
    roomy = ParetoSolver(operation_budget=unbounded.operations).pareto_front(xor_instance)
    assert roomy.stage_sizes == unbounded.stage_sizes
