import json

import numpy as np
import pytest

from app.core.errors import ContractViolation, ParameterError, SchemaError
from app.models.allocation import Allocation
from app.models.instance import AuctionInstance, BidRequest, VmCatalog
from app.services.instance_service import (
    check_feasible,
    check_small_bid,
    dump_instance,
    load_instance,
    resource_usage,
    small_bid_instance,
    small_bid_threshold,
    social_welfare,
    with_price,
)


def test_social_welfare_and_usage(xor_instance):
    x = Allocation(x=[1, 0, 0, 1])
    assert social_welfare(x, xor_instance) == pytest.approx(7.0)
    assert resource_usage(x, xor_instance).tolist() == [7.0]


def test_social_welfare_rejects_wrong_length(xor_instance):
    with pytest.raises(ContractViolation):
        social_welfare([1, 0], xor_instance)


def test_check_feasible_reports_capacity_and_xor(xor_instance):
    assert check_feasible([1, 0, 0, 1], xor_instance).feasible

    over = check_feasible([0, 1, 1, 0], xor_instance)
    assert not over.feasible
    assert over.violated_constraints == [0]
    assert over.violated_users == []

    twice = check_feasible([1, 1, 0, 0], xor_instance)
    assert not twice
    assert twice.violated_users == ["u0"]


def test_capacity_is_not_strict():
    instance = AuctionInstance.from_arrays([1.0, 1.0], [[2.0], [3.0]], [5.0])
    assert check_feasible([1, 1], instance).feasible


def test_small_bid_threshold():
    assert small_bid_threshold(1, 1, 0.05) == pytest.approx(1 / 44)
    assert small_bid_threshold(3, 8, 0.05) == pytest.approx(1 / (48 * 22))


def test_check_small_bid():
    instance = AuctionInstance.from_arrays([1.0, 2.0], [[1.0], [0.5]], [44.0])
    report = check_small_bid(instance, 0.05)
    assert report.passes
    assert report.max_ratio == pytest.approx(1 / 44)

    tight = AuctionInstance.from_arrays([1.0], [[1.0]], [43.0])
    assert not check_small_bid(tight, 0.05).passes


def test_check_small_bid_zero_capacity():
    instance = AuctionInstance.from_arrays([1.0, 1.0], [[0.0, 1.0], [0.0, 0.0]], [0.0, 0.0])
    report = check_small_bid(instance, 0.1)
    assert report.max_ratio == np.inf
    assert not report.passes


def test_check_small_bid_rejects_bad_epsilon(xor_instance):
    with pytest.raises(ParameterError):
        check_small_bid(xor_instance, 1.0)


def test_small_bid_instance_passes_check():
    instance = small_bid_instance(3, 12, 0.05, resources=2, datacenters=2)
    assert instance.bid_count == 12
    assert instance.user_count == 6
    assert check_small_bid(instance, 0.05).passes


def test_vm_counts_flatten_by_datacenter():
    catalog = VmCatalog(vm_types=[[1.0, 2.0], [3.0, 0.0]])
    bid = BidRequest(user_id="a", price=3.0, vm_counts={(0, 1): 2, (1, 0): 1})
    instance = AuctionInstance(
        resource_count=2, datacenter_count=2, bids=[bid], capacities=[10, 10, 10, 10], catalog=catalog
    )
    assert instance.demands[0].tolist() == [3.0, 0.0, 2.0, 4.0]
    assert instance.constraint_index(resource=1, datacenter=1) == 3


def test_unknown_datacenter_is_a_schema_error():
    catalog = VmCatalog(vm_types=[[1.0]])
    bid = BidRequest(user_id="a", price=1.0, vm_counts={(0, 3): 1})
    with pytest.raises(SchemaError):
        AuctionInstance(resource_count=1, datacenter_count=2, bids=[bid], capacities=[1, 1], catalog=catalog)


def test_instance_json_survives_dump_and_load(tmp_path):
    catalog = VmCatalog(vm_types=[[1.0, 2.0], [3.0, 0.0]])
    bids = [
        BidRequest(user_id="alice", price=3.0, vm_counts={(0, 1): 2}),
        BidRequest(user_id="alice", price=2.5, vm_counts={(1, 0): 1}),
        BidRequest(user_id="bob", price=4.0, vm_counts={(0, 0): 1, (1, 1): 1}),
    ]
    instance = AuctionInstance(
        resource_count=2, datacenter_count=2, bids=bids, capacities=[5, 5, 5, 5], catalog=catalog, epsilon=0.1
    )
    path = tmp_path / "instance.json"
    dump_instance(instance, str(path))

    document = json.loads(path.read_text())
    assert [user["id"] for user in document["users"]] == ["alice", "bob"]
    assert document["users"][0]["bids"][0]["q"] == [[0, 1, 2]]

    loaded = load_instance(str(path))
    np.testing.assert_array_equal(loaded.demands, instance.demands)
    np.testing.assert_array_equal(loaded.prices, instance.prices)
    assert loaded.user_ids == instance.user_ids
    assert loaded.epsilon == 0.1


def test_load_instance_with_explicit_demands(tmp_path):
    path = tmp_path / "explicit.json"
    path.write_text(json.dumps({
        "K": 1, "D": 1, "capacities": [5],
        "users": [{"id": "a", "bids": [{"price": 5, "R": [5]}]}, {"id": "b", "bids": [{"price": 4, "R": [5]}]}],
    }))
    instance = load_instance(str(path))
    assert instance.bid_count == 2
    assert instance.user_ids == ["a", "b"]


def test_load_instance_rejects_bad_documents(tmp_path):
    missing = tmp_path / "missing.json"
    missing.write_text(json.dumps({"K": 1, "users": []}))
    with pytest.raises(SchemaError):
        load_instance(str(missing))

    both = tmp_path / "both.json"
    both.write_text(json.dumps({
        "K": 1, "D": 1, "capacities": [1],
        "users": [{"id": "a", "bids": [{"price": 1, "R": [1], "q": [[0, 0, 1]]}]}],
    }))
    with pytest.raises(SchemaError):
        load_instance(str(both))

    negative = tmp_path / "negative.json"
    negative.write_text(json.dumps({
        "K": 1, "D": 1, "capacities": [-1],
        "users": [{"id": "a", "bids": [{"price": 1, "R": [1]}]}],
    }))
    with pytest.raises(SchemaError):
        load_instance(str(negative))


def test_with_price_changes_one_bid(xor_instance):
    changed = with_price(xor_instance, 2, 1.5)
    assert changed.prices.tolist() == [5.0, 6.0, 1.5, 2.0]
    np.testing.assert_array_equal(changed.demands, xor_instance.demands)
    assert xor_instance.prices[2] == 7.0
