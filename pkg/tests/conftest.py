import numpy as np
import pytest

from app.models.instance import AuctionInstance
from app.services.allocation_service import AllocationService
from app.services.instance_service import random_instance
from app.services.payment_service import PaymentService
from app.services.solver_service import ParetoSolver


@pytest.fixture
def solver():
    return ParetoSolver(front_size_limit=100_000, debug_recompute=True, chunk_elements=4096)


@pytest.fixture
def allocation_service(solver):
    return AllocationService(solver=solver, policy="reject", unperturbed=-1)


@pytest.fixture
def payment_service(allocation_service):
    return PaymentService(allocation_service=allocation_service, jobs=1)


@pytest.fixture
def second_price_instance():
    """Two users competing for one unit of capacity 5."""
    return AuctionInstance.from_arrays(prices=[5.0, 4.0], demands=[[5.0], [5.0]], capacities=[5.0])


@pytest.fixture
def xor_instance():
    """Two users with two bids each, every bid fits on its own."""
    return AuctionInstance.from_arrays(
        prices=[5.0, 6.0, 7.0, 2.0],
        demands=[[4.0], [5.0], [6.0], [3.0]],
        capacities=[10.0],
        users=["u0", "u0", "u1", "u1"],
    )


@pytest.fixture
def random_instances():
    """Factory for small random instances with random XOR groups."""

    def make(count, max_bids=8, max_width=4, seed=0):
        rng = np.random.default_rng(seed)
        instances = []
        for t in range(count):
            bids = int(rng.integers(1, max_bids + 1))
            resources = int(rng.integers(1, 3))
            datacenters = int(rng.integers(1, max_width // resources + 1))
            instances.append(random_instance((seed, t), bids, resources, datacenters))
        return instances

    return make
