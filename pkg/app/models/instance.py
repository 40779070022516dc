from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, root_validator, validator

from app.core.errors import SchemaError
from app.models.base import ArrayModel, frozen_array


class VmCatalog(ArrayModel):
    """VM types: row m holds r_m, the resource units of one type-m VM."""

    vm_types: np.ndarray

    @validator("vm_types", pre=True)
    def _check_types(cls, value):
        types = frozen_array(value, ndim=2)
        if types.shape[0] < 1 or types.shape[1] < 1:
            raise ValueError("catalog needs at least one VM type and one resource")
        if not np.all(np.isfinite(types)) or np.any(types < 0):
            raise ValueError("VM resource amounts must be finite and nonnegative")
        if not np.all(types.max(axis=1) > 0):
            raise ValueError("every VM type must consume some resource")
        return types

    @property
    def resource_count(self) -> int:
        return int(self.vm_types.shape[1])

    @property
    def vm_type_count(self) -> int:
        return int(self.vm_types.shape[0])


class BidRequest(ArrayModel):
    """A bundle bid; demand comes from VM counts or from an explicit row."""

    user_id: str
    price: float
    vm_counts: Dict[Tuple[int, int], int] = Field(default_factory=dict)  # (vm type, datacenter) -> count
    demands: Optional[np.ndarray] = None

    @validator("price")
    def _check_price(cls, value):
        if not np.isfinite(value) or value < 0:
            raise ValueError("bid price must be finite and nonnegative")
        return float(value)

    @validator("vm_counts")
    def _check_counts(cls, value):
        if any(count < 0 for count in value.values()):
            raise ValueError("VM counts must be nonnegative")
        return value

    @validator("demands", pre=True)
    def _check_demands(cls, value):
        if value is None:
            return None
        row = frozen_array(value, ndim=1)
        if not np.all(np.isfinite(row)) or np.any(row < 0):
            raise ValueError("explicit demands must be finite and nonnegative")
        return row

    @root_validator(skip_on_failure=True)
    def _check_nonempty(cls, values):
        counts = values.get("vm_counts") or {}
        if values.get("demands") is None and values["price"] > 0 and not any(c > 0 for c in counts.values()):
            raise ValueError("a priced bid must request at least one VM")
        return values


def assemble_demands(bid: BidRequest, catalog: Optional[VmCatalog], datacenter_count: int) -> np.ndarray:
    """Demand row of length K*D; entry d*K + k is sum_m q_md * r_m^k."""
    if bid.demands is not None:
        return np.array(bid.demands, dtype=np.float64)
    if catalog is None:
        if not bid.vm_counts:
            raise SchemaError("bid without VM counts or demands needs a catalog to size its row")
        raise SchemaError("bid uses VM counts but the instance has no catalog")
    resources = catalog.resource_count
    row = np.zeros(resources * datacenter_count)
    for (vm_type, datacenter), count in sorted(bid.vm_counts.items()):
        if not 0 <= vm_type < catalog.vm_type_count:
            raise SchemaError(f"unknown VM type {vm_type} in bid of user {bid.user_id}")
        if not 0 <= datacenter < datacenter_count:
            raise SchemaError(f"unknown datacenter {datacenter} in bid of user {bid.user_id}")
        start = datacenter * resources
        row[start:start + resources] += count * catalog.vm_types[vm_type]
    return row


class AuctionInstance(ArrayModel):
    """Input of the welfare ILP: bids in fixed order, flattened capacities.

    Constraint index j = d * K + k (0-based). Bids sharing a user_id form an
    XOR group. ``demands``, ``prices`` and ``user_index`` are derived.
    """

    resource_count: int
    datacenter_count: int
    bids: List[BidRequest]
    capacities: np.ndarray
    catalog: Optional[VmCatalog] = None
    epsilon: Optional[float] = None
    demands: Optional[np.ndarray] = None
    prices: Optional[np.ndarray] = None
    user_index: Optional[np.ndarray] = None
    user_ids: List[str] = Field(default_factory=list)

    @validator("capacities", pre=True)
    def _check_capacities(cls, value):
        capacities = frozen_array(value, ndim=1)
        if not np.all(np.isfinite(capacities)) or np.any(capacities < 0):
            raise ValueError("capacities must be finite and nonnegative")
        return capacities

    @root_validator(skip_on_failure=True)
    def _derive_arrays(cls, values):
        resources, datacenters = values["resource_count"], values["datacenter_count"]
        if resources < 1 or datacenters < 1:
            raise ValueError("K and D must be positive")
        width = resources * datacenters
        if values["capacities"].shape != (width,):
            raise ValueError(f"expected {width} capacities, got {values['capacities'].shape[0]}")
        catalog = values.get("catalog")
        if catalog is not None and catalog.resource_count != resources:
            raise ValueError("catalog resource count does not match K")
        bids = values["bids"]
        rows = [assemble_demands(bid, catalog, datacenters) for bid in bids]
        for i, row in enumerate(rows):
            if row.shape != (width,):
                raise ValueError(f"bid {i} has {row.shape[0]} demand entries, expected {width}")
        values["demands"] = frozen_array(np.vstack(rows) if rows else np.zeros((0, width)), ndim=2)
        values["prices"] = frozen_array([bid.price for bid in bids], ndim=1)
        user_ids: List[str] = []
        positions: Dict[str, int] = {}
        index = []
        for bid in bids:
            if bid.user_id not in positions:
                positions[bid.user_id] = len(user_ids)
                user_ids.append(bid.user_id)
            index.append(positions[bid.user_id])
        values["user_index"] = frozen_array(index, dtype=np.int64, ndim=1)
        values["user_ids"] = user_ids
        return values

    @classmethod
    def from_arrays(
        cls,
        prices: Sequence[float],
        demands,
        capacities: Sequence[float],
        users: Optional[Sequence[str]] = None,
        resource_count: Optional[int] = None,
        datacenter_count: int = 1,
        epsilon: Optional[float] = None,
    ) -> "AuctionInstance":
        """Build an instance from an explicit demand matrix (no VM counts)."""
        demands = np.asarray(demands, dtype=np.float64)
        capacities = np.asarray(capacities, dtype=np.float64)
        if demands.ndim == 1:
            demands = demands.reshape(-1, 1)
        width = capacities.shape[0]
        if demands.size == 0:
            demands = demands.reshape(0, width)
        users = list(users) if users is not None else [f"u{i}" for i in range(len(prices))]
        bids = [
            BidRequest(user_id=str(user), price=float(price), demands=row)
            for user, price, row in zip(users, prices, demands)
        ]
        return cls(
            resource_count=resource_count or width // datacenter_count,
            datacenter_count=datacenter_count,
            bids=bids,
            capacities=capacities,
            epsilon=epsilon,
        )

    @property
    def bid_count(self) -> int:
        return len(self.bids)

    @property
    def constraint_count(self) -> int:
        return self.resource_count * self.datacenter_count

    @property
    def user_count(self) -> int:
        return len(self.user_ids)

    def constraint_index(self, resource: int, datacenter: int) -> int:
        return datacenter * self.resource_count + resource

    def restrict(self, indices: Sequence[int]) -> "AuctionInstance":
        """Sub-instance keeping the given bids in their original order."""
        return AuctionInstance(
            resource_count=self.resource_count,
            datacenter_count=self.datacenter_count,
            bids=[self.bids[i] for i in indices],
            capacities=self.capacities,
            catalog=self.catalog,
            epsilon=self.epsilon,
        )


class BidDocument(BaseModel):
    price: float
    q: Optional[List[Tuple[int, int, int]]] = None
    R: Optional[List[float]] = None

    @root_validator(skip_on_failure=True)
    def _one_form(cls, values):
        if (values.get("q") is None) == (values.get("R") is None):
            raise ValueError("a bid carries exactly one of 'q' or 'R'")
        return values


class UserDocument(BaseModel):
    id: str
    bids: List[BidDocument] = Field(default_factory=list)


class InstanceDocument(BaseModel):
    """On-disk instance JSON (0-based VM type and datacenter indices)."""

    epsilon: Optional[float] = None
    K: int
    D: int
    catalog: Optional[List[List[float]]] = None
    users: List[UserDocument]
    capacities: List[float]
