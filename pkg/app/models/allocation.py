from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import Field, root_validator, validator

from app.models.base import ArrayModel, frozen_array
from app.models.instance import AuctionInstance

PROBABILITY_TOLERANCE = 1e-12


class Allocation(ArrayModel):
    """Binary accept/reject vector over bids."""

    x: np.ndarray

    @validator("x", pre=True)
    def _check_binary(cls, value):
        array = np.asarray(value)
        if array.ndim != 1:
            raise ValueError("allocation must be a vector")
        if array.size and not np.all((array == 0) | (array == 1)):
            raise ValueError("allocation entries must be 0 or 1")
        return frozen_array(array, dtype=np.int8, ndim=1)

    @classmethod
    def zeros(cls, n: int) -> "Allocation":
        return cls(x=np.zeros(n, dtype=np.int8))

    @classmethod
    def basis(cls, n: int, i: int) -> "Allocation":
        x = np.zeros(n, dtype=np.int8)
        x[i] = 1
        return cls(x=x)

    @property
    def winners(self) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.x)]

    def as_tuple(self) -> Tuple[int, ...]:
        return tuple(int(v) for v in self.x)

    def lift(self, indices: Sequence[int], n: int) -> "Allocation":
        """Embed into length ``n``, entry k going to position indices[k]."""
        x = np.zeros(n, dtype=np.int8)
        x[np.asarray(indices, dtype=np.int64)] = self.x
        return Allocation(x=x)

    def __len__(self) -> int:
        return int(self.x.shape[0])

    def __eq__(self, other) -> bool:
        return isinstance(other, Allocation) and np.array_equal(self.x, other.x)

    def __hash__(self) -> int:
        return hash(self.x.tobytes())

    def __repr__(self) -> str:
        return f"Allocation({self.as_tuple()})"


class FractionalAllocation(ArrayModel):
    x: np.ndarray

    @validator("x", pre=True)
    def _check_fractional(cls, value):
        array = frozen_array(value, ndim=1)
        if not np.all(np.isfinite(array)) or np.any(array < 0):
            raise ValueError("fractional allocation entries must be finite and nonnegative")
        return array

    def __len__(self) -> int:
        return int(self.x.shape[0])


class ThetaDraw(ArrayModel):
    """Perturbation noise; row 0 perturbs prices, rows 1.. perturb constraints."""

    epsilon: float
    theta: np.ndarray
    seed: Optional[List[int]] = None

    @validator("theta", pre=True)
    def _check_theta(cls, value):
        return frozen_array(value, ndim=2)

    @root_validator(skip_on_failure=True)
    def _check_range(cls, values):
        epsilon, theta = values["epsilon"], values["theta"]
        if not 0 < epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if theta.shape[0] < 1:
            raise ValueError("theta needs at least the objective row")
        n = theta.shape[1]
        if n and (np.any(theta < 0) or np.any(theta > epsilon / n)):
            raise ValueError(f"theta entries must lie in [0, eps/N] = [0, {epsilon / n:.6g}]")
        return values

    @property
    def bid_count(self) -> int:
        return int(self.theta.shape[1])

    @property
    def objective(self) -> np.ndarray:
        return self.theta[0]


class PerturbedInstance(ArrayModel):
    """Perturbed prices and demands over a base instance; capacities unchanged."""

    base: AuctionInstance
    b_hat: np.ndarray
    R_hat: np.ndarray
    theta: ThetaDraw
    unperturbed_constraint: int

    @validator("b_hat", pre=True)
    def _check_prices(cls, value):
        return frozen_array(value, ndim=1)

    @validator("R_hat", pre=True)
    def _check_demands(cls, value):
        return frozen_array(value, ndim=2)

    @property
    def demands(self) -> np.ndarray:
        return self.R_hat

    @property
    def prices(self) -> np.ndarray:
        return self.b_hat

    @property
    def capacities(self) -> np.ndarray:
        return self.base.capacities

    @property
    def user_index(self) -> np.ndarray:
        return self.base.user_index

    @property
    def user_ids(self) -> List[str]:
        return self.base.user_ids

    @property
    def bid_count(self) -> int:
        return self.base.bid_count


class ParetoEntry(ArrayModel):
    x: Allocation
    welfare: float
    usage: np.ndarray
    winners_per_user: Dict[str, int]

    @validator("usage", pre=True)
    def _check_usage(cls, value):
        return frozen_array(value, ndim=1)

    @property
    def stage(self) -> int:
        return len(self.x)


class ParetoFront(ArrayModel):
    """Front at stage N, ordered by (-welfare, usage, x) lexicographically."""

    stage: int
    x: np.ndarray
    welfare: np.ndarray
    usage: np.ndarray
    user_index: np.ndarray
    user_ids: List[str]
    stage_sizes: List[int]
    operations: int
    history: Optional[List[np.ndarray]] = None

    @property
    def peak_size(self) -> int:
        return max(self.stage_sizes, default=len(self))

    @property
    def is_monotone(self) -> bool:
        return all(a <= b for a, b in zip(self.stage_sizes, self.stage_sizes[1:]))

    @property
    def allocations(self) -> List[Allocation]:
        return [Allocation(x=row) for row in self.x]

    @property
    def entries(self) -> List[ParetoEntry]:
        entries = []
        for row, welfare, usage in zip(self.x, self.welfare, self.usage):
            winners: Dict[str, int] = {}
            for i in np.flatnonzero(row):
                user = self.user_ids[self.user_index[i]]
                winners[user] = winners.get(user, 0) + 1
            entries.append(ParetoEntry(x=Allocation(x=row), welfare=float(welfare), usage=usage, winners_per_user=winners))
        return entries

    def __len__(self) -> int:
        return int(self.x.shape[0])


class AllocationDistribution(ArrayModel):
    """Finite-support law over [x^p, l_i for i in basis, 0]."""

    support: List[Allocation]
    probabilities: np.ndarray
    basis: List[int]
    theta: ThetaDraw
    policy: str = "reject"
    renormalized: bool = False

    @validator("probabilities", pre=True)
    def _check_probabilities(cls, value):
        return frozen_array(value, ndim=1)

    @root_validator(skip_on_failure=True)
    def _check_law(cls, values):
        probabilities, support = values["probabilities"], values["support"]
        if len(support) != probabilities.shape[0] or len(support) != len(values["basis"]) + 2:
            raise ValueError("support must be [x^p, basis vectors..., zero]")
        if np.any(probabilities < 0) or np.any(probabilities > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(float(probabilities.sum()) - 1.0) > PROBABILITY_TOLERANCE:
            raise ValueError(f"probabilities sum to {probabilities.sum()!r}")
        basis_mass = probabilities[1:-1]
        if basis_mass.size and np.ptp(basis_mass) != 0:
            raise ValueError("basis vectors must share one probability")
        return values

    @property
    def primary(self) -> Allocation:
        return self.support[0]

    def sample_index(self, rng: np.random.Generator) -> int:
        return int(rng.choice(len(self.support), p=self.probabilities))
