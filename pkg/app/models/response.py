# app/models/response.py
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, validator

from app.models.allocation import Allocation, AllocationDistribution, ThetaDraw
from app.models.base import ArrayModel, frozen_array


class FeasibilityReport(BaseModel):
    """Outcome of checking capacity and XOR constraints."""
    feasible: bool
    violated_constraints: List[int] = Field(default_factory=list)
    violated_users: List[str] = Field(default_factory=list)

    def __bool__(self) -> bool:
        return self.feasible


class SmallBidReport(BaseModel):
    passes: bool
    max_ratio: float
    threshold: float


class AllocationTrace(ArrayModel):
    """Audit record of one randomized allocation run."""
    seed: List[int]
    epsilon: float
    bid_count: int
    eligible: List[int]
    excluded: List[int] = Field(default_factory=list)
    theta: Optional[ThetaDraw] = None
    x_p: Allocation
    popt: float
    distribution: Optional[AllocationDistribution] = None
    sampled_index: int = 0
    zero_theta: bool = False
    force_primary: bool = False

    @property
    def renormalized(self) -> bool:
        return self.distribution is not None and self.distribution.renormalized


class AuctionOutcome(ArrayModel):
    """Sampled allocation plus randomized VCG payments for every bid."""
    allocation: Allocation
    payments: np.ndarray
    prices: np.ndarray
    user_ids: List[str]
    bid_users: List[str]
    trace: AllocationTrace
    marginal_traces: List[AllocationTrace] = Field(default_factory=list)
    seed: List[int]

    @validator("payments", "prices", pre=True)
    def _check_vector(cls, value):
        vector = frozen_array(value, ndim=1)
        if not np.all(np.isfinite(vector)):
            raise ValueError("payments and prices must be finite")
        return vector

    @property
    def won(self) -> np.ndarray:
        return self.allocation.x.astype(bool)

    @property
    def charged(self) -> np.ndarray:
        """Settlement charges winners their realized payment, losers nothing."""
        return np.where(self.won, self.payments, 0.0)

    @property
    def revenue(self) -> float:
        return float(self.charged.sum())

    @property
    def welfare(self) -> float:
        return float(self.prices @ self.allocation.x)

    @property
    def utilities(self) -> np.ndarray:
        return np.where(self.won, self.prices - self.payments, 0.0)

    @property
    def winning_users(self) -> List[str]:
        return sorted({self.bid_users[i] for i in self.allocation.winners})


class RepairReport(ArrayModel):
    x_minus: Allocation
    round_order: List[int]
    dropped_per_round: Dict[int, List[int]]
    dropped_demand: Dict[int, float]
    welfare_retained_fraction: float
    dropped_welfare_fraction: Dict[int, float] = Field(default_factory=dict)
    tie_break: str = "lower bid index"


class RatioReport(BaseModel):
    popt: float
    opt: float
    ratio: Optional[float] = None

    @property
    def defined(self) -> bool:
        return self.ratio is not None


class SatisfactionReport(BaseModel):
    per_trial: List[float]
    mean: float


class ProbeArmResult(BaseModel):
    """Estimated utility of one reported price, paired against the truthful arm."""
    report: float
    mean_utility: float
    stderr: float
    gain_over_truthful: float = 0.0
    gain_stderr: float = 0.0
    samples: int

    @property
    def beats_truthful(self) -> bool:
        return self.gain_over_truthful > 3 * self.gain_stderr + 1e-9
