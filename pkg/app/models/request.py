# app/models/request.py
from typing import List, Optional, Tuple, Union

from pydantic import BaseModel, Field, validator

COMMANDS = (
    "gen", "run", "eval-ratio", "eval-welfare", "eval-satisfaction",
    "compare-baseline", "probe-truthfulness", "bench-front",
)
SOURCES = ("trace", "small-bid", "random")


class IngestConfig(BaseModel):
    """Knobs for turning task records into an auction instance."""
    users: int = 100
    max_bids_per_user: int = 4
    datacenters: int = 8
    unit_prices: List[float] = Field(default_factory=lambda: [0.048, 0.012, 0.004])
    price_scale_range: Tuple[float, float] = (0.75, 1.5)
    capacity_factor_range: Optional[Tuple[float, float]] = None  # None -> [0, 0.5 W/N]
    vm_type_count: Optional[int] = None  # None -> the TraceService default
    seed: Union[int, Tuple[int, ...]] = 0

    @validator("users", "max_bids_per_user", "datacenters", "vm_type_count")
    def _check_positive(cls, value):
        if value is not None and value < 1:
            raise ValueError("must be at least 1")
        return value

    @validator("unit_prices")
    def _check_unit_prices(cls, value):
        if not value or any(p < 0 for p in value):
            raise ValueError("unit prices must be a nonempty list of nonnegative numbers")
        return value

    @validator("price_scale_range", "capacity_factor_range")
    def _check_range(cls, value):
        if value is not None and not 0 <= value[0] <= value[1]:
            raise ValueError("range must satisfy 0 <= low <= high")
        return value

    @property
    def resource_count(self) -> int:
        return len(self.unit_prices)


class TruthfulnessProbe(BaseModel):
    """Misreport probe for one bidder; utility is v*y_i - p_i."""
    bidder: int = 0
    valuation: Optional[float] = None  # None -> the bidder's submitted price
    grid: List[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 0.9, 1.1, 1.25, 1.5, 1.75, 2.0])
    grid_is_relative: bool = True
    samples: int = 10_000
    exact_omega: bool = False

    @validator("bidder")
    def _check_bidder(cls, value):
        if value < 0:
            raise ValueError("bidder index must be nonnegative")
        return value

    @validator("grid")
    def _check_grid(cls, value):
        if not value:
            raise ValueError("misreport grid must be nonempty")
        if any(v < 0 for v in value):
            raise ValueError("misreports must be nonnegative")
        return value

    @validator("samples")
    def _check_samples(cls, value):
        if value < 1000:
            raise ValueError("a probe needs at least 1000 samples per arm")
        return value

    def misreports(self, valuation: float) -> List[float]:
        if self.grid_is_relative:
            return [valuation * g for g in self.grid]
        return list(self.grid)


class ExperimentSpec(BaseModel):
    """One CLI experiment; list-valued knobs are swept as a grid."""
    command: str
    epsilons: List[float] = Field(default_factory=lambda: [0.05])
    users: List[int] = Field(default_factory=lambda: [500])
    max_bids: List[int] = Field(default_factory=lambda: [4])
    datacenters: List[int] = Field(default_factory=lambda: [8])
    resources: List[int] = Field(default_factory=lambda: [3])
    trials: int = 50
    samples: int = 1
    seed: int = 0
    source: str = "trace"
    output: Optional[str] = None
    tasks_path: Optional[str] = None
    instance_path: Optional[str] = None
    policy: Optional[str] = None
    jobs: int = 1
    bids: List[int] = Field(default_factory=lambda: [20, 40, 80, 160])
    probe_bids: int = 5
    probe: TruthfulnessProbe = Field(default_factory=TruthfulnessProbe)

    @validator("command")
    def _check_command(cls, value):
        if value not in COMMANDS:
            raise ValueError(f"unknown command {value!r}")
        return value

    @validator("source")
    def _check_source(cls, value):
        if value not in SOURCES:
            raise ValueError(f"source must be one of {', '.join(SOURCES)}")
        return value

    @validator("epsilons", each_item=True)
    def _check_epsilon(cls, value):
        if not 0 < value < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        return value

    @validator("users", "max_bids", "datacenters", "resources", "bids", each_item=True)
    def _check_size(cls, value):
        if value < 1:
            raise ValueError("sizes must be at least 1")
        return value

    @validator("trials", "samples", "jobs", "probe_bids")
    def _check_count(cls, value):
        if value < 1:
            raise ValueError("counts must be at least 1")
        return value

    @validator("policy")
    def _check_policy(cls, value):
        if value is not None and value not in ("reject", "renormalize"):
            raise ValueError("policy must be 'reject' or 'renormalize'")
        return value

    @property
    def epsilon(self) -> float:
        return self.epsilons[0]
