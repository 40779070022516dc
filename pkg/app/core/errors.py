from typing import Any, Dict, Sequence


class AuctionError(Exception):
    """Base error; carries the CLI exit code and free-form context."""

    exit_code = 1

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.context: Dict[str, Any] = dict(context)

    def with_context(self, **context: Any) -> "AuctionError":
        self.context.update(context)
        return self


class ContractViolation(AuctionError, ValueError):
    """Dimension or length mismatch between arguments."""


class SchemaError(AuctionError):
    exit_code = 2


class ParameterError(AuctionError, ValueError):
    exit_code = 2


class OracleLimitExceeded(AuctionError):
    exit_code = 2


class IngestError(AuctionError):
    exit_code = 3


class SolverLimitExceeded(AuctionError):
    """The exact solver stopped at a configured size or work cap."""

    exit_code = 4


class FrontSizeExceeded(SolverLimitExceeded):
    def __init__(self, stage: int, size: int, limit: int):
        super().__init__(
            f"Pareto front reached {size} entries at stage {stage} (limit {limit})",
            stage=stage, size=size, limit=limit,
        )


class WorkBudgetExceeded(SolverLimitExceeded):
    def __init__(self, stage: int, operations: int, budget: int):
        super().__init__(
            f"Pareto pruning at stage {stage} would bring the work to {operations} operations (budget {budget})",
            stage=stage, operations=operations, budget=budget,
        )


class InvalidDistribution(AuctionError):
    """Remainder probability of the zero allocation went negative."""

    exit_code = 5

    def __init__(self, mass: float, remainder: float, epsilon: float):
        super().__init__(
            f"Allocation distribution invalid: accepted perturbation mass {mass:.6g} "
            f"exceeds eps/2={epsilon / 2:.6g} (remainder {remainder:.6g})",
            mass=mass, remainder=remainder, epsilon=epsilon,
        )
        self.mass = mass
        self.remainder = remainder


class InfeasibleBasis(AuctionError):
    exit_code = 5

    def __init__(self, bids: Sequence[int]):
        bids = list(bids)
        super().__init__(f"Bids {bids} exceed capacity on their own", bids=bids)
        self.bids = bids


class SolverDriftError(AuctionError):
    """Running welfare/usage sums disagree with a recomputation."""
