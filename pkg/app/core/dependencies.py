from app.services.allocation_service import AllocationService
from app.services.experiment_service import ExperimentService
from app.services.payment_service import PaymentService
from app.services.solver_service import ParetoSolver
from app.services.trace_service import TraceService
from app.core.config import settings


# Service instances
_solver = None
_allocation_service = None
_payment_service = None
_trace_service = None
_experiment_service = None


def get_solver():
    """Get or create the exact Pareto solver behind the CLI commands, with the harness caps."""
    global _solver
    if _solver is None:
        _solver = ParetoSolver(
            front_size_limit=settings.HARNESS_FRONT_SIZE_LIMIT,
            debug_recompute=settings.SOLVER_DEBUG_RECOMPUTE,
            operation_budget=settings.HARNESS_OPERATION_BUDGET,
        )
    return _solver


def get_allocation_service():
    """Get or create the randomized allocation service."""
    global _allocation_service
    if _allocation_service is None:
        _allocation_service = AllocationService(solver=get_solver(), policy=settings.DISTRIBUTION_POLICY)
    return _allocation_service


def get_payment_service():
    """Get or create the payment service."""
    global _payment_service
    if _payment_service is None:
        _payment_service = PaymentService(allocation_service=get_allocation_service())
    return _payment_service


def get_trace_service():
    """Get or create the trace ingest service."""
    global _trace_service
    if _trace_service is None:
        _trace_service = TraceService(vm_type_count=settings.VM_TYPE_COUNT)
    return _trace_service


def get_experiment_service():
    """Get or create the experiment service."""
    global _experiment_service
    if _experiment_service is None:
        _experiment_service = ExperimentService(
            solver=get_solver(),
            allocation_service=get_allocation_service(),
            payment_service=get_payment_service(),
            trace_service=get_trace_service(),
            output_dir=settings.OUTPUT_DIR,
        )
    return _experiment_service
