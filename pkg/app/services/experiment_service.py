import itertools
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.core.config import settings
from app.core.errors import InvalidDistribution, ParameterError, SolverLimitExceeded
from app.models.allocation import Allocation
from app.models.instance import AuctionInstance
from app.models.request import ExperimentSpec, IngestConfig
from app.models.response import AuctionOutcome, ProbeArmResult, SatisfactionReport
from app.models.task import TaskRecord
from app.services.allocation_service import AllocationService
from app.services.baseline_service import BASELINE_LABEL, greedy_allocate
from app.services.instance_service import (
    check_small_bid,
    dump_instance,
    load_instance,
    random_instance,
    small_bid_instance,
    social_welfare,
    with_price,
)
from app.services.oracle_service import brute_force_optimal
from app.services.payment_service import PaymentService, write_outcome_csv
from app.services.perturbation_service import draw_thetas, perturb_instance
from app.services.solver_service import ParetoSolver, front_trace_frame
from app.services.trace_service import TraceService
from app.utils.artifacts import key_label, write_csv, write_json

logger = logging.getLogger(__name__)

GRID_COLUMNS = ["users", "max_bids", "datacenters", "resources"]
GridPoint = Tuple[int, int, int, int]


def satisfied_fraction(allocation: Allocation, bid_users: Sequence[str], user_count: int) -> float:
    """Share of users that win one of their bids."""
    if user_count <= 0:
        return 0.0
    winners = {bid_users[i] for i in allocation.winners}
    return len(winners) / user_count


def eval_user_satisfaction(
    outcomes: Sequence[Union[AuctionOutcome, Allocation]],
    user_count: int = None,
    bid_users: Sequence[str] = None,
) -> SatisfactionReport:
    """
    Winners / W per outcome and their mean.

    Args:
        outcomes: auction outcomes, or bare allocations of a single instance
        user_count: W; defaults to each outcome's bidding users
        bid_users: owner of every bid, required for bare allocations

    Returns:
        SatisfactionReport with one fraction per outcome
    """
    if not outcomes:
        raise ParameterError("user satisfaction needs at least one outcome")
    per_trial = []
    for o in outcomes:
        if isinstance(o, Allocation):
            if bid_users is None:
                raise ParameterError("bare allocations need the bid owners")
            per_trial.append(satisfied_fraction(o, bid_users, user_count or len(set(bid_users))))
        else:
            per_trial.append(satisfied_fraction(o.allocation, o.bid_users, user_count or len(o.user_ids)))
    return SatisfactionReport(per_trial=per_trial, mean=float(np.mean(per_trial)))


def loglog_slope(sizes: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log(value) against log(size)."""
    sizes, values = np.asarray(sizes, dtype=np.float64), np.asarray(values, dtype=np.float64)
    if sizes.size < 2 or not np.all(np.isfinite(values)) or np.any(values <= 0):
        return float("nan")
    return float(np.polyfit(np.log(sizes), np.log(values), 1)[0])


class ExperimentService:
    """Runs the CLI commands; every artifact is a pure function of the ExperimentSpec and its seed."""

    def __init__(
        self,
        solver: ParetoSolver = None,
        allocation_service: AllocationService = None,
        payment_service: PaymentService = None,
        trace_service: TraceService = None,
        output_dir: str = None,
    ):
        self.solver = solver or ParetoSolver()
        self.allocation_service = allocation_service or AllocationService(solver=self.solver)
        self.payment_service = payment_service or PaymentService(allocation_service=self.allocation_service)
        self.trace_service = trace_service or TraceService()
        self.output_dir = output_dir or settings.OUTPUT_DIR
        self._tasks: Dict[str, List[TaskRecord]] = {}

    # -- dispatch ---------------------------------------------------------

    def run(self, spec: ExperimentSpec) -> Dict[str, str]:
        """Execute one command; returns the artifact paths written."""
        handlers: Dict[str, Callable[[ExperimentSpec], Dict[str, str]]] = {
            "gen": self.generate,
            "run": self.run_auction,
            "eval-ratio": self.evaluate,
            "eval-welfare": self.evaluate,
            "eval-satisfaction": self.evaluate,
            "compare-baseline": self.evaluate,
            "probe-truthfulness": self.probe_truthfulness,
            "bench-front": self.bench_front,
        }
        logger.info(f"Running {spec.command} with seed {spec.seed}")
        return handlers[spec.command](spec)

    def output_path(self, spec: ExperimentSpec, default_name: str) -> str:
        return spec.output or os.path.join(self.output_dir, default_name)

    @staticmethod
    def metadata(spec: ExperimentSpec, **extra) -> dict:
        meta = {
            "command": spec.command,
            "seed": spec.seed,
            "config": spec.dict(exclude={"output"}),
            "policy": spec.policy or settings.DISTRIBUTION_POLICY,
            "baseline": BASELINE_LABEL,
        }
        meta.update(extra)
        return meta

    def _map(self, spec: ExperimentSpec, fn, items: Sequence) -> List:
        """Apply fn over items, concurrently up to spec.jobs, keeping input order."""
        if spec.jobs > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=spec.jobs) as executor:
                return list(executor.map(fn, items))
        return [fn(item) for item in items]

    # -- instances --------------------------------------------------------

    def grid(self, spec: ExperimentSpec) -> List[GridPoint]:
        return list(itertools.product(spec.users, spec.max_bids, spec.datacenters, spec.resources))

    def tasks(self, spec: ExperimentSpec, users: int, key) -> List[TaskRecord]:
        if spec.tasks_path:
            if spec.tasks_path not in self._tasks:
                self._tasks[spec.tasks_path] = self.trace_service.parse_tasks(spec.tasks_path)
            return self._tasks[spec.tasks_path]
        return self.trace_service.synthetic_tasks(jobs=2 * users, seed=key)

    def build_instance(self, spec: ExperimentSpec, point: GridPoint, key) -> AuctionInstance:
        """Instance for one grid point and trial key, drawn from the configured source."""
        users, max_bids, datacenters, resources = point
        if spec.source == "small-bid":
            return small_bid_instance(key, users * max_bids, spec.epsilon, resources, datacenters, users=users)
        if spec.source == "random":
            return random_instance(key, users * max_bids, resources, datacenters, users=users)
        if resources > len(settings.UNIT_PRICES):
            raise ParameterError(f"trace instances support at most {len(settings.UNIT_PRICES)} resources")
        config = IngestConfig(
            users=users,
            max_bids_per_user=max_bids,
            datacenters=datacenters,
            unit_prices=settings.UNIT_PRICES[:resources],
            vm_type_count=self.trace_service.vm_type_count,
            seed=tuple(key),
        )
        return self.trace_service.build_instance(self.tasks(spec, users, key), config, epsilon=spec.epsilon)

    def single_instance(self, spec: ExperimentSpec) -> AuctionInstance:
        if spec.instance_path:
            return load_instance(spec.instance_path)
        return self.build_instance(spec, self.grid(spec)[0], (spec.seed, 0, 0))

    # -- gen / run --------------------------------------------------------

    def generate(self, spec: ExperimentSpec) -> Dict[str, str]:
        path = self.output_path(spec, "instance.json")
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        instance = self.single_instance(spec)
        dump_instance(instance, path)
        return {"instance": path}

    def run_auction(self, spec: ExperimentSpec) -> Dict[str, str]:
        instance = self.single_instance(spec)
        epsilon = instance.epsilon if spec.instance_path and instance.epsilon else spec.epsilon
        outcome = self.payment_service.run_auction(instance, epsilon, (spec.seed,), policy=spec.policy)
        path = self.output_path(spec, "outcome.csv")
        write_outcome_csv(outcome, path, self.metadata(spec, epsilon=epsilon))
        trace_path = f"{path}.trace.json"
        write_json(json.loads(outcome.trace.json()), trace_path)
        return {"outcome": path, "trace": trace_path}

    # -- evaluation commands ----------------------------------------------

    def sample_allocations(
        self, spec: ExperimentSpec, instance: AuctionInstance, epsilon: float, key
    ) -> Tuple[List[Allocation], List[float], int, int]:
        """Draw spec.samples allocations; returns (allocations, POPTs, invalid, renormalized)."""
        allocations, popts, invalid, renormalized = [], [], 0, 0
        for s in range(spec.samples):
            try:
                y, trace = self.allocation_service.allocate(instance, epsilon, (*key, s), policy=spec.policy)
            except InvalidDistribution as e:
                invalid += 1
                logger.debug(f"Invalid distribution at {key_label((*key, s))}: mass {e.mass:.6g}")
                continue
            allocations.append(y)
            popts.append(trace.popt)
            renormalized += int(trace.renormalized)
        return allocations, popts, invalid, renormalized

    def reference_optimum(self, spec: ExperimentSpec, instance: AuctionInstance) -> Tuple[Optional[float], Optional[str]]:
        """OPT for eval-ratio: the oracle for small instances, the solver otherwise."""
        if spec.command != "eval-ratio":
            return None, None
        if instance.bid_count <= settings.ORACLE_MAX_BIDS:
            return brute_force_optimal(instance)[1], "oracle"
        return self.solver.solve_exact(instance)[1], "solver"

    def evaluate_trial(self, spec: ExperimentSpec, job: Tuple[int, GridPoint, int]) -> List[dict]:
        """
        Rows of one (grid point, trial) for every epsilon.

        A trial whose exact solves hit the solver's size or work cap is kept
        as a row with ``capped`` set and NaN mechanism columns.
        """
        point_index, point, trial = job
        key = (spec.seed, point_index, trial)
        instance = self.build_instance(spec, point, key)
        n = instance.bid_count
        base = dict(zip(GRID_COLUMNS, point), trial=trial, bids=n)
        baseline = greedy_allocate(instance) if spec.command == "compare-baseline" else None

        capped = False
        try:
            opt, opt_source = self.reference_optimum(spec, instance)
            samples = [
                self.sample_allocations(spec, instance, epsilon, (spec.seed, point_index, trial, e))
                for e, epsilon in enumerate(spec.epsilons)
            ]
        except SolverLimitExceeded as e:
            logger.warning(f"{spec.command}: grid point {point}, trial {trial} capped ({n} bids): {e}")
            capped = True
            opt, opt_source = float("nan"), "capped"
            samples = [([], [], 0, 0) for _ in spec.epsilons]

        rows = [
            self.trial_row(spec, instance, base, epsilon, opt, opt_source, baseline, *sample, capped=capped)
            for epsilon, sample in zip(spec.epsilons, samples)
        ]
        logger.info(f"{spec.command}: grid point {point}, trial {trial} done ({n} bids)")
        return rows

    @staticmethod
    def trial_row(
        spec: ExperimentSpec,
        instance: AuctionInstance,
        base: dict,
        epsilon: float,
        opt: Optional[float],
        opt_source: Optional[str],
        baseline: Optional[Allocation],
        allocations: List[Allocation],
        popts: List[float],
        invalid: int,
        renormalized: int,
        capped: bool = False,
    ) -> dict:
        users = base["users"]
        bid_users = [b.user_id for b in instance.bids]
        nan = float("nan")
        welfare = float(np.mean([social_welfare(y, instance) for y in allocations])) if allocations else nan
        satisfaction = eval_user_satisfaction(allocations, users, bid_users).mean if allocations else nan
        popt = float(np.mean(popts)) if popts else nan
        row = dict(base, epsilon=epsilon, capped=capped, invalid_dist_count=invalid, renormalized_count=renormalized)
        if spec.command == "eval-ratio":
            ratio = welfare / opt if opt else nan
            row.update(
                ratio=ratio,
                relative_ratio=ratio / (1 - epsilon),
                welfare=welfare,
                opt=opt,
                opt_source=opt_source,
                popt=popt,
                popt_ratio=popt / opt if opt else nan,
                small_bid=check_small_bid(instance, epsilon).passes,
            )
        elif spec.command == "eval-welfare":
            row.update(welfare=welfare, popt=popt)
        elif spec.command == "eval-satisfaction":
            row.update(satisfaction=satisfaction)
        else:
            row.update(
                mechanism_welfare=welfare,
                baseline_welfare=social_welfare(baseline, instance),
                mechanism_satisfaction=satisfaction,
                baseline_satisfaction=eval_user_satisfaction([baseline], users, bid_users).mean,
                baseline=BASELINE_LABEL,
            )
        return row

    def evaluate(self, spec: ExperimentSpec) -> Dict[str, str]:
        jobs = [(p, point, t) for p, point in enumerate(self.grid(spec)) for t in range(spec.trials)]
        results = self._map(spec, lambda job: self.evaluate_trial(spec, job), jobs)
        frame = pd.DataFrame([row for rows in results for row in rows])
        path = self.output_path(spec, f"{spec.command}.csv")
        write_csv(frame, path, self.metadata(spec))
        summary_path = self.write_summary(frame, path, GRID_COLUMNS + ["epsilon"], spec)
        return {"trials": path, "summary": summary_path}

    def write_summary(self, frame: pd.DataFrame, path: str, keys: List[str], spec: ExperimentSpec, **extra) -> str:
        """Per-configuration means of every numeric column, recomputable from the trial rows."""
        numeric = frame.drop(columns=["trial"]).select_dtypes(include=[np.number, bool])
        grouped = numeric.assign(**{k: frame[k] for k in keys}).groupby(keys, sort=True)
        summary = grouped.mean().reset_index()
        summary.insert(len(keys), "trials", grouped.size().values)
        for column, value in extra.items():
            summary[column] = value
        root, ext = os.path.splitext(path)
        summary_path = f"{root}_summary{ext or '.csv'}"
        write_csv(summary, summary_path, self.metadata(spec, summary_of=os.path.basename(path)))
        return summary_path

    # -- truthfulness probe -----------------------------------------------

    def probe_utilities(
        self, instance: AuctionInstance, epsilon: float, bidder: int, valuation: float, report: float,
        keys: Sequence, exact: bool, policy: Optional[str],
    ) -> np.ndarray:
        """Utility v*y_i - p_i of one reported price across the given sample keys."""
        reported = with_price(instance, bidder, report)
        utilities = np.empty(len(keys))
        for s, key in enumerate(keys):
            if exact:
                y = self.allocation_service.expected_allocation(reported, epsilon, key, policy=policy)
                payment = self.payment_service.expected_payment(reported, epsilon, bidder, key, policy=policy)
                utilities[s] = valuation * y[bidder] - payment
            else:
                y, _ = self.allocation_service.allocate(reported, epsilon, key, policy=policy)
                payment, _ = self.payment_service.vcg_payment(reported, epsilon, bidder, y, key, policy=policy)
                utilities[s] = valuation * y.x[bidder] - payment
        return utilities

    def probe_instance(self, spec: ExperimentSpec, trial: int) -> AuctionInstance:
        if spec.instance_path:
            return load_instance(spec.instance_path)
        _, _, datacenters, resources = self.grid(spec)[0]
        n = spec.probe_bids
        return random_instance((spec.seed, trial), n, resources, datacenters, users=max(n // 2, 1))

    def probe_trial(self, spec: ExperimentSpec, trial: int) -> List[dict]:
        probe = spec.probe
        instance = self.probe_instance(spec, trial)
        bidder = probe.bidder % instance.bid_count
        valuation = probe.valuation if probe.valuation is not None else float(instance.prices[bidder])
        keys = [(spec.seed, trial, s) for s in range(probe.samples)]
        arms = [valuation] + [r for r in probe.misreports(valuation) if r != valuation]
        utilities = [
            self.probe_utilities(instance, spec.epsilon, bidder, valuation, r, keys, probe.exact_omega, spec.policy)
            for r in arms
        ]
        truthful = utilities[0]
        rows = []
        for report, u in zip(arms, utilities):
            gain = u - truthful
            root_n = np.sqrt(len(u))
            result = ProbeArmResult(
                report=report,
                mean_utility=float(u.mean()),
                stderr=float(u.std(ddof=1) / root_n),
                gain_over_truthful=float(gain.mean()),
                gain_stderr=float(gain.std(ddof=1) / root_n),
                samples=len(u),
            )
            rows.append(dict(
                trial=trial, bidder=bidder, valuation=valuation, truthful=report == valuation,
                **result.dict(), beats_truthful=result.beats_truthful,
            ))
        violations = sum(r["beats_truthful"] for r in rows)
        logger.info(f"Probe trial {trial}: bidder {bidder}, {len(arms)} arms, {violations} significant gains")
        return rows

    def probe_truthfulness(self, spec: ExperimentSpec) -> Dict[str, str]:
        results = self._map(spec, lambda t: self.probe_trial(spec, t), list(range(spec.trials)))
        frame = pd.DataFrame([row for rows in results for row in rows])
        path = self.output_path(spec, "probe-truthfulness.csv")
        write_csv(frame, path, self.metadata(spec, violations=int(frame["beats_truthful"].sum())))
        return {"trials": path}

    # -- smoothed front growth --------------------------------------------

    def bench_trial(self, spec: ExperimentSpec, job: Tuple[int, int]) -> Tuple[dict, pd.DataFrame]:
        """Front statistics of one perturbed random instance, plus its per-stage sizes."""
        n, trial = job
        _, _, datacenters, resources = self.grid(spec)[0]
        key = (spec.seed, n, trial)
        instance = random_instance(key, n, resources, datacenters, users=max(n // 2, 1))
        dims = instance.constraint_count
        theta = draw_thetas(spec.epsilon, n, dims, key)
        row = dict(bids=n, trial=trial, kd=dims)
        try:
            front = self.solver.pareto_front(perturb_instance(instance, theta))
        except SolverLimitExceeded as e:
            logger.warning(f"bench-front: {n} bids, trial {trial} capped: {e}")
            nan = float("nan")
            row.update(capped=True, front_size=nan, peak_size=nan, monotone=nan, operations=nan, work_ratio=nan)
            return row, pd.DataFrame(columns=["bids", "trial", "stage", "front_size"])
        size = len(front)
        row.update(
            capped=False,
            front_size=size,
            peak_size=front.peak_size,
            monotone=front.is_monotone,
            operations=front.operations,
            work_ratio=front.operations / (dims * n * size * size),
        )
        stages = front_trace_frame(front)
        stages.insert(0, "trial", trial)
        stages.insert(0, "bids", n)
        return row, stages

    def bench_front(self, spec: ExperimentSpec) -> Dict[str, str]:
        jobs = [(n, t) for n in spec.bids for t in range(spec.trials)]
        results = self._map(spec, lambda job: self.bench_trial(spec, job), jobs)
        frame = pd.DataFrame([row for row, _ in results])
        path = self.output_path(spec, "bench-front.csv")
        write_csv(frame, path, self.metadata(spec))

        root, ext = os.path.splitext(path)
        stages_path = f"{root}_stages{ext or '.csv'}"
        stages = pd.concat([s for _, s in results], ignore_index=True)
        write_csv(stages, stages_path, self.metadata(spec, stages_of=os.path.basename(path)))

        means = frame.groupby("bids")["front_size"].mean()
        slope = loglog_slope(means.index.values, means.values)
        logger.info(f"Front growth log-log slope: {slope:.3f}")
        summary_path = self.write_summary(frame, path, ["bids"], spec, loglog_slope=slope)
        return {"trials": path, "stages": stages_path, "summary": summary_path}
