import logging
import os
from collections import Counter, OrderedDict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.cluster.vq import kmeans2

from app.core.config import settings
from app.core.errors import IngestError, ParameterError
from app.models.instance import AuctionInstance, BidRequest, VmCatalog, assemble_demands
from app.models.request import IngestConfig
from app.models.task import TaskRecord
from app.utils.rng import (
    INGEST_CAPACITY,
    INGEST_CLUSTER,
    INGEST_DATACENTER,
    INGEST_PRICE,
    INGEST_USERS,
    SYNTHETIC_TASKS,
    SeedLike,
    stream,
)

logger = logging.getLogger(__name__)

TASK_COLUMNS = ["job_id", "cpu", "ram", "disk"]
RESOURCE_COLUMNS = TASK_COLUMNS[1:]


class TraceService:
    """Turns task records into auction instances: jobs become bundle bids over clustered VM types."""

    def __init__(self, vm_type_count: int = None, kmeans_iterations: int = None, malformed_limit: float = None):
        self.vm_type_count = vm_type_count or settings.VM_TYPE_COUNT
        self.kmeans_iterations = kmeans_iterations or settings.KMEANS_ITERATIONS
        self.malformed_limit = settings.INGEST_MALFORMED_LIMIT if malformed_limit is None else malformed_limit

    def parse_tasks(self, path: str) -> List[TaskRecord]:
        """
        Read a (job_id, cpu, ram, disk) CSV; the header row is optional.

        Rows with missing, non-numeric, negative or non-finite demands, or with
        extra fields, are skipped and counted. More than the configured share
        of malformed rows raises IngestError.
        """
        try:
            if os.path.getsize(path) == 0:
                return []
        except OSError as e:
            raise IngestError(f"Cannot read task file {path}: {e}", path=path) from e
        bad_lines = []
        try:
            frame = pd.read_csv(
                path,
                header=None,
                names=TASK_COLUMNS,
                dtype=str,
                engine="python",
                skip_blank_lines=True,
                on_bad_lines=lambda line: bad_lines.append(line),
            )
        except pd.errors.EmptyDataError:
            return []
        if len(frame) and str(frame.iloc[0]["cpu"]).strip().lower() == "cpu":
            frame = frame.iloc[1:]
        if frame.empty and not bad_lines:
            return []

        values = frame[RESOURCE_COLUMNS].apply(pd.to_numeric, errors="coerce").astype(np.float64)
        job_ids = frame["job_id"].fillna("").str.strip()
        valid = values.notna().all(axis=1) & np.isfinite(values).all(axis=1) & (values >= 0).all(axis=1) & (job_ids != "")
        total = len(frame) + len(bad_lines)
        malformed = int((~valid).sum()) + len(bad_lines)
        if total and malformed / total > self.malformed_limit:
            raise IngestError(
                f"{malformed} of {total} rows in {path} are malformed", malformed=malformed, rows=total
            )
        if malformed:
            logger.warning(f"Skipped {malformed} malformed rows in {path}")

        records = [
            TaskRecord(job_id=job, cpu=row.cpu, ram=row.ram, disk=row.disk)
            for job, row in zip(job_ids[valid], values[valid].itertuples(index=False))
        ]
        logger.info(f"Parsed {len(records)} tasks from {path}")
        return records

    def cluster(
        self, demands: np.ndarray, seed: SeedLike, type_count: Optional[int] = None
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Map task demand vectors onto at most type_count VM types; returns (types, labels)."""
        type_count = type_count or self.vm_type_count
        distinct, inverse = np.unique(demands, axis=0, return_inverse=True)
        if distinct.shape[0] <= type_count:
            return distinct, inverse.reshape(-1)
        centroids, labels = kmeans2(
            demands, type_count, iter=self.kmeans_iterations, minit="++", seed=stream(seed, INGEST_CLUSTER)
        )
        used = np.unique(labels)
        remap = np.full(centroids.shape[0], -1)
        remap[used] = np.arange(used.size)
        return centroids[used], remap[labels]

    def build_bids(
        self,
        tasks: Sequence[TaskRecord],
        config: IngestConfig,
        price_scale: Optional[float] = None,
    ) -> Tuple[Optional[VmCatalog], List[BidRequest]]:
        """
        Cluster tasks into VM types and turn every job into one bundle bid.

        The bundle counts tasks per (VM type, random datacenter); its price is
        the bundle's total resource demand times the unit prices, scaled by a
        uniform factor from price_scale_range (or by ``price_scale``). Bids in
        the returned pool carry the job id as user id until users are drawn.
        """
        resources = config.resource_count
        if resources > len(RESOURCE_COLUMNS):
            raise ParameterError(f"task records carry {len(RESOURCE_COLUMNS)} resources, {resources} requested")
        demands = np.array([task.demand[:resources] for task in tasks], dtype=np.float64).reshape(-1, resources)
        nonzero = demands.max(axis=1) > 0 if demands.size else np.zeros(0, dtype=bool)
        if not np.all(nonzero):
            logger.info(f"Dropping {int((~nonzero).sum())} tasks without resource demand")
        tasks = [task for task, keep in zip(tasks, nonzero) if keep]
        demands = demands[nonzero]
        if not tasks:
            return None, []

        types, labels = self.cluster(demands, config.seed, config.vm_type_count)
        catalog = VmCatalog(vm_types=types)
        datacenters = stream(config.seed, INGEST_DATACENTER).integers(0, config.datacenters, size=len(tasks))

        jobs: Dict[str, Counter] = OrderedDict()
        for task, label, datacenter in zip(tasks, labels, datacenters):
            jobs.setdefault(task.job_id, Counter())[(int(label), int(datacenter))] += 1

        unit_prices = np.asarray(config.unit_prices, dtype=np.float64)
        price_rng = stream(config.seed, INGEST_PRICE)
        pool = []
        for job_id, counts in jobs.items():
            total = sum(count * catalog.vm_types[m] for (m, _), count in counts.items())
            scale = price_scale if price_scale is not None else price_rng.uniform(*config.price_scale_range)
            pool.append(BidRequest(user_id=job_id, price=float(total @ unit_prices) * scale, vm_counts=dict(counts)))
        logger.info(f"Built {len(pool)} bundles over {catalog.vm_type_count} VM types")
        return catalog, pool

    @staticmethod
    def assign_users(pool: Sequence[BidRequest], config: IngestConfig) -> List[BidRequest]:
        """Every user draws 1..max_bids_per_user distinct bundles from the pool."""
        if not pool:
            return []
        rng = stream(config.seed, INGEST_USERS)
        bids = []
        for w in range(config.users):
            count = min(int(rng.integers(1, config.max_bids_per_user + 1)), len(pool))
            for k in rng.choice(len(pool), size=count, replace=False):
                bids.append(pool[k].copy(update={"user_id": f"u{w}"}))
        return bids

    @staticmethod
    def derive_capacities(
        demands: np.ndarray,
        config: IngestConfig,
        factor: Optional[float] = None,
    ) -> np.ndarray:
        """c_j = (total demand on j) * U(capacity_factor_range), default range [0, 0.5 W/N]."""
        demands = np.asarray(demands, dtype=np.float64)
        totals = demands.sum(axis=0)
        if factor is not None:
            return totals * factor
        n = max(demands.shape[0], 1)
        low, high = config.capacity_factor_range or (0.0, 0.5 * config.users / n)
        factors = stream(config.seed, INGEST_CAPACITY).uniform(low, high, size=totals.shape[0])
        return totals * factors

    def build_instance(
        self,
        tasks: Sequence[TaskRecord],
        config: IngestConfig,
        epsilon: Optional[float] = None,
        price_scale: Optional[float] = None,
        capacity_factor: Optional[float] = None,
    ) -> AuctionInstance:
        catalog, pool = self.build_bids(tasks, config, price_scale)
        bids = self.assign_users(pool, config)
        resources, datacenters = config.resource_count, config.datacenters
        width = resources * datacenters
        rows = [assemble_demands(bid, catalog, datacenters) for bid in bids]
        demands = np.vstack(rows) if rows else np.zeros((0, width))
        capacities = self.derive_capacities(demands, config, capacity_factor)
        instance = AuctionInstance(
            resource_count=resources,
            datacenter_count=datacenters,
            bids=bids,
            capacities=capacities,
            catalog=catalog,
            epsilon=epsilon,
        )
        logger.info(f"Trace instance: {instance.bid_count} bids from {instance.user_count} users, KD={width}")
        return instance

    @staticmethod
    def synthetic_tasks(jobs: int, seed: SeedLike, max_tasks_per_job: int = 4, shapes: int = 25) -> List[TaskRecord]:
        """Seeded stand-in for a cluster trace: tasks drawn around a few machine shapes."""
        rng = stream(seed, SYNTHETIC_TASKS)
        palette = np.column_stack([
            rng.uniform(0.02, 0.5, size=shapes),
            rng.uniform(0.02, 0.5, size=shapes),
            rng.uniform(0.0, 0.1, size=shapes),
        ])
        records = []
        for job in range(jobs):
            for _ in range(int(rng.integers(1, max_tasks_per_job + 1))):
                cpu, ram, disk = palette[rng.integers(shapes)] * rng.uniform(0.9, 1.1, size=3)
                records.append(TaskRecord(job_id=f"j{job}", cpu=round(cpu, 4), ram=round(ram, 4), disk=round(disk, 4)))
        return records
