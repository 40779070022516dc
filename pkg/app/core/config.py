from pydantic import BaseSettings
from typing import List


class Settings(BaseSettings):
    APP_NAME: str = "VM Auction Engine"
    DESCRIPTION: str = "Truthful-in-expectation randomized combinatorial auction for VM provisioning"
    LOG_LEVEL: str = "INFO"

    # Mechanism settings
    EPSILON: float = 0.05
    DISTRIBUTION_POLICY: str = "reject"  # "reject" or "renormalize"
    UNPERTURBED_CONSTRAINT: int = -1  # flattened constraint index left unperturbed

    # Exact solver settings
    FRONT_SIZE_LIMIT: int = 5_000_000
    SOLVER_DEBUG_RECOMPUTE: bool = False
    PRUNE_CHUNK_ELEMENTS: int = 2 ** 22  # bound on the pairwise comparison block
    SOLVER_OPERATION_BUDGET: int = 0  # 0 = unbounded

    # Caps for the solves inside experiment commands; a capped trial is recorded, not retried
    HARNESS_FRONT_SIZE_LIMIT: int = 20_000
    HARNESS_OPERATION_BUDGET: int = 1_000_000_000

    # Oracle settings
    ORACLE_MAX_BIDS: int = 20

    # Trace ingest settings
    INGEST_MALFORMED_LIMIT: float = 0.10
    VM_TYPE_COUNT: int = 1000
    KMEANS_ITERATIONS: int = 20
    UNIT_PRICES: List[float] = [0.048, 0.012, 0.004]  # cpu, ram, disk (example values)

    # Experiment settings
    OUTPUT_DIR: str = "data/results"
    JOBS: int = 1

    class Config:
        env_file = ".env"


settings = Settings()
