import math

from pydantic import BaseModel, validator


class TaskRecord(BaseModel):
    """One task of a cluster-usage trace, demands normalized to machine size."""
    job_id: str
    cpu: float
    ram: float
    disk: float

    @validator("cpu", "ram", "disk")
    def _check_demand(cls, value):
        if not math.isfinite(value) or value < 0:
            raise ValueError("task demands must be finite and nonnegative")
        return value

    @property
    def demand(self):
        return (self.cpu, self.ram, self.disk)

    class Config:
        allow_mutation = False
