from typing import Any

import numpy as np
from pydantic import BaseModel


def frozen_array(value: Any, dtype=np.float64, ndim: int = None) -> np.ndarray:
    """Copy ``value`` into a read-only array of the given dtype."""
    array = np.array(value, dtype=dtype)
    if ndim is not None and array.ndim != ndim:
        if array.size == 0 and ndim == 2:
            array = array.reshape(0, 0)
        else:
            raise ValueError(f"expected a {ndim}-dimensional array, got shape {array.shape}")
    array.setflags(write=False)
    return array


class ArrayModel(BaseModel):
    """Immutable model that may carry numpy arrays."""

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False
        json_encoders = {
            np.ndarray: lambda a: a.tolist(),
            np.integer: int,
            np.floating: float,
        }
