import json
import logging
import os
from typing import Any, Dict, Optional

import pandas as pd

import app

logger = logging.getLogger(__name__)


def meta_path(path: str) -> str:
    return f"{path}.meta.json"


def key_label(key) -> str:
    """Render a stream key as 'master-part-part'."""
    return "-".join(str(int(part)) for part in key)


def write_json(payload: Dict[str, Any], path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=str)
        f.write("\n")


def write_csv(frame: pd.DataFrame, path: str, metadata: Optional[Dict[str, Any]] = None) -> str:
    """
    Write a CSV artifact plus a metadata sidecar.

    The sidecar records the package version and whatever seed and config the
    caller passes. Nothing time-dependent is written, so reruns are byte-identical.
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    payload = {"version": app.__version__, "rows": int(len(frame)), "columns": list(frame.columns)}
    payload.update(metadata or {})
    write_json(payload, meta_path(path))
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path
