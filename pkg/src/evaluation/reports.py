"""
Report writers. Every artifact carries the config digest: CSV files start with
a "# config_digest=<hex>" comment line and JSON reports hold a
"config_digest" key.
"""

import json
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import pandas as pd

DIGEST_PREFIX = "# config_digest="


def write_csv(frame: pd.DataFrame, path: Union[str, Path], digest: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(f"{DIGEST_PREFIX}{digest}\n")
        frame.to_csv(f, index=False, lineterminator="\n")
    return path


def read_csv(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, comment="#", float_precision="round_trip")


def read_digest(path: Union[str, Path]) -> str:
    """Digest from the first line of a CSV artifact, or "" when absent."""
    with open(path) as f:
        first = f.readline().strip()
    return first[len(DIGEST_PREFIX) :] if first.startswith(DIGEST_PREFIX) else ""


def _to_builtin(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_to_builtin(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(payload: Dict[str, Any], path: Union[str, Path], digest: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"config_digest": digest, **_to_builtin(payload)}
    with open(path, "w") as f:
        json.dump(body, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path) as f:
        return json.load(f)
