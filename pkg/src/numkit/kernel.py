"""
Deterministic numeric kernel.

Dense float64 arrays stand in for vectors and matrices, randomness comes from
counter-based Philox streams keyed by (seed, stream id), and a central
finite-difference oracle backs every gradient check in the package.
"""

from typing import Any, Callable, Dict, Optional, Union

import numpy as np
import numpy.typing as npt
from scipy.special import softmax

from ..errors import NumericError, ShapeError

Matrix = npt.NDArray[np.float64]
Vector = npt.NDArray[np.float64]

# Named streams so that adding draws to one consumer never shifts another.
STREAM_IDS: Dict[str, int] = {
    "data": 0,
    "init": 1,
    "sampler": 2,
    "trials": 3,
    "validation": 4,
}

_SEED_MASK = (1 << 64) - 1


class RngStream:
    """A seeded Philox stream identified by (seed, stream id)."""

    def __init__(self, seed: int, stream_id: Union[int, str] = 0):
        if isinstance(stream_id, str):
            if stream_id not in STREAM_IDS:
                raise ValueError(
                    f"Unknown stream name {stream_id!r}; expected one of {sorted(STREAM_IDS)}"
                )
            stream_id = STREAM_IDS[stream_id]
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        key = np.array([self.seed & _SEED_MASK, self.stream_id], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def gaussian(self, n: int) -> Vector:
        """Draw n standard-normal values, advancing the stream."""
        return self.generator.standard_normal(n)

    def state_dict(self) -> Dict[str, Any]:
        """JSON-friendly snapshot of the generator state."""
        return {
            "seed": self.seed,
            "stream_id": self.stream_id,
            "bit_generator": _to_builtin(self.generator.bit_generator.state),
        }

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        if state["seed"] != self.seed or state["stream_id"] != self.stream_id:
            raise ValueError(
                f"State belongs to stream ({state['seed']}, {state['stream_id']}), "
                f"not ({self.seed}, {self.stream_id})"
            )
        self.generator.bit_generator.state = _from_builtin(state["bit_generator"])

    @classmethod
    def from_state_dict(cls, state: Dict[str, Any]) -> "RngStream":
        stream = cls(state["seed"], state["stream_id"])
        stream.load_state_dict(state)
        return stream


def _to_builtin(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _to_builtin(v) for k, v in value.items()}
    if isinstance(value, np.ndarray):
        return {"__uint64__": [int(v) for v in value.ravel()]}
    if isinstance(value, np.integer):
        return int(value)
    return value


def _from_builtin(value: Any) -> Any:
    if isinstance(value, dict):
        if "__uint64__" in value:
            return np.array(value["__uint64__"], dtype=np.uint64)
        return {k: _from_builtin(v) for k, v in value.items()}
    return value


def rng_draw_gaussian(stream: RngStream, n: int) -> Vector:
    """Draw n standard-normal values from the stream."""
    return stream.gaussian(n)


def check_finite(name: str, array: np.ndarray) -> None:
    if not np.all(np.isfinite(array)):
        bad = np.argwhere(~np.isfinite(array))[0]
        raise NumericError(f"{name} has a non-finite entry at index {tuple(int(i) for i in bad)}")


def as_matrix(name: str, array: npt.ArrayLike, cols: Optional[int] = None) -> Matrix:
    """Coerce to a finite 2-D float64 array, optionally checking the column count."""
    matrix = np.asarray(array, dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {matrix.shape}")
    if cols is not None and matrix.shape[1] != cols:
        raise ShapeError(f"{name} must have {cols} columns, got shape {matrix.shape}")
    check_finite(name, matrix)
    return matrix


def stable_softmax(logits: npt.ArrayLike) -> Vector:
    """Softmax of a finite, non-empty vector via max subtraction."""
    values = np.asarray(logits, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise NumericError(f"stable_softmax needs a non-empty vector, got shape {values.shape}")
    check_finite("logits", values)
    return softmax(values)


def finite_difference_grad(
    f: Callable[[np.ndarray], float],
    point: npt.ArrayLike,
    h: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of a scalar function, same shape as point."""
    if h <= 0:
        raise ValueError(f"Step h must be positive, got {h}")
    base = np.array(point, dtype=np.float64)
    flat = base.reshape(-1)
    grad = np.zeros_like(flat)
    for k in range(flat.size):
        original = flat[k]
        flat[k] = original + h
        f_plus = float(f(base))
        flat[k] = original - h
        f_minus = float(f(base))
        flat[k] = original
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"Function is not finite around coordinate {k}")
        grad[k] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(base.shape)


def relative_error(analytic: npt.ArrayLike, numeric: npt.ArrayLike, floor: float = 1e-6) -> float:
    """Norm-wise relative error, with a floor so all-zero gradients compare sanely."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(n)), floor)
    return float(np.linalg.norm(a - n)) / scale
