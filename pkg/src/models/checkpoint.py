"""
Versioned binary checkpoints of the full training state.

Layout: magic b"SPKMCKPT", uint32 format version, 64 ASCII bytes of config
digest, uint32 header length, a JSON header (sorted keys), then every tensor
as little-endian float64 in declaration order (parameters, then buffers).
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from ..errors import CheckpointError
from .network import EmbeddingNet

logger = logging.getLogger(__name__)

MAGIC = b"SPKMCKPT"
FORMAT_VERSION = 1
DIGEST_BYTES = 64
_DTYPE = np.dtype("<f8")


@dataclass
class TrainState:
    """Everything needed to resume training bit-for-bit."""

    net: EmbeddingNet
    step: int = 0
    lr: float = 0.01
    scheduler: Dict[str, Any] = field(default_factory=dict)
    rng: Dict[str, Any] = field(default_factory=dict)


def _pack_digest(digest: str) -> bytes:
    raw = (digest or "").encode("ascii")
    if len(raw) > DIGEST_BYTES:
        raise CheckpointError(f"config digest longer than {DIGEST_BYTES} characters")
    return raw.ljust(DIGEST_BYTES, b"0") if raw else b"-" * DIGEST_BYTES


def checkpoint_save(state: TrainState, path: Union[str, Path], digest: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors = state.net.tensors()
    header = {
        "tensors": [[name, list(value.shape)] for name, value in tensors.items()],
        "n_classes": state.net.n_classes,
        "ring_target": state.net.ring_target,
        "step": int(state.step),
        "lr": float(state.lr),
        "scheduler": state.scheduler,
        "rng": state.rng,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(_pack_digest(digest))
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for value in tensors.values():
            f.write(np.ascontiguousarray(value, dtype=_DTYPE).tobytes())
    logger.debug("Saved checkpoint at step %d to %s", state.step, path)
    return path


def read_checkpoint_digest(path: Union[str, Path]) -> str:
    raw = Path(path).read_bytes()
    prefix = len(MAGIC) + 4
    if raw[: len(MAGIC)] != MAGIC or len(raw) < prefix + DIGEST_BYTES:
        raise CheckpointError(f"{path} is not a checkpoint file")
    digest = raw[prefix : prefix + DIGEST_BYTES].decode("ascii")
    return "" if digest == "-" * DIGEST_BYTES else digest


def checkpoint_load(
    path: Union[str, Path],
    template: EmbeddingNet,
    expected_digest: Optional[str] = None,
) -> TrainState:
    """
    Load a checkpoint into a copy of template.

    The tensor list must match the template name by name and shape by shape;
    the first mismatch is reported. expected_digest, when given, must equal
    the stored config digest.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    raw = path.read_bytes()

    offset = len(MAGIC)
    if raw[:offset] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file (bad magic)")
    if len(raw) < offset + 4 + DIGEST_BYTES + 4:
        raise CheckpointError(f"{path} is truncated before the header")
    (version,) = struct.unpack_from("<I", raw, offset)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}; expected {FORMAT_VERSION}")
    offset += 4
    digest = raw[offset : offset + DIGEST_BYTES].decode("ascii")
    offset += DIGEST_BYTES
    if expected_digest is not None and digest != _pack_digest(expected_digest).decode("ascii"):
        raise CheckpointError(
            f"checkpoint config digest {digest} does not match the current config {expected_digest}"
        )
    (header_length,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    try:
        header = json.loads(raw[offset : offset + header_length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path} has a corrupt header: {e}") from e
    offset += header_length

    expected = template.tensors()
    stored = header["tensors"]
    for (name, shape), (want_name, want_value) in zip(stored, expected.items()):
        if name != want_name or tuple(shape) != want_value.shape:
            raise CheckpointError(
                f"tensor mismatch: checkpoint has {name} {tuple(shape)}, "
                f"network expects {want_name} {want_value.shape}"
            )
    if len(stored) != len(expected):
        first = list(expected)[len(stored)] if len(stored) < len(expected) else stored[len(expected)][0]
        raise CheckpointError(
            f"tensor mismatch: checkpoint has {len(stored)} tensors, network expects "
            f"{len(expected)} (first unmatched: {first})"
        )

    total = sum(int(np.prod(shape)) for _, shape in stored) * _DTYPE.itemsize
    if len(raw) - offset != total:
        raise CheckpointError(
            f"{path} payload has {len(raw) - offset} bytes, header describes {total}"
        )

    net = template.copy()
    net.ring_target = float(header["ring_target"])
    for name, shape in stored:
        size = int(np.prod(shape))
        value = np.frombuffer(raw, dtype=_DTYPE, count=size, offset=offset).reshape(shape).copy()
        offset += size * _DTYPE.itemsize
        if name in net.params:
            net.params[name] = value.astype(np.float64)
        else:
            net.buffers[name] = value.astype(np.float64)
    net.check_finite()
    return TrainState(
        net=net,
        step=int(header["step"]),
        lr=float(header["lr"]),
        scheduler=header["scheduler"],
        rng=header["rng"],
    )
