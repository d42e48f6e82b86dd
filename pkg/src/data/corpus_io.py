"""
Corpus file: a readable text header followed by little-endian float64 frames.

    SPKCORPUS v1
    speakers <n>
    dim <d>
    utterances <count>
    <utt_id> <speaker> <frames>      (one line per utterance)
    digest <hex or ->
    end
    <payload: every utterance's frames, row-major, in header order>
"""

import logging
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from ..errors import CorpusFormatError
from .corpus import Corpus, Utterance

logger = logging.getLogger(__name__)

MAGIC = "SPKCORPUS v1"
_END = b"end\n"
_DTYPE = np.dtype("<f8")


def write_corpus(corpus: Corpus, path: Union[str, Path], digest: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        MAGIC,
        f"speakers {corpus.n_speakers}",
        f"dim {corpus.feature_dim}",
        f"utterances {len(corpus)}",
    ]
    lines += [f"{u.utt_id} {u.speaker} {u.n_frames}" for u in corpus.utterances]
    lines += [f"digest {digest or '-'}", "end"]
    header = ("\n".join(lines) + "\n").encode("ascii")

    with open(path, "wb") as f:
        f.write(header)
        for utt in corpus.utterances:
            f.write(np.ascontiguousarray(utt.frames, dtype=_DTYPE).tobytes())
    logger.debug("Wrote %d utterances to %s", len(corpus), path)
    return path


def _field(line: str, key: str) -> str:
    parts = line.split()
    if len(parts) != 2 or parts[0] != key:
        raise CorpusFormatError(f"expected '{key} <value>' in corpus header, got {line!r}")
    return parts[1]


def _parse_header(text: str) -> Tuple[int, int, List[Tuple[str, int, int]], str]:
    lines = text.split("\n")
    if not lines or lines[0] != MAGIC:
        raise CorpusFormatError(f"not a corpus file (expected first line {MAGIC!r})")
    try:
        n_speakers = int(_field(lines[1], "speakers"))
        dim = int(_field(lines[2], "dim"))
        count = int(_field(lines[3], "utterances"))
    except (IndexError, ValueError) as e:
        raise CorpusFormatError(f"malformed corpus header: {e}") from e

    if len(lines) < 4 + count + 1:
        raise CorpusFormatError(f"header lists {count} utterances but is too short")
    entries = []
    for line in lines[4 : 4 + count]:
        parts = line.split()
        if len(parts) != 3:
            raise CorpusFormatError(f"malformed utterance line {line!r}")
        try:
            entries.append((parts[0], int(parts[1]), int(parts[2])))
        except ValueError as e:
            raise CorpusFormatError(f"malformed utterance line {line!r}") from e
    digest = _field(lines[4 + count], "digest")
    return n_speakers, dim, entries, "" if digest == "-" else digest


def read_corpus_digest(path: Union[str, Path]) -> str:
    """Config digest recorded in a corpus file header."""
    _, _, _, digest = _parse_header(_split(Path(path).read_bytes())[0])
    return digest


def _split(raw: bytes) -> Tuple[str, bytes]:
    marker = b"\n" + _END
    position = raw.find(marker)
    if position < 0:
        raise CorpusFormatError("corpus header is not terminated by an 'end' line")
    try:
        header = raw[:position].decode("ascii")
    except UnicodeDecodeError as e:
        raise CorpusFormatError("corpus header is not ASCII text") from e
    return header, raw[position + len(marker) :]


def read_corpus(path: Union[str, Path]) -> Corpus:
    """Load a corpus file; truncated or corrupt files raise CorpusFormatError."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"corpus file not found: {path}")
    header, payload = _split(path.read_bytes())
    n_speakers, dim, entries, _ = _parse_header(header)

    expected = sum(frames for _, _, frames in entries) * dim * _DTYPE.itemsize
    if len(payload) != expected:
        raise CorpusFormatError(
            f"corpus payload has {len(payload)} bytes, header describes {expected}"
            + (" (file truncated)" if len(payload) < expected else "")
        )

    values = np.frombuffer(payload, dtype=_DTYPE)
    utterances = []
    offset = 0
    for utt_id, speaker, frames in entries:
        size = frames * dim
        block = values[offset : offset + size].reshape(frames, dim).astype(np.float64)
        utterances.append(Utterance(utt_id, speaker, block))
        offset += size
    try:
        return Corpus(utterances=utterances, n_speakers=n_speakers, feature_dim=dim)
    except ValueError as e:
        raise CorpusFormatError(f"inconsistent corpus file {path}: {e}") from e
