"""
Verification trial lists: "enroll test target|nontarget" per line.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from ..errors import TrialError
from ..numkit import RngStream
from .corpus import Corpus

logger = logging.getLogger(__name__)

TARGET = "target"
NONTARGET = "nontarget"


@dataclass
class TrialSet:
    """(enroll, test) utterance pairs with target flags and optional scores."""

    enroll: List[str]
    test: List[str]
    target: np.ndarray
    scores: Optional[np.ndarray] = None

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=bool)
        if not (len(self.enroll) == len(self.test) == self.target.size):
            raise TrialError(
                f"trial columns differ in length: {len(self.enroll)}, {len(self.test)}, {self.target.size}"
            )
        if self.scores is not None:
            self.scores = np.asarray(self.scores, dtype=np.float64)
            if self.scores.shape != self.target.shape:
                raise TrialError(f"{self.scores.size} scores for {self.target.size} trials")

    def __len__(self) -> int:
        return self.target.size

    @property
    def n_target(self) -> int:
        return int(np.sum(self.target))

    @property
    def n_nontarget(self) -> int:
        return len(self) - self.n_target

    def with_scores(self, scores: np.ndarray) -> "TrialSet":
        return TrialSet(list(self.enroll), list(self.test), self.target.copy(), scores)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {
                "enroll": self.enroll,
                "test": self.test,
                "label": np.where(self.target, TARGET, NONTARGET),
            }
        )
        if self.scores is not None:
            frame["score"] = self.scores
        return frame


def _candidate_pairs(corpus: Corpus):
    ids = [u.utt_id for u in corpus.utterances]
    speakers = np.array([u.speaker for u in corpus.utterances])
    i, j = np.triu_indices(len(ids), k=1)
    same = speakers[i] == speakers[j]
    return ids, i, j, same


def generate_trials(corpus: Corpus, rng: RngStream, n_target: int, n_nontarget: int) -> TrialSet:
    """
    Draw distinct unordered pairs from a held-out split without replacement.

    Requests beyond the available pairs raise TrialError.
    """
    if n_target < 0 or n_nontarget < 0:
        raise TrialError("trial counts must be non-negative")
    ids, i, j, same = _candidate_pairs(corpus)
    target_pool = np.flatnonzero(same)
    nontarget_pool = np.flatnonzero(~same)
    if n_target > target_pool.size:
        raise TrialError(f"requested {n_target} target trials, only {target_pool.size} pairs exist")
    if n_nontarget > nontarget_pool.size:
        raise TrialError(
            f"requested {n_nontarget} nontarget trials, only {nontarget_pool.size} pairs exist"
        )

    chosen_target = np.sort(rng.generator.choice(target_pool, size=n_target, replace=False))
    chosen_nontarget = np.sort(rng.generator.choice(nontarget_pool, size=n_nontarget, replace=False))
    chosen = np.concatenate([chosen_target, chosen_nontarget]).astype(np.int64)
    logger.info("Generated %d target and %d nontarget trials", n_target, n_nontarget)
    return TrialSet(
        enroll=[ids[k] for k in i[chosen]],
        test=[ids[k] for k in j[chosen]],
        target=same[chosen],
    )


def write_trials(trials: TrialSet, path: Union[str, Path], digest: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labels = np.where(trials.target, TARGET, NONTARGET)
    with open(path, "w") as f:
        if digest:
            f.write(f"# config_digest={digest}\n")
        for enroll, test, label in zip(trials.enroll, trials.test, labels):
            f.write(f"{enroll} {test} {label}\n")
    return path


def read_trials(path: Union[str, Path]) -> TrialSet:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"trial file not found: {path}")
    try:
        frame = pd.read_csv(
            path,
            sep=r"\s+",
            comment="#",
            header=None,
            names=["enroll", "test", "label"],
            dtype=str,
        )
    except pd.errors.EmptyDataError:
        return TrialSet([], [], np.zeros(0, dtype=bool))
    except pd.errors.ParserError as e:
        raise TrialError(f"malformed trial file {path}: {e}") from e

    if frame.isna().any().any():
        bad = int(np.flatnonzero(frame.isna().any(axis=1).to_numpy())[0])
        raise TrialError(f"trial row {bad} does not have three fields")
    unknown = ~frame["label"].isin([TARGET, NONTARGET])
    if unknown.any():
        row = int(np.flatnonzero(unknown.to_numpy())[0])
        raise TrialError(f"trial row {row} has label {frame['label'].iloc[row]!r}")
    return TrialSet(
        enroll=frame["enroll"].tolist(),
        test=frame["test"].tolist(),
        target=(frame["label"] == TARGET).to_numpy(),
    )
