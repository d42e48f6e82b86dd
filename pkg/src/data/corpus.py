"""
Synthetic speaker corpus.

Speakers are unit directions on the feature hypersphere. Every utterance adds
its own channel offset and every frame adds within-speaker noise, so
frame = gain * direction + channel + noise.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import ShapeError
from ..numkit import Matrix, RngStream

logger = logging.getLogger(__name__)


class CorpusSpec(BaseModel):
    """Generation parameters of a synthetic corpus."""

    model_config = ConfigDict(frozen=True)

    n_speakers: int = Field(30, ge=2)
    utts_per_speaker: int = Field(10, ge=1)
    frames_min: int = Field(50, ge=1)
    frames_max: int = Field(100, ge=1)
    feature_dim: int = Field(10, ge=1)
    sigma_within: float = Field(0.3, ge=0.0, description="Per-frame noise std")
    sigma_channel: float = Field(0.1, ge=0.0, description="Per-utterance channel offset std")
    gain: float = Field(1.0, gt=0.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_frames(self) -> "CorpusSpec":
        if self.frames_min > self.frames_max:
            raise ValueError(f"frames_min {self.frames_min} exceeds frames_max {self.frames_max}")
        return self


class DataConfig(BaseModel):
    """Corpus geometry plus the train/validation/test split and trial counts."""

    model_config = ConfigDict(frozen=True)

    n_train_speakers: int = Field(20, ge=2)
    n_test_speakers: int = Field(10, ge=2)
    utts_per_speaker: int = Field(10, ge=2)
    frames_min: int = Field(50, ge=1)
    frames_max: int = Field(100, ge=1)
    feature_dim: int = Field(10, ge=2)
    sigma_within: float = Field(0.3, ge=0.0)
    sigma_channel: float = Field(0.1, ge=0.0)
    gain: float = Field(1.0, gt=0.0)
    validation_utts_per_speaker: int = Field(1, ge=0)
    n_target_trials: int = Field(300, ge=0)
    n_nontarget_trials: int = Field(3000, ge=0)

    @model_validator(mode="after")
    def _check_split(self) -> "DataConfig":
        if self.frames_min > self.frames_max:
            raise ValueError(f"frames_min {self.frames_min} exceeds frames_max {self.frames_max}")
        if self.validation_utts_per_speaker >= self.utts_per_speaker:
            raise ValueError("validation_utts_per_speaker must leave training utterances per speaker")
        return self

    def corpus_spec(self, seed: int) -> CorpusSpec:
        return CorpusSpec(
            n_speakers=self.n_train_speakers + self.n_test_speakers,
            utts_per_speaker=self.utts_per_speaker,
            frames_min=self.frames_min,
            frames_max=self.frames_max,
            feature_dim=self.feature_dim,
            sigma_within=self.sigma_within,
            sigma_channel=self.sigma_channel,
            gain=self.gain,
            seed=seed,
        )


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    speaker: int
    frames: Matrix

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def utterance_id(speaker: int, index: int) -> str:
    return f"spk{speaker:04d}-utt{index:03d}"


@dataclass
class Corpus:
    """Utterances with dense speaker labels in [0, n_speakers)."""

    utterances: List[Utterance]
    n_speakers: int
    feature_dim: int

    def __post_init__(self):
        for utt in self.utterances:
            if utt.frames.ndim != 2 or utt.frames.shape[1] != self.feature_dim:
                raise ShapeError(
                    f"utterance {utt.utt_id} has shape {utt.frames.shape}, expected T x {self.feature_dim}"
                )
            if not 0 <= utt.speaker < self.n_speakers:
                raise ShapeError(
                    f"utterance {utt.utt_id} has speaker {utt.speaker} outside [0, {self.n_speakers})"
                )
        self._index = {utt.utt_id: utt for utt in self.utterances}
        if len(self._index) != len(self.utterances):
            raise ValueError("utterance ids must be unique")

    def __len__(self) -> int:
        return len(self.utterances)

    def __contains__(self, utt_id: str) -> bool:
        return utt_id in self._index

    def get(self, utt_id: str) -> Utterance:
        if utt_id not in self._index:
            raise KeyError(f"utterance {utt_id!r} is not in the corpus")
        return self._index[utt_id]

    def by_speaker(self) -> Dict[int, List[Utterance]]:
        groups: Dict[int, List[Utterance]] = {s: [] for s in range(self.n_speakers)}
        for utt in self.utterances:
            groups[utt.speaker].append(utt)
        return groups

    def subset(self, speakers: Iterable[int], utterances: Optional[slice] = None) -> "Corpus":
        """
        Keep the given speakers, relabelled densely in the order given.

        utterances optionally slices each kept speaker's utterance list.
        Utterance ids are preserved.
        """
        order = list(speakers)
        relabel = {old: new for new, old in enumerate(order)}
        if len(relabel) != len(order):
            raise ValueError("speakers must not repeat")
        groups = self.by_speaker()
        kept = []
        for old in order:
            if old not in groups:
                raise KeyError(f"speaker {old} is not in the corpus")
            selected = groups[old] if utterances is None else groups[old][utterances]
            kept.extend(Utterance(u.utt_id, relabel[old], u.frames) for u in selected)
        return Corpus(utterances=kept, n_speakers=len(order), feature_dim=self.feature_dim)


@dataclass
class CorpusSplits:
    train: Corpus
    validation: Corpus
    test: Corpus


def generate_corpus(spec: CorpusSpec) -> Corpus:
    """Deterministic synthetic corpus drawn from the seed's data stream."""
    if spec.feature_dim < 2:
        raise ValueError(f"feature_dim must be at least 2, got {spec.feature_dim}")
    rng = RngStream(spec.seed, "data")
    directions = rng.gaussian(spec.n_speakers * spec.feature_dim).reshape(
        spec.n_speakers, spec.feature_dim
    )
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)

    utterances = []
    for speaker in range(spec.n_speakers):
        for index in range(spec.utts_per_speaker):
            n_frames = int(rng.generator.integers(spec.frames_min, spec.frames_max + 1))
            channel = spec.sigma_channel * rng.gaussian(spec.feature_dim)
            noise = spec.sigma_within * rng.gaussian(n_frames * spec.feature_dim).reshape(
                n_frames, spec.feature_dim
            )
            frames = spec.gain * directions[speaker] + channel + noise
            utterances.append(Utterance(utterance_id(speaker, index), speaker, frames))

    logger.info(
        "Generated %d utterances for %d speakers (dim %d)",
        len(utterances),
        spec.n_speakers,
        spec.feature_dim,
    )
    return Corpus(utterances=utterances, n_speakers=spec.n_speakers, feature_dim=spec.feature_dim)


def split_corpus(corpus: Corpus, config: DataConfig) -> CorpusSplits:
    """
    Speakers [0, n_train) train, the rest are the held-out test speakers.

    The last validation_utts_per_speaker utterances of each training speaker
    are set aside for the validation loss; they keep the training labels.
    """
    n_train = config.n_train_speakers
    if corpus.n_speakers != n_train + config.n_test_speakers:
        raise ValueError(
            f"corpus has {corpus.n_speakers} speakers, config expects "
            f"{n_train} train + {config.n_test_speakers} test"
        )
    held_out = config.validation_utts_per_speaker
    train_speakers = range(n_train)
    if held_out:
        train = corpus.subset(train_speakers, slice(None, -held_out))
        validation = corpus.subset(train_speakers, slice(-held_out, None))
    else:
        train = corpus.subset(train_speakers)
        validation = Corpus(utterances=[], n_speakers=n_train, feature_dim=corpus.feature_dim)
    test = corpus.subset(range(n_train, corpus.n_speakers))
    return CorpusSplits(train=train, validation=validation, test=test)
