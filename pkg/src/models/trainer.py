"""
SGD training of the embedding network.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..data.corpus import Corpus
from ..errors import ShapeError
from ..evaluation.reports import read_csv, write_csv
from ..losses import Batch, LossConfig, total_loss
from ..numkit import RngStream
from .checkpoint import TrainState, checkpoint_load, checkpoint_save
from .network import EmbeddingNet, NetworkConfig, net_backward, net_forward

logger = logging.getLogger(__name__)

LOSS_LOG_COLUMNS = [
    "step",
    "primary_loss",
    "ring_loss",
    "mhe_loss",
    "lambda",
    "lr",
    "feature_norm_mean",
]

# Tensors excluded from weight decay.
NO_DECAY_SUFFIXES = (".bn_beta",)


class TrainConfig(BaseModel):
    """Batch sampling, optimizer and stopping settings."""

    model_config = ConfigDict(frozen=True)

    speakers_per_batch: int = Field(8, ge=2)
    segments_per_speaker: int = Field(1, ge=1)
    frames_min: int = Field(20, ge=2)
    frames_max: int = Field(40, ge=2)
    learning_rate: float = Field(0.01, gt=0.0)
    weight_decay: float = Field(0.01, ge=0.0)
    lr_halving_patience: int = Field(3, ge=1)
    lr_stop_threshold: float = Field(1e-5, gt=0.0)
    min_delta: float = Field(1e-4, ge=0.0)
    max_steps: int = Field(300, ge=0)
    eval_interval: int = Field(25, ge=1)
    checkpoint_interval: int = Field(100, ge=1)

    @model_validator(mode="after")
    def _check_frames(self) -> "TrainConfig":
        if self.frames_min > self.frames_max:
            raise ValueError(f"frames_min {self.frames_min} exceeds frames_max {self.frames_max}")
        return self


def sgd_apply(
    net: EmbeddingNet,
    grads: Dict[str, np.ndarray],
    lr: float,
    weight_decay: float,
    grad_ring_target: Optional[float] = None,
    ring_target_lr_scale: float = 1.0,
) -> EmbeddingNet:
    """
    p <- p - lr * (g + weight_decay * p) for every parameter.

    Parameters missing from grads take g = 0. BN shifts and the Ring target R
    are not decayed; R moves only when grad_ring_target is given, with step
    size lr * ring_target_lr_scale.
    """
    for name, value in net.params.items():
        grad = grads.get(name)
        if grad is not None and grad.shape != value.shape:
            raise ShapeError(f"gradient for {name} has shape {grad.shape}, expected {value.shape}")
        decay = 0.0 if name.endswith(NO_DECAY_SUFFIXES) else weight_decay
        if grad is None:
            if decay == 0.0:
                continue
            net.params[name] = value - lr * (decay * value)
        else:
            net.params[name] = value - lr * (grad + decay * value)
    if grad_ring_target is not None:
        net.ring_target = net.ring_target - lr * ring_target_lr_scale * grad_ring_target
    return net


def plateau_scheduler_step(
    history: Sequence[float],
    current_lr: float,
    patience: int,
    stop_threshold: float = 1e-5,
    min_delta: float = 1e-4,
) -> Tuple[float, bool]:
    """
    Halve the learning rate when validation loss has stalled.

    history holds validation losses since the last reduction. The rate is
    halved when the best of the last `patience` values does not beat the best
    earlier value by more than min_delta. Returns (lr, stop) with stop set
    once lr falls below stop_threshold.
    """
    if patience < 1:
        raise ValueError(f"patience must be >= 1, got {patience}")
    lr = current_lr
    if len(history) > patience:
        earlier_best = min(history[:-patience])
        recent_best = min(history[-patience:])
        if not recent_best < earlier_best - min_delta:
            lr = current_lr / 2.0
    return lr, lr < stop_threshold


class PlateauScheduler:
    """Stateful wrapper around plateau_scheduler_step."""

    def __init__(self, lr: float, patience: int, stop_threshold: float = 1e-5, min_delta: float = 1e-4):
        self.lr = lr
        self.patience = patience
        self.stop_threshold = stop_threshold
        self.min_delta = min_delta
        self.history: List[float] = []
        self.reductions = 0

    def step(self, validation_loss: float) -> Tuple[float, bool]:
        self.history.append(float(validation_loss))
        lr, stop = plateau_scheduler_step(
            self.history, self.lr, self.patience, self.stop_threshold, self.min_delta
        )
        if lr != self.lr:
            logger.info("Validation loss stalled; learning rate %.3g -> %.3g", self.lr, lr)
            self.reductions += 1
            self.history = [self.history[-1]]
        self.lr = lr
        return lr, stop

    def state_dict(self) -> Dict:
        return {"lr": self.lr, "history": list(self.history), "reductions": self.reductions}

    def load_state_dict(self, state: Dict) -> None:
        self.lr = float(state["lr"])
        self.history = [float(v) for v in state["history"]]
        self.reductions = int(state["reductions"])


@dataclass
class SegmentBatch:
    """B same-length segments (B x T x D) with their speaker labels."""

    segments: np.ndarray
    labels: np.ndarray
    utt_ids: List[str]


def sample_batch(corpus: Corpus, rng: RngStream, tc: TrainConfig) -> SegmentBatch:
    """
    Speaker-balanced batch: speakers_per_batch distinct speakers, one shared
    segment length uniform in [frames_min, frames_max], and
    segments_per_speaker uniformly placed slices per speaker.
    """
    if corpus.n_speakers < tc.speakers_per_batch:
        raise ValueError(
            f"corpus has {corpus.n_speakers} speakers, batch needs {tc.speakers_per_batch}"
        )
    gen = rng.generator
    speakers = gen.choice(corpus.n_speakers, size=tc.speakers_per_batch, replace=False)
    length = int(gen.integers(tc.frames_min, tc.frames_max + 1))
    groups = corpus.by_speaker()

    segments, labels, utt_ids = [], [], []
    for speaker in speakers:
        candidates = [u for u in groups[int(speaker)] if u.n_frames >= length]
        if not candidates:
            raise ValueError(f"speaker {int(speaker)} has no utterance with {length} frames")
        for _ in range(tc.segments_per_speaker):
            utt = candidates[int(gen.integers(len(candidates)))]
            start = int(gen.integers(utt.n_frames - length + 1))
            segments.append(utt.frames[start : start + length])
            labels.append(int(speaker))
            utt_ids.append(utt.utt_id)
    return SegmentBatch(np.stack(segments), np.array(labels, dtype=np.int64), utt_ids)


def build_net(
    network: NetworkConfig, loss: LossConfig, n_classes: int, seed: int
) -> EmbeddingNet:
    """Initialize a network from the seed's init stream; ge2e has no output layer."""
    return EmbeddingNet.initialize(
        network,
        RngStream(seed, "init"),
        n_classes=0 if loss.kind == "ge2e" else n_classes,
        ring_target=loss.ring_target_init,
    )


@dataclass
class TrainResult:
    steps: int
    final_lr: float
    stop_reason: str
    log: pd.DataFrame
    validation_losses: List[Tuple[int, float]] = field(default_factory=list)


class Trainer:
    """Owns the network during training: sample, forward, loss, backward, SGD."""

    def __init__(
        self,
        net: EmbeddingNet,
        loss_config: LossConfig,
        train_config: TrainConfig,
        train_corpus: Corpus,
        validation_corpus: Optional[Corpus],
        seed: int,
        output_dir: Optional[Path] = None,
        digest: str = "",
    ):
        if loss_config.kind == "ge2e" and train_config.segments_per_speaker < 2:
            raise ValueError("ge2e training needs segments_per_speaker >= 2")
        if train_config.frames_min < net.config.min_frames:
            raise ValueError(
                f"frames_min {train_config.frames_min} is below the network's minimum "
                f"segment length {net.config.min_frames}"
            )
        self.net = net
        self.loss_config = loss_config.for_training(train_config.max_steps)
        self.train_config = train_config
        self.train_corpus = train_corpus
        self.n_classes = train_corpus.n_speakers
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.digest = digest
        self.sampler = RngStream(seed, "sampler")
        self.scheduler = PlateauScheduler(
            train_config.learning_rate,
            train_config.lr_halving_patience,
            train_config.lr_stop_threshold,
            train_config.min_delta,
        )
        self.step = 0
        self.rows: List[Dict[str, float]] = []
        self.validation_losses: List[Tuple[int, float]] = []
        self._validation = self._validation_batch(validation_corpus, seed)

    def _validation_batch(self, corpus: Optional[Corpus], seed: int) -> Optional[SegmentBatch]:
        """Fixed crops of every validation utterance, drawn once."""
        if corpus is None or len(corpus) == 0:
            return None
        length = min(self.train_config.frames_max, min(u.n_frames for u in corpus.utterances))
        if length < self.net.config.min_frames:
            raise ValueError(f"validation utterances are shorter than {self.net.config.min_frames} frames")
        rng = RngStream(seed, "validation")
        segments = []
        for utt in corpus.utterances:
            start = int(rng.generator.integers(utt.n_frames - length + 1))
            segments.append(utt.frames[start : start + length])
        return SegmentBatch(
            np.stack(segments),
            np.array([u.speaker for u in corpus.utterances], dtype=np.int64),
            [u.utt_id for u in corpus.utterances],
        )

    @property
    def lr(self) -> float:
        return self.scheduler.lr

    def train_step(self) -> Dict[str, float]:
        batch = sample_batch(self.train_corpus, self.sampler, self.train_config)
        forward = net_forward(self.net, batch.segments, mode="train")
        output = total_loss(
            Batch(forward.feature, batch.labels, self.n_classes),
            self.net.output_weights,
            self.loss_config,
            step=self.step,
            ring_target=self.net.ring_target,
        )
        grads = net_backward(forward.cache, output.grad_features)
        if output.grad_weights is not None:
            grads["output.weight"] = output.grad_weights
        lr = self.scheduler.lr
        sgd_apply(
            self.net,
            grads,
            lr,
            self.train_config.weight_decay,
            grad_ring_target=output.grad_ring_target if self.loss_config.ring_weight > 0 else None,
            ring_target_lr_scale=self.loss_config.ring_target_lr_scale,
        )
        self.step += 1
        row = {
            "step": self.step,
            "primary_loss": output.primary_loss,
            "ring_loss": output.ring_loss,
            "mhe_loss": output.mhe_loss,
            "lambda": output.lam,
            "lr": lr,
            "feature_norm_mean": output.diagnostics["feature_norm_mean"],
        }
        self.rows.append(row)
        return row

    def validation_loss(self) -> Optional[float]:
        """Eval-mode loss on the fixed validation crops."""
        if self._validation is None:
            return None
        forward = net_forward(self.net, self._validation.segments, mode="eval")
        output = total_loss(
            Batch(forward.feature, self._validation.labels, self.n_classes),
            self.net.output_weights,
            self.loss_config,
            step=self.step,
            ring_target=self.net.ring_target,
        )
        return output.loss

    def state(self) -> TrainState:
        return TrainState(
            net=self.net,
            step=self.step,
            lr=self.scheduler.lr,
            scheduler=self.scheduler.state_dict(),
            rng={"sampler": self.sampler.state_dict()},
        )

    def restore(self, state: TrainState) -> None:
        self.net = state.net
        self.step = state.step
        self.scheduler.load_state_dict(state.scheduler)
        self.sampler.load_state_dict(state.rng["sampler"])

    @property
    def checkpoint_dir(self) -> Optional[Path]:
        return self.output_dir / "checkpoints" if self.output_dir is not None else None

    @property
    def log_path(self) -> Optional[Path]:
        return self.output_dir / "loss_log.csv" if self.output_dir is not None else None

    def save_checkpoint(self, name: Optional[str] = None) -> Optional[Path]:
        if self.checkpoint_dir is None:
            return None
        filename = name or f"step-{self.step:06d}.ckpt"
        return checkpoint_save(self.state(), self.checkpoint_dir / filename, self.digest)

    def resume(self, checkpoint_path: Path) -> None:
        """Restore state from a checkpoint and keep the log rows up to its step."""
        self.restore(checkpoint_load(checkpoint_path, self.net, self.digest or None))
        self.rows = []
        if self.log_path is not None and self.log_path.exists():
            previous = read_csv(self.log_path)
            previous = previous[previous["step"] <= self.step]
            self.rows = previous.to_dict("records")
            for row in self.rows:
                row["step"] = int(row["step"])
        logger.info("Resumed training at step %d (lr %.3g)", self.step, self.lr)

    def loss_log(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=LOSS_LOG_COLUMNS)

    def run(self) -> TrainResult:
        tc = self.train_config
        stop_reason = "max_steps"
        while self.step < tc.max_steps:
            row = self.train_step()
            if not np.isfinite(row["primary_loss"]):
                stop_reason = "diverged"
                logger.warning("Loss is not finite at step %d; stopping", self.step)
                break
            stop = False
            if self.step % tc.eval_interval == 0:
                val = self.validation_loss()
                if val is not None:
                    self.validation_losses.append((self.step, val))
                    _, stop = self.scheduler.step(val)
                    logger.info(
                        "step %d: train loss %.4f, validation loss %.4f, lr %.3g",
                        self.step,
                        row["primary_loss"],
                        val,
                        self.scheduler.lr,
                    )
            if self.step % tc.checkpoint_interval == 0:
                self.save_checkpoint()
            if stop:
                stop_reason = "lr_below_threshold"
                break

        self.save_checkpoint("final.ckpt")
        log = self.loss_log()
        if self.log_path is not None:
            write_csv(log, self.log_path, self.digest)
        return TrainResult(
            steps=self.step,
            final_lr=self.scheduler.lr,
            stop_reason=stop_reason,
            log=log,
            validation_losses=list(self.validation_losses),
        )
