"""
Experiment configuration: one JSON file, dotted `--set` overrides, and a
content digest stamped into every artifact.
"""

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .data.corpus import DataConfig
from .errors import ConfigError
from .evaluation.metrics import DEFAULT_DCF, DcfParams
from .losses import LossConfig, loss_preset
from .models.network import NetworkConfig
from .models.trainer import TrainConfig

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "SPKMARGIN_OUTPUT_ROOT"
DEFAULT_OUTPUT_DIR = "runs/default"


class EvalConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    dcf: Dict[str, DcfParams] = Field(default_factory=lambda: dict(DEFAULT_DCF))
    normalize_dcf: bool = True
    histogram_bins: int = Field(20, ge=1)

    def dcf_params(self) -> Dict[str, DcfParams]:
        return {
            name: params.model_copy(update={"normalize": self.normalize_dcf})
            for name, params in self.dcf.items()
        }


class TrackingConfig(BaseModel):
    """Optional MLflow tracking; never changes any output file."""

    model_config = ConfigDict(frozen=True)

    enabled: bool = False
    experiment_name: str = "spkmargin"
    tracking_uri: Optional[str] = None


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = Field(0, ge=0)
    output_dir: str = DEFAULT_OUTPUT_DIR
    data: DataConfig = Field(default_factory=DataConfig)
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    tracking: TrackingConfig = Field(default_factory=TrackingConfig)

    @model_validator(mode="after")
    def _check_consistency(self) -> "ExperimentConfig":
        if self.network.input_dim != self.data.feature_dim:
            raise ValueError(
                f"network.input_dim {self.network.input_dim} differs from data.feature_dim {self.data.feature_dim}"
            )
        if self.train.speakers_per_batch > self.data.n_train_speakers:
            raise ValueError(
                f"train.speakers_per_batch {self.train.speakers_per_batch} exceeds "
                f"data.n_train_speakers {self.data.n_train_speakers}"
            )
        if self.train.frames_max > self.data.frames_min:
            raise ValueError(
                f"train.frames_max {self.train.frames_max} exceeds the shortest utterance "
                f"(data.frames_min {self.data.frames_min})"
            )
        if self.train.frames_min < self.network.min_frames:
            raise ValueError(
                f"train.frames_min {self.train.frames_min} is below the network's minimum "
                f"segment length {self.network.min_frames}"
            )
        if self.loss.kind == "ge2e" and self.train.segments_per_speaker < 2:
            raise ValueError("ge2e needs train.segments_per_speaker >= 2")
        return self

    def digest(self) -> str:
        """SHA-256 of the canonical config, excluding where outputs go and tracking."""
        return _digest(self.model_dump(mode="json", exclude={"output_dir", "tracking"}))

    def data_digest(self) -> str:
        """Digest of the settings that determine the corpus and trials."""
        return _digest({"seed": self.seed, "data": self.data.model_dump(mode="json")})

    def resolved_output_dir(self) -> Path:
        path = Path(self.output_dir)
        root = os.getenv(OUTPUT_ROOT_ENV)
        if root and not path.is_absolute():
            return Path(root) / path
        return path


def _digest(payload: Dict[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Apply `a.b.c=value` overrides; values are JSON when they parse, else strings."""
    result = json.loads(json.dumps(raw))
    for override in overrides:
        if "=" not in override:
            raise ConfigError(f"override {override!r} is not of the form key=value")
        key, text = override.split("=", 1)
        parts = key.strip().split(".")
        if not all(parts):
            raise ConfigError(f"override key {key!r} is malformed")
        node = result
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"override {key!r} descends into non-object {part!r}")
            node = child
        node[parts[-1]] = _parse_value(text)
    return result


def _expand_loss_preset(raw: Dict[str, Any]) -> Dict[str, Any]:
    loss = raw.get("loss")
    if not isinstance(loss, dict) or "preset" not in loss:
        return raw
    extra = {k: v for k, v in loss.items() if k != "preset"}
    try:
        base = loss_preset(str(loss["preset"])).model_dump(mode="json", exclude_unset=True)
    except ValueError as e:
        raise ConfigError(f"loss.preset: {e}") from e
    raw = dict(raw)
    raw["loss"] = {**base, **extra}
    return raw


def format_validation_error(error: ValidationError) -> str:
    messages = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "config"
        messages.append(f"{location}: {item['msg']}")
    return "; ".join(messages)


def load_config(path: Optional[Path] = None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Read a JSON config (or start from defaults) and apply overrides."""
    raw: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"{path} must hold a JSON object")
    # A preset chosen on the command line replaces the file's loss section.
    if any(o.split("=", 1)[0].strip() == "loss.preset" for o in overrides):
        raw.pop("loss", None)
    raw = _expand_loss_preset(apply_overrides(raw, overrides))
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(format_validation_error(e)) from e
    logger.debug("Loaded config with digest %s", config.digest())
    return config


def save_config(config: ExperimentConfig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    return path


def flatten_config(config: ExperimentConfig) -> Dict[str, str]:
    """Dotted key -> string value, for experiment trackers."""
    flat: Dict[str, str] = {}

    def walk(prefix: str, node: Any) -> None:
        if isinstance(node, dict):
            for key, value in node.items():
                walk(f"{prefix}.{key}" if prefix else str(key), value)
        else:
            flat[prefix] = json.dumps(node) if isinstance(node, (list, dict)) else str(node)

    walk("", config.model_dump(mode="json"))
    return flat


def seeds_from_text(text: str) -> List[int]:
    try:
        seeds = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigError(f"seeds must be a comma-separated list of integers, got {text!r}") from e
    if not seeds:
        raise ConfigError("at least one seed is required")
    return seeds
