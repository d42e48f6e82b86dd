"""
Training pipeline for the speaker-embedding network.
"""

import logging
import os
from pathlib import Path
from typing import Optional

import mlflow
from rich.console import Console
from rich.table import Table

from .config import ExperimentConfig, TrackingConfig, flatten_config, save_config
from .models import TrainResult, Trainer, build_net
from .prepare import load_splits

logger = logging.getLogger(__name__)
console = Console()

TRAIN_DIR = "train"
FINAL_CHECKPOINT = "train/checkpoints/final.ckpt"


def setup_mlflow(tracking: TrackingConfig) -> bool:
    """Configure MLflow tracking; returns False when tracking is off or unavailable."""
    tracking_uri = tracking.tracking_uri or os.getenv("MLFLOW_TRACKING_URI")
    if not (tracking.enabled or tracking_uri):
        return False
    experiment_name = os.getenv("MLFLOW_EXPERIMENT_NAME", tracking.experiment_name)

    try:
        if tracking_uri:
            mlflow.set_tracking_uri(tracking_uri)
        if mlflow.get_experiment_by_name(experiment_name) is None:
            mlflow.create_experiment(experiment_name)
        mlflow.set_experiment(experiment_name)
    except Exception as e:
        console.print(f"[yellow]MLflow setup warning: {e}")
        console.print("[yellow]Continuing without MLflow tracking...")
        return False
    return True


def _log_to_mlflow(config: ExperimentConfig, result: TrainResult, log_path: Optional[Path]) -> None:
    with mlflow.start_run():
        mlflow.log_params(flatten_config(config))
        mlflow.log_param("config_digest", config.digest())
        for row in result.log.to_dict("records"):
            step = int(row["step"])
            for key in ("primary_loss", "ring_loss", "mhe_loss", "lambda", "lr", "feature_norm_mean"):
                mlflow.log_metric(key, float(row[key]), step=step)
        for step, value in result.validation_losses:
            mlflow.log_metric("validation_loss", value, step=step)
        if log_path is not None and log_path.exists():
            mlflow.log_artifact(str(log_path))


def train_model(
    config: ExperimentConfig,
    output_dir: Optional[Path] = None,
    resume: Optional[Path] = None,
) -> TrainResult:
    """Train on the generated corpus and write checkpoints plus the loss log."""
    output_dir = Path(output_dir) if output_dir is not None else config.resolved_output_dir()
    splits = load_splits(config, output_dir)
    console.print(
        f"[green]Training {config.loss.kind} on {splits.train.n_speakers} speakers "
        f"({len(splits.train)} utterances, {len(splits.validation)} held out for validation)"
    )

    net = build_net(config.network, config.loss, splits.train.n_speakers, config.seed)
    trainer = Trainer(
        net,
        config.loss,
        config.train,
        splits.train,
        splits.validation,
        seed=config.seed,
        output_dir=output_dir / TRAIN_DIR,
        digest=config.digest(),
    )
    if resume is not None:
        trainer.resume(Path(resume))
    save_config(config, output_dir / TRAIN_DIR / "config.json")

    result = trainer.run()

    if setup_mlflow(config.tracking):
        _log_to_mlflow(config, result, trainer.log_path)

    table = Table(title="Training summary")
    table.add_column("Metric")
    table.add_column("Value", justify="right")
    table.add_row("steps", str(result.steps))
    table.add_row("stop reason", result.stop_reason)
    table.add_row("final lr", f"{result.final_lr:.3g}")
    if len(result.log):
        last = result.log.iloc[-1]
        table.add_row("primary loss", f"{last['primary_loss']:.4f}")
        table.add_row("feature norm mean", f"{last['feature_norm_mean']:.4f}")
    if result.validation_losses:
        table.add_row("validation loss", f"{result.validation_losses[-1][1]:.4f}")
    console.print(table)
    console.print(f"[green]Checkpoint saved: {output_dir / FINAL_CHECKPOINT}")
    return result
