"""
Evaluation and analysis of a trained embedding network.

evaluate: cosine-score the held-out trials and report EER and minDCF.
analyze: feature-norm and weight-distance distributions plus the angle
function of the configured margins.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from .config import ExperimentConfig
from .data import read_trials
from .evaluation import compute_metrics, operating_points, write_csv, write_json
from .evaluation.metrics import MetricsReport
from .evaluation.scoring import score_trials
from .losses import margin_curve
from .models import EmbeddingNet, checkpoint_load
from .monitoring import embedding_norm_stats, weight_distance_stats
from .prepare import TRIALS_FILE, load_splits
from .train import FINAL_CHECKPOINT

logger = logging.getLogger(__name__)
console = Console()

EVAL_DIR = "eval"
ANALYSIS_DIR = "analysis"
CURVE_POINTS = 181


def load_trained_net(config: ExperimentConfig, output_dir: Path, n_classes: int) -> EmbeddingNet:
    """Final checkpoint of this config's training run."""
    path = Path(output_dir) / FINAL_CHECKPOINT
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path} (run: spkmargin train)")
    template = EmbeddingNet(
        config.network,
        n_classes=0 if config.loss.kind == "ge2e" else n_classes,
        ring_target=config.loss.ring_target_init,
    )
    return checkpoint_load(path, template, expected_digest=config.digest()).net


def evaluate_model(config: ExperimentConfig, output_dir: Optional[Path] = None) -> MetricsReport:
    """Score the trial list and write metrics.json, operating_points.csv and scores.csv."""
    output_dir = Path(output_dir) if output_dir is not None else config.resolved_output_dir()
    splits = load_splits(config, output_dir)
    trials_path = output_dir / TRIALS_FILE
    if not trials_path.exists():
        raise FileNotFoundError(f"trials not found: {trials_path} (run: spkmargin gen-data)")
    trials = read_trials(trials_path)
    net = load_trained_net(config, output_dir, splits.train.n_speakers)

    console.print(f"[green]Scoring {len(trials)} trials")
    scored = score_trials(net, splits.test, trials)
    report = compute_metrics(scored.scores, scored.target, config.eval.dcf_params())

    digest = config.digest()
    eval_dir = output_dir / EVAL_DIR
    write_json(report.to_dict(), eval_dir / "metrics.json", digest)
    write_csv(operating_points(scored.scores, scored.target).to_frame(), eval_dir / "operating_points.csv", digest)
    write_csv(scored.to_frame(), eval_dir / "scores.csv", digest)

    table = Table(title="Verification metrics")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", justify="right")
    table.add_row("EER (%)", f"{100 * report.eer:.2f}")
    for name, value in report.min_dcf.items():
        table.add_row(f"minDCF {name}", f"{value:.4f}")
    table.add_row("trials", f"{report.n_target} target / {report.n_nontarget} nontarget")
    console.print(table)
    return report


def analyze_model(config: ExperimentConfig, output_dir: Optional[Path] = None) -> Dict[str, Any]:
    """Write the norm and weight-distance distributions and the angle-function curve."""
    output_dir = Path(output_dir) if output_dir is not None else config.resolved_output_dir()
    splits = load_splits(config, output_dir)
    net = load_trained_net(config, output_dir, splits.train.n_speakers)
    bins = config.eval.histogram_bins
    digest = config.digest()
    analysis_dir = output_dir / ANALYSIS_DIR

    summary: Dict[str, Any] = {}
    norms = embedding_norm_stats(net, splits.test, bins)
    write_json(norms.to_dict(), analysis_dir / "feature_norms.json", digest)
    write_csv(norms.histogram_frame(), analysis_dir / "feature_norms_histogram.csv", digest)
    summary["feature_norm_mean"] = norms.mean
    summary["feature_norm_variance"] = norms.variance

    if net.output_weights is not None:
        distances = weight_distance_stats(net.output_weights, bins)
        write_json(distances.to_dict(), analysis_dir / "weight_distances.json", digest)
        write_csv(distances.histogram_frame(), analysis_dir / "weight_distances_histogram.csv", digest)
        summary["weight_distance_mean"] = distances.mean
        summary["weight_distance_variance"] = distances.variance
    else:
        logger.info("%s has no output-layer weights; skipping weight distances", config.loss.kind)

    thetas = np.linspace(0.0, np.pi, CURVE_POINTS)
    schedule = config.loss.schedule
    curve = pd.DataFrame(
        {
            "theta": thetas,
            "cos": np.cos(thetas),
            "psi": margin_curve(config.loss.margins, thetas),
            "psi_annealed_floor": margin_curve(config.loss.margins, thetas, schedule.lambda_floor),
        }
    )
    write_csv(curve, analysis_dir / "margin_curve.csv", digest)

    table = Table(title="Embedding geometry")
    table.add_column("Statistic", style="cyan")
    table.add_column("Value", justify="right")
    for key, value in summary.items():
        table.add_row(key, f"{value:.4f}")
    console.print(table)
    return summary
