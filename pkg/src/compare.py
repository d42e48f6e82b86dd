"""
A/B comparison harness: run two configs through gen-data, train, evaluate
and analyze on shared data seeds and report per-seed deltas (B - A).
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from .config import ExperimentConfig
from .evaluate import analyze_model, evaluate_model
from .evaluation import write_csv, write_json
from .prepare import generate_data
from .train import train_model

logger = logging.getLogger(__name__)
console = Console()

COMPARE_DIR = "compare"
COMPARED_METRICS = [
    "eer",
    "min_dcf_sre08",
    "min_dcf_sre10",
    "feature_norm_variance",
    "weight_distance_mean",
    "weight_distance_variance",
]


def run_experiment(config: ExperimentConfig, output_dir: Path) -> Dict[str, float]:
    """gen-data -> train -> evaluate -> analyze for one config; returns the compared metrics."""
    generate_data(config, output_dir)
    train_model(config, output_dir)
    report = evaluate_model(config, output_dir)
    geometry = analyze_model(config, output_dir)
    metrics = {"eer": report.eer}
    for name, value in report.min_dcf.items():
        metrics[f"min_dcf_{name}"] = value
    metrics.update(geometry)
    return metrics


def compare_configs(
    config_a: ExperimentConfig,
    config_b: ExperimentConfig,
    seeds: Sequence[int],
    output_dir: Path,
    digest: str = "",
) -> pd.DataFrame:
    """Per-seed metrics of A and B with deltas; writes compare/report.{json,csv}."""
    if config_a.data != config_b.data:
        logger.warning("A and B use different data settings; data seeds are shared but corpora differ")
    compare_dir = Path(output_dir) / COMPARE_DIR
    rows: List[Dict[str, float]] = []
    for seed in seeds:
        row: Dict[str, float] = {"seed": seed}
        for label, config in (("a", config_a), ("b", config_b)):
            run_config = config.model_copy(update={"seed": seed})
            console.print(f"[blue]Seed {seed}, config {label.upper()} ({run_config.loss.kind})")
            metrics = run_experiment(run_config, compare_dir / f"seed-{seed}" / label)
            for key in COMPARED_METRICS:
                row[f"{label}_{key}"] = metrics.get(key, np.nan)
        for key in COMPARED_METRICS:
            row[f"delta_{key}"] = row[f"b_{key}"] - row[f"a_{key}"]
        rows.append(row)

    frame = pd.DataFrame(rows)
    summary = summarize(frame)
    write_csv(frame, compare_dir / "report.csv", digest)
    write_json(
        {
            "seeds": list(seeds),
            "a": {"loss": config_a.loss.model_dump(mode="json"), "digest": config_a.digest()},
            "b": {"loss": config_b.loss.model_dump(mode="json"), "digest": config_b.digest()},
            "per_seed": frame.to_dict("records"),
            "summary": summary,
        },
        compare_dir / "report.json",
        digest,
    )
    _print_summary(summary, len(seeds))
    return frame


def summarize(frame: pd.DataFrame) -> Dict[str, Dict[str, Optional[float]]]:
    """Medians of A, B and the delta, and the number of seeds where B is strictly lower."""
    summary = {}
    for key in COMPARED_METRICS:
        a, b = frame[f"a_{key}"], frame[f"b_{key}"]
        if a.isna().all() or b.isna().all():
            continue
        summary[key] = {
            "median_a": float(a.median()),
            "median_b": float(b.median()),
            "median_delta": float((b - a).median()),
            "b_lower": int((b < a).sum()),
        }
    return summary


def _print_summary(summary: Dict[str, Dict[str, Optional[float]]], n_seeds: int) -> None:
    table = Table(title=f"A/B comparison over {n_seeds} seeds")
    table.add_column("Metric", style="cyan")
    table.add_column("median A", justify="right")
    table.add_column("median B", justify="right")
    table.add_column("median B - A", justify="right")
    table.add_column("B lower", justify="right")
    for key, stats in summary.items():
        table.add_row(
            key,
            f"{stats['median_a']:.4f}",
            f"{stats['median_b']:.4f}",
            f"{stats['median_delta']:+.4f}",
            f"{stats['b_lower']}/{n_seeds}",
        )
    console.print(table)
