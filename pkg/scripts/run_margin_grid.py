#!/usr/bin/env python3
"""
Margin grid sweep.
Runs every loss preset of the comparison grid on the same seed and collects
EER, minDCF and embedding-geometry statistics into one table.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd
from rich.console import Console
from rich.table import Table

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.compare import run_experiment  # noqa: E402
from src.config import load_config  # noqa: E402
from src.evaluation import write_csv  # noqa: E402
from src.losses import LOSS_PRESETS  # noqa: E402

console = Console()

DEFAULT_PRESETS = [name for name in LOSS_PRESETS if name != "ge2e"]


def run_grid(
    presets: List[str],
    config_path: Optional[Path],
    overrides: List[str],
    output_dir: Path,
) -> pd.DataFrame:
    """Train and evaluate one run per preset; returns one row per preset."""
    rows = []
    for preset in presets:
        config = load_config(config_path, overrides + [f"loss.preset={preset}"])
        console.print(f"[blue]Running preset {preset}")
        metrics = run_experiment(config, output_dir / preset)
        rows.append({"preset": preset, **metrics})
    return pd.DataFrame(rows)


def main():
    parser = argparse.ArgumentParser(description="Sweep the margin grid presets")
    parser.add_argument("--config", type=Path, default=None, help="Base JSON config")
    parser.add_argument("--set", dest="overrides", action="append", default=[], help="Config override")
    parser.add_argument(
        "--presets",
        nargs="+",
        default=DEFAULT_PRESETS,
        choices=sorted(LOSS_PRESETS),
        help="Presets to run",
    )
    parser.add_argument("--output-dir", type=Path, default=Path("runs/margin-grid"))
    args = parser.parse_args()

    frame = run_grid(args.presets, args.config, args.overrides, args.output_dir)
    path = write_csv(frame, args.output_dir / "grid.csv")

    table = Table(title="Margin grid")
    table.add_column("Preset", style="cyan")
    table.add_column("EER (%)", justify="right")
    table.add_column("minDCF08", justify="right")
    table.add_column("minDCF10", justify="right")
    for row in frame.to_dict("records"):
        table.add_row(
            row["preset"],
            f"{100 * row['eer']:.2f}",
            f"{row.get('min_dcf_sre08', float('nan')):.4f}",
            f"{row.get('min_dcf_sre10', float('nan')):.4f}",
        )
    console.print(table)
    console.print(f"[green]Grid saved: {path}")


if __name__ == "__main__":
    main()
