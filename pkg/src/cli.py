"""
Command-line front end.

    spkmargin gen-data | train | evaluate | analyze | gradcheck | compare

Every command reads an optional JSON config plus `--set key=value`
overrides. Invalid configs exit with status 2, missing inputs and failed
checks with status 1.
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence

import click
import typer
from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler

from .config import ExperimentConfig, load_config, seeds_from_text
from .errors import ConfigError

console = Console()
logger = logging.getLogger("src")

app = typer.Typer(
    name="spkmargin",
    help="Large-margin softmax speaker embeddings on synthetic data.",
    add_completion=False,
    no_args_is_help=True,
)

CONFIG_OPTION = typer.Option(None, "--config", "-c", help="JSON experiment config")
SET_OPTION = typer.Option([], "--set", "-s", help="Override, e.g. loss.margins.m3=0.2")
OUTPUT_OPTION = typer.Option(None, "--output-dir", "-o", help="Override output_dir")

EXIT_FAILURE = 1
EXIT_CONFIG = 2


@app.callback()
def _configure(verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging")) -> None:
    load_dotenv()
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def _load(config_path: Optional[Path], overrides: Sequence[str], output_dir: Optional[Path]) -> ExperimentConfig:
    try:
        extra = list(overrides)
        if output_dir is not None:
            extra.append(f"output_dir={output_dir}")
        return load_config(config_path, extra)
    except ConfigError as e:
        console.print(f"[red]Invalid config: {e}")
        raise typer.Exit(EXIT_CONFIG)


def _fail(error: Exception) -> None:
    console.print(f"[red]{type(error).__name__}: {error}")
    raise typer.Exit(EXIT_FAILURE)


@app.command("gen-data")
def gen_data(
    config: Optional[Path] = CONFIG_OPTION,
    set_: List[str] = SET_OPTION,
    output_dir: Optional[Path] = OUTPUT_OPTION,
) -> None:
    """Generate the synthetic corpus and trial list."""
    from .prepare import generate_data

    experiment = _load(config, set_, output_dir)
    try:
        generate_data(experiment)
    except (ValueError, FileNotFoundError) as e:
        _fail(e)


@app.command()
def train(
    config: Optional[Path] = CONFIG_OPTION,
    set_: List[str] = SET_OPTION,
    output_dir: Optional[Path] = OUTPUT_OPTION,
    resume: Optional[Path] = typer.Option(None, "--resume", help="Checkpoint to resume from"),
) -> None:
    """Train the embedding network; writes checkpoints and the loss log."""
    from .train import train_model

    experiment = _load(config, set_, output_dir)
    try:
        train_model(experiment, resume=resume)
    except ConfigError as e:
        console.print(f"[red]Invalid config: {e}")
        raise typer.Exit(EXIT_CONFIG)
    except (ValueError, FileNotFoundError) as e:
        _fail(e)


@app.command()
def evaluate(
    config: Optional[Path] = CONFIG_OPTION,
    set_: List[str] = SET_OPTION,
    output_dir: Optional[Path] = OUTPUT_OPTION,
) -> None:
    """Score the trial list and report EER and minDCF."""
    from .evaluate import evaluate_model

    experiment = _load(config, set_, output_dir)
    try:
        evaluate_model(experiment)
    except (ValueError, FileNotFoundError) as e:
        _fail(e)


@app.command()
def analyze(
    config: Optional[Path] = CONFIG_OPTION,
    set_: List[str] = SET_OPTION,
    output_dir: Optional[Path] = OUTPUT_OPTION,
) -> None:
    """Feature-norm and weight-distance distributions, angle-function curve."""
    from .evaluate import analyze_model

    experiment = _load(config, set_, output_dir)
    try:
        analyze_model(experiment)
    except (ValueError, FileNotFoundError) as e:
        _fail(e)


@app.command()
def gradcheck(
    config: Optional[Path] = CONFIG_OPTION,
    set_: List[str] = SET_OPTION,
    output_dir: Optional[Path] = OUTPUT_OPTION,
    instances: int = typer.Option(100, "--instances", "-n", min=1, help="Random instances per case"),
) -> None:
    """Finite-difference checks of every loss and the full network."""
    from .gradcheck import run_gradcheck_command

    experiment = _load(config, set_, output_dir)
    passed = run_gradcheck_command(
        instances=instances,
        seed=experiment.seed,
        output_dir=experiment.resolved_output_dir(),
        digest=experiment.digest(),
    )
    if not passed:
        raise typer.Exit(EXIT_FAILURE)


@app.command()
def compare(
    config_a: Optional[Path] = typer.Option(None, "--config-a", help="Config A (baseline)"),
    config_b: Optional[Path] = typer.Option(None, "--config-b", help="Config B"),
    set_a: List[str] = typer.Option([], "--set-a", help="Override for A"),
    set_b: List[str] = typer.Option([], "--set-b", help="Override for B"),
    set_: List[str] = SET_OPTION,
    output_dir: Optional[Path] = OUTPUT_OPTION,
    seeds: str = typer.Option("0,1,2,3,4", "--seeds", help="Comma-separated data seeds"),
) -> None:
    """Run configs A and B on shared seeds and report metric deltas."""
    from .compare import compare_configs

    experiment_a = _load(config_a, list(set_) + list(set_a), output_dir)
    experiment_b = _load(config_b, list(set_) + list(set_b), output_dir)
    try:
        seed_list = seeds_from_text(seeds)
    except ConfigError as e:
        console.print(f"[red]Invalid config: {e}")
        raise typer.Exit(EXIT_CONFIG)
    try:
        compare_configs(
            experiment_a,
            experiment_b,
            seed_list,
            experiment_a.resolved_output_dir(),
            digest=f"{experiment_a.digest()[:32]}{experiment_b.digest()[:32]}",
        )
    except (ValueError, FileNotFoundError) as e:
        _fail(e)


def run_command(argv: Sequence[str]) -> int:
    """Run one command and return its exit status."""
    try:
        result = app(args=list(argv), standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.exceptions.Abort:
        return EXIT_FAILURE
    return result if isinstance(result, int) else 0


def main() -> None:
    app()


if __name__ == "__main__":
    main()
