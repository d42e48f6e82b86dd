"""
Synthetic data generation: corpus file plus the held-out trial list.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from rich.console import Console

from .config import ExperimentConfig
from .data import (
    Corpus,
    CorpusSplits,
    generate_corpus,
    generate_trials,
    read_corpus,
    read_corpus_digest,
    split_corpus,
    write_corpus,
    write_trials,
)
from .errors import ConfigError
from .numkit import RngStream

logger = logging.getLogger(__name__)
console = Console()

CORPUS_FILE = "data/corpus.bin"
TRIALS_FILE = "data/trials.txt"


@dataclass
class DataArtifacts:
    corpus_path: Path
    trials_path: Path
    n_utterances: int
    n_trials: int


def generate_data(config: ExperimentConfig, output_dir: Optional[Path] = None) -> DataArtifacts:
    """Generate the corpus and trials for config.seed and write them under output_dir/data."""
    output_dir = Path(output_dir) if output_dir is not None else config.resolved_output_dir()
    spec = config.data.corpus_spec(config.seed)
    console.print(
        f"[green]Generating corpus: {spec.n_speakers} speakers x {spec.utts_per_speaker} utterances, "
        f"dim {spec.feature_dim}"
    )
    corpus = generate_corpus(spec)
    splits = split_corpus(corpus, config.data)
    trials = generate_trials(
        splits.test,
        RngStream(config.seed, "trials"),
        config.data.n_target_trials,
        config.data.n_nontarget_trials,
    )

    digest = config.data_digest()
    corpus_path = write_corpus(corpus, output_dir / CORPUS_FILE, digest)
    trials_path = write_trials(trials, output_dir / TRIALS_FILE, digest)
    console.print(f"[green]Corpus saved: {corpus_path}")
    console.print(f"[green]Trials saved: {trials_path} ({trials.n_target} target, {trials.n_nontarget} nontarget)")
    return DataArtifacts(corpus_path, trials_path, len(corpus), len(trials))


def load_splits(config: ExperimentConfig, output_dir: Path) -> CorpusSplits:
    """Read the generated corpus and split it; the data digest must match the config."""
    corpus_path = Path(output_dir) / CORPUS_FILE
    if not corpus_path.exists():
        raise FileNotFoundError(f"corpus not found: {corpus_path} (run: spkmargin gen-data)")
    stored = read_corpus_digest(corpus_path)
    if stored and stored != config.data_digest():
        raise ConfigError(
            f"{corpus_path} was generated from different data settings "
            f"(digest {stored[:12]}, config {config.data_digest()[:12]})"
        )
    corpus: Corpus = read_corpus(corpus_path)
    return split_corpus(corpus, config.data)
