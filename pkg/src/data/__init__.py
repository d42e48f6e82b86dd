# Synthetic corpus, corpus files and trial lists
from .corpus import (
    Corpus,
    CorpusSpec,
    CorpusSplits,
    DataConfig,
    Utterance,
    generate_corpus,
    split_corpus,
    utterance_id,
)
from .corpus_io import read_corpus, read_corpus_digest, write_corpus
from .trials import TrialSet, generate_trials, read_trials, write_trials

__all__ = [
    "Corpus",
    "CorpusSpec",
    "CorpusSplits",
    "DataConfig",
    "TrialSet",
    "Utterance",
    "generate_corpus",
    "generate_trials",
    "read_corpus",
    "read_corpus_digest",
    "read_trials",
    "split_corpus",
    "utterance_id",
    "write_corpus",
    "write_trials",
]
