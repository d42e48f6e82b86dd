"""
Trial scoring with eval-mode embeddings.
"""

import logging
from typing import Dict, Iterable, Literal

import numpy as np

from ..data.corpus import Corpus
from ..data.trials import TrialSet
from ..errors import TrialError
from ..models.network import EmbeddingNet, net_forward

logger = logging.getLogger(__name__)

Output = Literal["embedding", "feature"]


def extract_vectors(
    net: EmbeddingNet, corpus: Corpus, utt_ids: Iterable[str], output: Output = "embedding"
) -> Dict[str, np.ndarray]:
    """Eval-mode embedding (or loss-input feature) of each full utterance."""
    vectors = {}
    for utt_id in utt_ids:
        if utt_id in vectors:
            continue
        if utt_id not in corpus:
            raise TrialError(f"utterance {utt_id!r} is not in the corpus")
        result = net_forward(net, corpus.get(utt_id).frames, mode="eval")
        vectors[utt_id] = result.embedding if output == "embedding" else result.feature
    return vectors


def score_trials(net: EmbeddingNet, corpus: Corpus, trials: TrialSet) -> TrialSet:
    """One cosine score per trial between enrollment and test embeddings."""
    missing = [u for u in dict.fromkeys(trials.enroll + trials.test) if u not in corpus]
    if missing:
        raise TrialError(f"{len(missing)} trial utterances are missing from the corpus, e.g. {missing[0]!r}")
    embeddings = extract_vectors(net, corpus, trials.enroll + trials.test)
    unit = {}
    for utt_id, vector in embeddings.items():
        norm = np.linalg.norm(vector)
        if norm <= 1e-12:
            raise TrialError(f"embedding of {utt_id!r} is zero; cosine score undefined")
        unit[utt_id] = vector / norm
    scores = np.array(
        [float(np.dot(unit[e], unit[t])) for e, t in zip(trials.enroll, trials.test)],
        dtype=np.float64,
    )
    logger.info("Scored %d trials over %d utterances", len(trials), len(embeddings))
    return trials.with_scores(np.clip(scores, -1.0, 1.0))
