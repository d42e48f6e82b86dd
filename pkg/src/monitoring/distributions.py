"""
Geometry monitors: the distribution of feature norms on a split and of the
pairwise squared distances between normalized output-layer weight columns.
"""

from dataclasses import dataclass
from typing import Dict

import numpy as np
import numpy.typing as npt
import pandas as pd
from scipy.spatial.distance import pdist

from ..data.corpus import Corpus
from ..errors import NumericError, ShapeError
from ..evaluation.scoring import extract_vectors
from ..models.network import EmbeddingNet

DEFAULT_BINS = 20


@dataclass
class DistributionStats:
    mean: float
    std: float
    variance: float
    count: int
    bin_edges: np.ndarray
    counts: np.ndarray

    def to_dict(self) -> Dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "variance": self.variance,
            "count": self.count,
            "bin_edges": self.bin_edges.tolist(),
            "counts": self.counts.tolist(),
        }

    def histogram_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"bin_low": self.bin_edges[:-1], "bin_high": self.bin_edges[1:], "count": self.counts}
        )


def distribution_stats(values: npt.ArrayLike, bins: int = DEFAULT_BINS) -> DistributionStats:
    """Mean, population std and a fixed-width histogram."""
    data = np.asarray(values, dtype=np.float64).ravel()
    if data.size == 0:
        raise NumericError("distribution of an empty sample")
    if not np.all(np.isfinite(data)):
        raise NumericError("distribution values must be finite")
    counts, edges = np.histogram(data, bins=bins)
    variance = float(np.var(data))
    return DistributionStats(
        mean=float(np.mean(data)),
        std=float(np.sqrt(variance)),
        variance=variance,
        count=int(data.size),
        bin_edges=edges,
        counts=counts.astype(np.int64),
    )


def vector_norm_stats(vectors: npt.ArrayLike, bins: int = DEFAULT_BINS) -> DistributionStats:
    matrix = np.asarray(vectors, dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeError(f"expected N x D vectors, got shape {matrix.shape}")
    return distribution_stats(np.linalg.norm(matrix, axis=1), bins)


def embedding_norm_stats(net: EmbeddingNet, corpus: Corpus, bins: int = DEFAULT_BINS) -> DistributionStats:
    """Norms of the loss-input feature x over every utterance of a split."""
    if len(corpus) == 0:
        raise NumericError("norm statistics need a non-empty split")
    features = extract_vectors(net, corpus, [u.utt_id for u in corpus.utterances], output="feature")
    return vector_norm_stats(np.stack(list(features.values())), bins)


def weight_distance_stats(weights: npt.ArrayLike, bins: int = DEFAULT_BINS) -> DistributionStats:
    """All C(C-1)/2 squared distances between L2-normalized weight columns (D x C)."""
    W = np.asarray(weights, dtype=np.float64)
    if W.ndim != 2 or W.shape[1] < 2:
        raise ShapeError(f"need a D x C weight matrix with C >= 2, got shape {W.shape}")
    norms = np.linalg.norm(W, axis=0)
    zero = np.flatnonzero(norms <= 1e-12)
    if zero.size:
        raise NumericError(f"weight column {int(zero[0])} is zero")
    unit = (W / norms).T
    return distribution_stats(pdist(unit, metric="sqeuclidean"), bins)
