"""
Auxiliary objectives: Ring loss on feature norms and minimum hyperspherical
energy (MHE) on the normalized output-layer weight columns.
"""

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy.spatial.distance import pdist, squareform

from ..errors import LabelError, NumericError, ShapeError
from ..numkit import Matrix, as_matrix
from .margin_softmax import NORM_FLOOR, normalize_features

# Minimum distance between normalized columns before the energy is singular.
MIN_COLUMN_DISTANCE = 1e-6


@dataclass
class RingOutput:
    loss: float
    grad_features: Matrix
    grad_ring_target: float


@dataclass
class MheOutput:
    loss: float
    grad_weights: Matrix


def ring_loss(features: npt.ArrayLike, R: float, ring_weight: float) -> RingOutput:
    """lambda_R / N * sum_i (||x_i|| - R)^2 and its gradients w.r.t. x and R."""
    if ring_weight < 0:
        raise ValueError(f"ring weight must be >= 0, got {ring_weight}")
    if R <= 0:
        raise ValueError(f"ring target R must be positive, got {R}")
    X = as_matrix("features", features)
    n = X.shape[0]
    norms = np.linalg.norm(X, axis=1)
    small = np.flatnonzero(norms <= NORM_FLOOR)
    if small.size:
        raise NumericError(f"row {int(small[0])} has zero norm; Ring loss is undefined there")
    gap = norms - R
    loss = ring_weight / n * float(np.sum(gap * gap))
    grad_features = (2.0 * ring_weight / n) * (gap / norms)[:, None] * X
    grad_ring_target = -2.0 * ring_weight / n * float(np.sum(gap))
    return RingOutput(loss=loss, grad_features=grad_features, grad_ring_target=grad_ring_target)


def mhe_loss(weights: npt.ArrayLike, labels: npt.ArrayLike, mhe_weight: float) -> MheOutput:
    """
    lambda_M / (N (C-1)) * sum_i sum_{j != y_i} 1 / ||w_hat_{y_i} - w_hat_j||^2.

    The sum runs over batch rows and all other classes, so a class that appears
    n_a times in the batch contributes its repulsion n_a times.
    """
    W = as_matrix("weights", weights)
    n_classes = W.shape[1]
    if n_classes < 2:
        raise ShapeError("MHE needs at least two weight columns")
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim != 1 or y.size == 0:
        raise ShapeError(f"labels must be a non-empty vector, got shape {y.shape}")
    if np.any((y < 0) | (y >= n_classes)):
        raise LabelError(f"labels must lie in [0, {n_classes})")

    column_norm = normalize_features(W.T, 1.0, label="weight column")
    unit = column_norm.unit
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    sq_dist = squareform(pdist(unit, metric="sqeuclidean"))

    off_diagonal = ~np.eye(n_classes, dtype=bool)
    involved = off_diagonal & ((counts[:, None] + counts[None, :]) > 0)
    too_close = involved & (sq_dist <= MIN_COLUMN_DISTANCE**2)
    if np.any(too_close):
        a, b = np.argwhere(too_close)[0]
        raise NumericError(
            f"weight columns {int(a)} and {int(b)} coincide after normalization; energy is singular"
        )

    inverse = np.divide(1.0, sq_dist, out=np.zeros_like(sq_dist), where=involved)
    coefficient = mhe_weight / (y.size * (n_classes - 1))
    loss = coefficient * float(np.sum(counts[:, None] * inverse))

    # Pair (a, b) appears once from rows labelled a and once from rows labelled b.
    pair_weight = (counts[:, None] + counts[None, :]) * inverse * inverse
    grad_unit = -2.0 * coefficient * (pair_weight.sum(axis=1)[:, None] * unit - pair_weight @ unit)
    grad_weights = column_norm.backward(grad_unit).T
    return MheOutput(loss=loss, grad_weights=grad_weights)
