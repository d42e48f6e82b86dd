"""
Generalized end-to-end (GE2E) batch-center loss.

Logits are s * cos(x_i, c_j) + b over the speakers present in the batch, with
c_j the mean of speaker j's batch features (the sample itself included). When
fixed centers are supplied instead, the loss is the modified softmax over
those columns.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt
from scipy.special import log_softmax

from ..errors import LabelError, ShapeError
from ..numkit import Matrix, as_matrix
from .margin_softmax import normalize_features


@dataclass
class Ge2eOutput:
    loss: float
    grad_features: Matrix
    grad_centers: Optional[Matrix]
    grad_scale: float
    grad_bias: float
    target_logit_mean: float
    speakers: np.ndarray


def ge2e_loss(
    features: npt.ArrayLike,
    labels: npt.ArrayLike,
    s: float,
    b: float = 0.0,
    centers: Optional[npt.ArrayLike] = None,
) -> Ge2eOutput:
    """
    Batch-softmax cross-entropy over speaker centers.

    centers, when given, is D x C (one column per class) and receives a
    gradient; otherwise centers are estimated from the batch and the gradient
    flows back into every feature through them.
    """
    X = as_matrix("features", features)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise ShapeError(f"labels shape {y.shape} does not match {X.shape[0]} feature rows")
    n = X.shape[0]

    if centers is None:
        speakers, target = np.unique(y, return_inverse=True)
        if speakers.size < 2:
            raise ValueError("GE2E needs at least two speakers in the batch")
        membership = np.zeros((n, speakers.size))
        membership[np.arange(n), target] = 1.0
        counts = membership.sum(axis=0)
        center_rows = (membership.T @ X) / counts[:, None]
    else:
        center_rows = as_matrix("centers", centers).T
        if center_rows.shape[1] != X.shape[1]:
            raise ShapeError(
                f"centers have dimension {center_rows.shape[1]}, features {X.shape[1]}"
            )
        if center_rows.shape[0] < 2:
            raise ValueError("GE2E needs at least two centers")
        if np.any((y < 0) | (y >= center_rows.shape[0])):
            raise LabelError(f"labels must lie in [0, {center_rows.shape[0]})")
        speakers = np.arange(center_rows.shape[0])
        target = y

    feature_norm = normalize_features(X, 1.0)
    center_norm = normalize_features(center_rows, 1.0, label="center")
    cos = feature_norm.unit @ center_norm.unit.T
    logits = s * cos + b

    rows = np.arange(n)
    log_probs = log_softmax(logits, axis=1)
    loss = float(-np.mean(log_probs[rows, target]))

    grad_logits = np.exp(log_probs)
    grad_logits[rows, target] -= 1.0
    grad_logits /= n
    grad_cos = s * grad_logits

    grad_features = feature_norm.backward(grad_cos @ center_norm.unit)
    grad_center_rows = center_norm.backward(grad_cos.T @ feature_norm.unit)
    if centers is None:
        grad_features = grad_features + membership @ (grad_center_rows / counts[:, None])
        grad_centers = None
    else:
        grad_centers = grad_center_rows.T

    return Ge2eOutput(
        loss=loss,
        grad_features=grad_features,
        grad_centers=grad_centers,
        grad_scale=float(np.sum(grad_logits * cos)),
        grad_bias=float(np.sum(grad_logits)),
        target_logit_mean=float(np.mean(logits[rows, target])),
        speakers=speakers,
    )
