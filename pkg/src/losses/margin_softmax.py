"""
Softmax, modified softmax and large-margin softmax with hand-written backward.

Weights are laid out D x C (column j is w_j) and features N x D (row i is x_i).
For every kind except plain softmax the weight columns are L2-normalized.
Non-target logits are r_i * cos(theta_j) and the target logit is
r_i * psi_train(cos(theta_y)), where r_i is the fixed scale s when features are
normalized and the feature norm ||x_i|| otherwise.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import numpy.typing as npt
from scipy.special import log_softmax

from ..errors import LabelError, NumericError, ShapeError
from ..numkit import Matrix, Vector, as_matrix
from .config import LossConfig
from .margins import anneal_lambda, blended_target_logit

NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class Batch:
    """N features with their speaker labels out of C classes."""

    features: Matrix
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        features = as_matrix("features", self.features)
        labels = np.asarray(self.labels)
        if features.shape[0] < 1:
            raise ShapeError("A batch needs at least one feature row")
        if labels.shape != (features.shape[0],):
            raise ShapeError(
                f"labels shape {labels.shape} does not match {features.shape[0]} feature rows"
            )
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            raise LabelError(f"labels must be integers, got dtype {labels.dtype}")
        labels = labels.astype(np.int64)
        bad = np.flatnonzero((labels < 0) | (labels >= self.n_classes))
        if bad.size:
            raise LabelError(
                f"label {int(labels[bad[0]])} at row {int(bad[0])} is outside [0, {self.n_classes})"
            )
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class LossOutput:
    loss: float
    grad_features: Optional[Matrix] = None
    grad_weights: Optional[Matrix] = None
    grad_ring_target: float = 0.0
    primary_loss: float = 0.0
    ring_loss: float = 0.0
    mhe_loss: float = 0.0
    lam: float = 0.0
    diagnostics: Dict[str, float] = field(default_factory=dict)


@dataclass
class RowNormalization:
    """x -> s * x / ||x|| applied row-wise, with its Jacobian-vector product."""

    unit: Matrix
    norms: Vector
    scale: float

    @property
    def output(self) -> Matrix:
        return self.scale * self.unit

    def backward(self, grad_output: npt.ArrayLike) -> Matrix:
        grad = np.asarray(grad_output, dtype=np.float64)
        radial = np.sum(grad * self.unit, axis=1, keepdims=True)
        return self.scale * (grad - radial * self.unit) / self.norms[:, None]


def normalize_features(features: npt.ArrayLike, s: float, label: str = "row") -> RowNormalization:
    """Scale every row to norm s; the result carries the backward map."""
    if s <= 0:
        raise ValueError(f"scale must be positive, got {s}")
    matrix = as_matrix("features", features)
    norms = np.linalg.norm(matrix, axis=1)
    small = np.flatnonzero(norms <= NORM_FLOOR)
    if small.size:
        raise NumericError(f"{label} {int(small[0])} has zero norm and cannot be normalized")
    return RowNormalization(unit=matrix / norms[:, None], norms=norms, scale=float(s))


@dataclass
class MarginSoftmaxCache:
    config: LossConfig
    labels: np.ndarray
    features: Matrix
    weights: Matrix
    probs: Matrix
    lam: float
    adjusted: Optional[Matrix] = None
    row_scale: Optional[Vector] = None
    target_slope: Optional[Vector] = None
    feature_norm: Optional[RowNormalization] = None
    weight_norm: Optional[RowNormalization] = None
    loss: float = 0.0
    diagnostics: Dict[str, float] = field(default_factory=dict)


def _check_weights(weights: npt.ArrayLike, batch: Batch) -> Matrix:
    matrix = as_matrix("weights", weights)
    if matrix.shape != (batch.dim, batch.n_classes):
        raise ShapeError(
            f"weights shape {matrix.shape} does not match (D={batch.dim}, C={batch.n_classes})"
        )
    return matrix


def margin_softmax_forward(
    batch: Batch, weights: npt.ArrayLike, config: LossConfig, step: int = 0
) -> Tuple[LossOutput, MarginSoftmaxCache]:
    """Mean cross-entropy of the configured softmax kind over the batch."""
    if config.kind == "ge2e":
        raise ValueError("ge2e is computed by ge2e_loss, not the class-weight softmax")
    W = _check_weights(weights, batch)
    X = batch.features
    y = batch.labels
    rows = np.arange(batch.size)
    lam = anneal_lambda(step, config.schedule)

    cache = MarginSoftmaxCache(
        config=config, labels=y, features=X, weights=W, probs=np.empty(0), lam=lam
    )
    if config.kind == "softmax":
        logits = X @ W
        feature_norms = np.linalg.norm(X, axis=1)
    else:
        weight_norm = normalize_features(W.T, 1.0, label="weight column")
        w_hat = weight_norm.unit.T
        if config.normalize_features:
            feature_norm = normalize_features(X, config.scale)
            row_scale = np.full(batch.size, config.scale)
        else:
            feature_norm = normalize_features(X, 1.0)
            row_scale = feature_norm.norms
        cos = feature_norm.unit @ w_hat
        target_cos = cos[rows, y]
        if config.margins.is_trivial:
            target, slope = target_cos, np.ones_like(target_cos)
        else:
            target, slope = blended_target_logit(target_cos, config.margins, lam)
        adjusted = cos.copy()
        adjusted[rows, y] = target
        logits = row_scale[:, None] * adjusted

        cache.adjusted = adjusted
        cache.row_scale = row_scale
        cache.target_slope = slope
        cache.feature_norm = feature_norm
        cache.weight_norm = weight_norm
        feature_norms = feature_norm.norms

    log_probs = log_softmax(logits, axis=1)
    cache.probs = np.exp(log_probs)
    cache.loss = float(-np.mean(log_probs[rows, y]))
    cache.diagnostics = {
        "target_logit_mean": float(np.mean(logits[rows, y])),
        "feature_norm_mean": float(np.mean(feature_norms)),
    }
    output = LossOutput(
        loss=cache.loss,
        primary_loss=cache.loss,
        lam=lam,
        diagnostics=dict(cache.diagnostics),
    )
    return output, cache


def margin_softmax_backward(cache: MarginSoftmaxCache) -> LossOutput:
    """Exact gradients of the forward loss w.r.t. features and weights."""
    n = cache.labels.size
    rows = np.arange(n)
    grad_logits = cache.probs.copy()
    grad_logits[rows, cache.labels] -= 1.0
    grad_logits /= n

    if cache.config.kind == "softmax":
        grad_features = grad_logits @ cache.weights.T
        grad_weights = cache.features.T @ grad_logits
    else:
        feature_norm = cache.feature_norm
        weight_norm = cache.weight_norm
        grad_adjusted = grad_logits * cache.row_scale[:, None]
        grad_cos = grad_adjusted.copy()
        grad_cos[rows, cache.labels] *= cache.target_slope

        grad_unit_x = grad_cos @ weight_norm.unit
        grad_w_hat = feature_norm.unit.T @ grad_cos
        if cache.config.normalize_features:
            grad_features = feature_norm.backward(grad_unit_x / feature_norm.scale)
        else:
            grad_scale = np.sum(grad_logits * cache.adjusted, axis=1)
            grad_features = (
                feature_norm.backward(grad_unit_x) + grad_scale[:, None] * feature_norm.unit
            )
        grad_weights = weight_norm.backward(grad_w_hat.T).T

    return LossOutput(
        loss=cache.loss,
        grad_features=grad_features,
        grad_weights=grad_weights,
        primary_loss=cache.loss,
        lam=cache.lam,
        diagnostics=dict(cache.diagnostics),
    )
