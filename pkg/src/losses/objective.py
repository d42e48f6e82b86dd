"""
Total training objective: primary loss, then Ring, then MHE, always in that order.
"""

from typing import Optional

import numpy as np
import numpy.typing as npt

from .auxiliary import mhe_loss, ring_loss
from .config import LossConfig
from .ge2e import ge2e_loss
from .margin_softmax import Batch, LossOutput, margin_softmax_backward, margin_softmax_forward
from .margins import anneal_lambda


def total_loss(
    batch: Batch,
    weights: Optional[npt.ArrayLike],
    config: LossConfig,
    step: int = 0,
    ring_target: Optional[float] = None,
) -> LossOutput:
    """
    Loss value and gradients w.r.t. features, output weights and the Ring target.

    weights is ignored (and may be None) for ge2e, whose logits come from batch
    centers. ring_target defaults to config.ring_target_init.
    """
    if config.kind == "ge2e":
        primary = ge2e_loss(batch.features, batch.labels, config.scale, config.ge2e_bias)
        output = LossOutput(
            loss=primary.loss,
            grad_features=primary.grad_features,
            grad_weights=None,
            primary_loss=primary.loss,
            lam=anneal_lambda(step, config.schedule),
            diagnostics={
                "target_logit_mean": primary.target_logit_mean,
                "feature_norm_mean": float(np.mean(np.linalg.norm(batch.features, axis=1))),
                "ge2e_grad_scale": primary.grad_scale,
                "ge2e_grad_bias": primary.grad_bias,
            },
        )
    else:
        if weights is None:
            raise ValueError(f"{config.kind} needs output-layer weights")
        _, cache = margin_softmax_forward(batch, weights, config, step)
        output = margin_softmax_backward(cache)

    if config.ring_weight > 0:
        R = config.ring_target_init if ring_target is None else float(ring_target)
        ring = ring_loss(batch.features, R, config.ring_weight)
        output.ring_loss = ring.loss
        output.loss += ring.loss
        output.grad_features = output.grad_features + ring.grad_features
        output.grad_ring_target = ring.grad_ring_target
        output.diagnostics["ring_target"] = R

    if config.mhe_weight > 0:
        mhe = mhe_loss(weights, batch.labels, config.mhe_weight)
        output.mhe_loss = mhe.loss
        output.loss += mhe.loss
        output.grad_weights = output.grad_weights + mhe.grad_weights

    output.diagnostics["lambda"] = output.lam
    return output
