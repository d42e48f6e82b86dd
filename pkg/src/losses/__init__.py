from .auxiliary import MheOutput, RingOutput, mhe_loss, ring_loss
from .config import (
    DEFAULT_SCALE,
    LOSS_PRESETS,
    MARGIN_GRID,
    LossConfig,
    LossKind,
    kind_for_margins,
    loss_preset,
)
from .ge2e import Ge2eOutput, ge2e_loss
from .margin_softmax import (
    Batch,
    LossOutput,
    margin_softmax_backward,
    margin_softmax_forward,
    normalize_features,
)
from .margins import (
    AnnealSchedule,
    MarginSet,
    anneal_lambda,
    blended_target_logit,
    default_schedule,
    dpsi_du,
    horizon_schedule,
    margin_curve,
    psi_of_cos,
)
from .objective import total_loss

__all__ = [
    "AnnealSchedule",
    "Batch",
    "DEFAULT_SCALE",
    "Ge2eOutput",
    "LOSS_PRESETS",
    "LossConfig",
    "LossKind",
    "LossOutput",
    "MARGIN_GRID",
    "MarginSet",
    "MheOutput",
    "RingOutput",
    "anneal_lambda",
    "blended_target_logit",
    "default_schedule",
    "dpsi_du",
    "ge2e_loss",
    "horizon_schedule",
    "kind_for_margins",
    "loss_preset",
    "margin_curve",
    "margin_softmax_backward",
    "margin_softmax_forward",
    "mhe_loss",
    "normalize_features",
    "psi_of_cos",
    "ring_loss",
    "total_loss",
]
