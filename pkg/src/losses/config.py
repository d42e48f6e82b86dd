"""
Loss configuration and the named presets behind the margin comparison grid.
"""

from typing import Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .margins import AnnealSchedule, MarginSet, default_schedule, horizon_schedule

LossKind = Literal["softmax", "modified-softmax", "asoftmax", "arcsoftmax", "amsoftmax", "ge2e"]

DEFAULT_SCALE = 30.0


class LossConfig(BaseModel):
    """Primary loss kind plus the Ring and MHE auxiliaries."""

    model_config = ConfigDict(frozen=True)

    kind: LossKind = "softmax"
    scale: float = Field(DEFAULT_SCALE, gt=0, description="Fixed scale s used with feature normalization")
    normalize_weights: Optional[bool] = Field(None, description="Derived from kind when unset")
    normalize_features: bool = False
    margins: MarginSet = Field(default_factory=MarginSet)
    ring_weight: float = Field(0.0, ge=0.0)
    ring_target_init: float = Field(20.0, gt=0.0)
    ring_target_lr_scale: float = Field(1.0, gt=0.0, description="Learning-rate multiplier for the Ring target R")
    mhe_weight: float = Field(0.0, ge=0.0)
    anneal: Optional[AnnealSchedule] = Field(None, description="Per-kind default when unset")
    ge2e_bias: float = 0.0

    @model_validator(mode="after")
    def _check_kind(self) -> "LossConfig":
        m = self.margins
        if self.kind == "softmax":
            if not m.is_trivial:
                raise ValueError("softmax does not take margins")
            if self.normalize_weights or self.normalize_features:
                raise ValueError("softmax uses raw logits; disable normalization")
        else:
            if self.normalize_weights is False:
                raise ValueError(f"{self.kind} requires normalize_weights")
        if self.kind in ("modified-softmax", "ge2e") and not m.is_trivial:
            raise ValueError(f"{self.kind} does not take margins")
        if self.kind == "asoftmax" and (m.m2 != 0.0 or m.m3 != 0.0):
            raise ValueError("asoftmax uses only m1")
        if self.kind == "arcsoftmax" and (m.m1 != 1.0 or m.m3 != 0.0):
            raise ValueError("arcsoftmax uses only m2")
        if self.kind == "amsoftmax" and (m.m1 != 1.0 or m.m2 != 0.0):
            raise ValueError("amsoftmax uses only m3")
        if self.normalize_features and self.ring_weight > 0:
            raise ValueError("Ring loss replaces feature normalization; use one or the other")
        if self.kind == "ge2e" and self.mhe_weight > 0:
            raise ValueError("ge2e has no output-layer weights for MHE")
        return self

    @property
    def weights_normalized(self) -> bool:
        return self.kind != "softmax"

    @property
    def schedule(self) -> AnnealSchedule:
        return self.anneal if self.anneal is not None else default_schedule(self.kind)

    def for_training(self, max_steps: int) -> "LossConfig":
        """Config with the per-kind annealing fitted to max_steps when anneal is unset."""
        if self.anneal is not None:
            return self
        return self.model_copy(update={"anneal": horizon_schedule(self.kind, max_steps)})


def _preset_table() -> Dict[str, LossConfig]:
    presets: Dict[str, LossConfig] = {
        "softmax": LossConfig(kind="softmax"),
        "modified-softmax": LossConfig(kind="modified-softmax"),
    }
    for m1 in (2, 4):
        presets[f"asoftmax-m1={m1}"] = LossConfig(kind="asoftmax", margins=MarginSet(m1=m1))
    for m2 in ("0.20", "0.25", "0.30", "0.35"):
        presets[f"arcsoftmax-m2={m2}"] = LossConfig(
            kind="arcsoftmax", margins=MarginSet(m2=float(m2))
        )
    for m3 in ("0.15", "0.20", "0.25", "0.30"):
        presets[f"amsoftmax-m3={m3}"] = LossConfig(
            kind="amsoftmax", margins=MarginSet(m3=float(m3))
        )
    # Auxiliary weights sized so their effect shows within a few hundred steps.
    # R starts at 20 and its multiplier lets it track the batch mean norm.
    presets["amsoftmax+ring"] = LossConfig(
        kind="amsoftmax",
        margins=MarginSet(m3=0.2),
        ring_weight=0.5,
        ring_target_init=20.0,
        ring_target_lr_scale=50.0,
    )
    presets["amsoftmax+mhe"] = LossConfig(
        kind="amsoftmax", margins=MarginSet(m3=0.2), mhe_weight=5.0
    )
    presets["ge2e"] = LossConfig(kind="ge2e", normalize_features=True, scale=10.0)
    return presets


LOSS_PRESETS: Dict[str, LossConfig] = _preset_table()


def loss_preset(name: str) -> LossConfig:
    if name not in LOSS_PRESETS:
        raise ValueError(f"Unknown loss preset {name!r}; expected one of {sorted(LOSS_PRESETS)}")
    return LOSS_PRESETS[name]


# Margin settings of the comparison grid, used by the gradient-check suite.
MARGIN_GRID = [
    MarginSet(m1=2),
    MarginSet(m1=4),
    MarginSet(m2=0.20),
    MarginSet(m2=0.25),
    MarginSet(m2=0.30),
    MarginSet(m2=0.35),
    MarginSet(m3=0.15),
    MarginSet(m3=0.20),
    MarginSet(m3=0.25),
    MarginSet(m3=0.30),
]


def kind_for_margins(margins: MarginSet) -> LossKind:
    if margins.m1 != 1.0:
        return "asoftmax"
    if margins.m2 != 0.0:
        return "arcsoftmax"
    if margins.m3 != 0.0:
        return "amsoftmax"
    return "modified-softmax"
