"""
Angle functions for the large-margin softmax family.

psi(theta) = cos(m1*theta + m2) - m3 for m1 close to 1, and the piecewise
(-1)^k cos(m1*theta) - 2k form for integer m1 > 1.5. Everything is written
as a function of u = cos(theta) so the backward pass never differentiates
arccos.
"""

import math
from typing import Tuple

import numpy as np
import numpy.typing as npt
from numpy.polynomial import chebyshev
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import MarginError

COS_CLAMP = 1e-7
# m1 above this switches to the piecewise sector form.
PIECEWISE_THRESHOLD = 1.5


class MarginSet(BaseModel):
    """Margins (m1, m2, m3) of the angle function."""

    model_config = ConfigDict(frozen=True)

    m1: float = Field(1.0, ge=1.0, description="Multiplicative angular margin")
    m2: float = Field(0.0, ge=0.0, description="Additive angular margin (radians)")
    m3: float = Field(0.0, ge=0.0, description="Additive cosine margin")

    @model_validator(mode="after")
    def _check_regime(self) -> "MarginSet":
        if self.m1 > PIECEWISE_THRESHOLD:
            if self.m2 != 0.0 or self.m3 != 0.0:
                raise ValueError("m2 and m3 must be 0 when m1 > 1.5")
        else:
            if self.m1 > 1.1:
                raise ValueError(f"m1={self.m1} is outside [1, 1.1] and below the piecewise regime")
            if self.m2 >= 1.0:
                raise ValueError(f"m2={self.m2} must be < 1")
        return self

    @property
    def is_trivial(self) -> bool:
        return self.m1 == 1.0 and self.m2 == 0.0 and self.m3 == 0.0

    @property
    def is_piecewise(self) -> bool:
        return self.m1 > PIECEWISE_THRESHOLD


class AnnealSchedule(BaseModel):
    """lambda(step) = max(lambda_floor, lambda_base * (1 + gamma*step)^-alpha)."""

    model_config = ConfigDict(frozen=True)

    lambda_floor: float = Field(0.0, ge=0.0)
    lambda_base: float = Field(0.0, ge=0.0)
    gamma: float = Field(0.0, ge=0.0)
    alpha: float = Field(0.0, ge=0.0)

    @classmethod
    def disabled(cls) -> "AnnealSchedule":
        return cls()


def _clamp(u: npt.ArrayLike) -> np.ndarray:
    values = np.asarray(u, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise MarginError("cos(theta) values must be finite")
    return np.clip(values, -1.0 + COS_CLAMP, 1.0 - COS_CLAMP)


def _sector_order(margins: MarginSet) -> int:
    order = int(round(margins.m1))
    if not math.isclose(margins.m1, order, rel_tol=0.0, abs_tol=1e-12):
        raise MarginError(f"m1={margins.m1} > 1.5 must be an integer sector count")
    return order


def _sector_index(u: np.ndarray, order: int) -> np.ndarray:
    # Forward-only; no gradient flows through k.
    k = np.floor(order * np.arccos(u) / math.pi)
    return np.clip(k, 0, order - 1)


def _chebyshev_basis(order: int) -> np.ndarray:
    coefficients = np.zeros(order + 1)
    coefficients[order] = 1.0
    return coefficients


def psi_of_cos(u: npt.ArrayLike, margins: MarginSet) -> np.ndarray:
    """Angle function evaluated at u = cos(theta)."""
    c = _clamp(u)
    if margins.is_piecewise:
        order = _sector_order(margins)
        k = _sector_index(c, order)
        sign = np.where(k % 2 == 0, 1.0, -1.0)
        return sign * chebyshev.chebval(c, _chebyshev_basis(order)) - 2.0 * k

    if margins.m1 == 1.0:
        sine = np.sqrt(1.0 - c * c)
        value = c * math.cos(margins.m2) - sine * math.sin(margins.m2)
        # m1*theta + m2 capped at pi keeps psi nonincreasing on [0, pi].
        capped = c <= -math.cos(margins.m2)
        return np.where(capped, -1.0, value) - margins.m3

    angle = np.minimum(margins.m1 * np.arccos(c) + margins.m2, math.pi)
    return np.cos(angle) - margins.m3


def dpsi_du(u: npt.ArrayLike, margins: MarginSet) -> np.ndarray:
    """Derivative of psi_of_cos with respect to u."""
    c = _clamp(u)
    if margins.is_piecewise:
        order = _sector_order(margins)
        k = _sector_index(c, order)
        sign = np.where(k % 2 == 0, 1.0, -1.0)
        return sign * chebyshev.chebval(c, chebyshev.chebder(_chebyshev_basis(order)))

    sine = np.sqrt(1.0 - c * c)
    if margins.m1 == 1.0:
        slope = math.cos(margins.m2) + c * math.sin(margins.m2) / sine
        capped = c <= -math.cos(margins.m2)
        return np.where(capped, 0.0, slope)

    raw = margins.m1 * np.arccos(c) + margins.m2
    slope = margins.m1 * np.sin(raw) / sine
    return np.where(raw >= math.pi, 0.0, slope)


def anneal_lambda(step: int, schedule: AnnealSchedule) -> float:
    """Blend weight lambda at a training step."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    decayed = schedule.lambda_base * (1.0 + schedule.gamma * step) ** (-schedule.alpha)
    return max(schedule.lambda_floor, decayed)


def blended_target_logit(
    u: npt.ArrayLike, margins: MarginSet, lam: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Annealed target logit (psi(u) + lambda*u) / (1 + lambda) and its u-derivative.

    The blend uses the unclamped u for the cosine term.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    values = np.asarray(u, dtype=np.float64)
    psi = psi_of_cos(values, margins)
    dpsi = dpsi_du(values, margins)
    if lam == 0.0:
        return psi, dpsi
    weight = 1.0 + lam
    return (psi + lam * values) / weight, (dpsi + lam) / weight


def margin_curve(margins: MarginSet, thetas: npt.ArrayLike, lam: float = 0.0) -> np.ndarray:
    """Tabulate the (annealed) angle function over angles in radians."""
    value, _ = blended_target_logit(np.cos(np.asarray(thetas, dtype=np.float64)), margins, lam)
    return value


def default_schedule(kind: str) -> AnnealSchedule:
    """Annealing used for each loss kind when the config does not set one."""
    if kind == "amsoftmax":
        return AnnealSchedule(lambda_floor=0.0, lambda_base=1000.0, gamma=1e-4, alpha=5.0)
    if kind == "arcsoftmax":
        return AnnealSchedule(lambda_floor=0.0, lambda_base=1000.0, gamma=1e-5, alpha=5.0)
    if kind == "asoftmax":
        return AnnealSchedule(lambda_floor=10.0, lambda_base=1000.0, gamma=1e-5, alpha=5.0)
    return AnnealSchedule.disabled()


def horizon_schedule(kind: str, max_steps: int, fraction: float = 0.6) -> AnnealSchedule:
    """
    Per-kind annealing with gamma rescaled to a run of max_steps.

    lambda reaches its floor (or lambda_base * 1e-5 when the floor is 0) after
    fraction * max_steps steps. The long-run schedules of default_schedule
    barely decay over a few hundred steps, which hides the margin entirely.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    base = default_schedule(kind)
    if base.lambda_base == 0.0 or max_steps < 1:
        return base
    settled = base.lambda_floor if base.lambda_floor > 0.0 else base.lambda_base * 1e-5
    horizon = max(1.0, fraction * max_steps)
    gamma = ((base.lambda_base / settled) ** (1.0 / base.alpha) - 1.0) / horizon
    return base.model_copy(update={"gamma": gamma})
