"""
Verification metrics: cosine scoring, EER and minimum DCF.

Operating points come from sklearn's ROC sweep over every distinct score
(accept iff score >= threshold). Error rates are rebuilt from integer counts
so that hand-computed examples are reproduced exactly.
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
import numpy.typing as npt
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from sklearn.metrics import roc_curve

from ..errors import NumericError, TrialError

NORM_FLOOR = 1e-12


class DcfParams(BaseModel):
    """Detection cost parameters."""

    model_config = ConfigDict(frozen=True)

    c_miss: float = Field(..., gt=0.0)
    c_fa: float = Field(..., gt=0.0)
    p_target: float = Field(..., gt=0.0, lt=1.0)
    normalize: bool = True

    @property
    def default_cost(self) -> float:
        return min(self.c_miss * self.p_target, self.c_fa * (1.0 - self.p_target))


SRE08 = DcfParams(c_miss=10.0, c_fa=1.0, p_target=0.01)
SRE10 = DcfParams(c_miss=1.0, c_fa=1.0, p_target=0.001)
DEFAULT_DCF: Dict[str, DcfParams] = {"sre08": SRE08, "sre10": SRE10}


@dataclass
class OperatingPoints:
    """ROC sweep ordered from the strictest threshold (+inf) to the laxest."""

    thresholds: np.ndarray
    p_miss: np.ndarray
    p_fa: np.ndarray
    n_target: int
    n_nontarget: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"threshold": self.thresholds, "p_fa": self.p_fa, "p_miss": self.p_miss})


@dataclass
class MetricsReport:
    eer: float
    eer_threshold: float
    min_dcf: Dict[str, float] = field(default_factory=dict)
    min_dcf_threshold: Dict[str, float] = field(default_factory=dict)
    n_scores: int = 0
    n_target: int = 0
    n_nontarget: int = 0

    def to_dict(self) -> Dict:
        return {
            "eer": self.eer,
            "eer_threshold": self.eer_threshold,
            "min_dcf": dict(self.min_dcf),
            "min_dcf_threshold": dict(self.min_dcf_threshold),
            "n_scores": self.n_scores,
            "n_target": self.n_target,
            "n_nontarget": self.n_nontarget,
        }


def cosine_score(a: npt.ArrayLike, b: npt.ArrayLike) -> float:
    """a . b / (||a|| ||b||)."""
    u = np.asarray(a, dtype=np.float64)
    v = np.asarray(b, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"cosine_score needs two vectors of equal length, got {u.shape} and {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu <= NORM_FLOOR or nv <= NORM_FLOOR:
        raise NumericError("cosine score of a zero vector is undefined")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def _check_trials(scores: npt.ArrayLike, target: npt.ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(target, dtype=bool)
    if s.ndim != 1 or s.shape != t.shape:
        raise TrialError(f"scores {s.shape} and target flags {t.shape} must be matching vectors")
    if not np.all(np.isfinite(s)):
        raise NumericError("scores must be finite")
    if not t.any() or t.all():
        raise TrialError("metrics need at least one target and one nontarget trial")
    return s, t


def operating_points(scores: npt.ArrayLike, target: npt.ArrayLike) -> OperatingPoints:
    s, t = _check_trials(scores, target)
    n_target = int(t.sum())
    n_nontarget = t.size - n_target
    fpr, tpr, thresholds = roc_curve(t, s, drop_intermediate=False)
    false_accepts = np.rint(fpr * n_nontarget)
    misses = n_target - np.rint(tpr * n_target)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    # Older sklearn uses max+1 for the reject-all point.
    thresholds[0] = np.inf
    return OperatingPoints(
        thresholds=thresholds,
        p_miss=misses / n_target,
        p_fa=false_accepts / n_nontarget,
        n_target=n_target,
        n_nontarget=n_nontarget,
    )


def compute_eer(scores: npt.ArrayLike, target: npt.ArrayLike) -> Tuple[float, float]:
    """
    Equal error rate and its threshold.

    Takes the first operating point where P_miss - P_fa <= 0; if that gap is
    not exactly zero, interpolates linearly from the previous point.
    """
    points = operating_points(scores, target)
    gap = points.p_miss - points.p_fa
    k = int(np.flatnonzero(gap <= 0)[0])
    if gap[k] == 0 or k == 0:
        return float(points.p_fa[k]), float(points.thresholds[k])
    alpha = gap[k - 1] / (gap[k - 1] - gap[k])
    eer = points.p_fa[k - 1] + alpha * (points.p_fa[k] - points.p_fa[k - 1])
    t_prev, t_next = points.thresholds[k - 1], points.thresholds[k]
    threshold = t_prev + alpha * (t_next - t_prev) if np.isfinite(t_prev) else t_next
    return float(eer), float(threshold)


def _dcf(p_miss: np.ndarray, p_fa: np.ndarray, params: DcfParams) -> np.ndarray:
    cost = params.c_miss * p_miss * params.p_target + params.c_fa * p_fa * (1.0 - params.p_target)
    return cost / params.default_cost if params.normalize else cost


def min_dcf_point(
    scores: npt.ArrayLike, target: npt.ArrayLike, params: DcfParams
) -> Tuple[float, float]:
    """Minimum DCF over the sweep and the threshold attaining it."""
    points = operating_points(scores, target)
    cost = _dcf(points.p_miss, points.p_fa, params)
    k = int(np.argmin(cost))
    return float(cost[k]), float(points.thresholds[k])


def compute_min_dcf(scores: npt.ArrayLike, target: npt.ArrayLike, params: DcfParams = SRE08) -> float:
    return min_dcf_point(scores, target, params)[0]


def dcf_at_threshold(
    scores: npt.ArrayLike, target: npt.ArrayLike, threshold: float, params: DcfParams = SRE08
) -> float:
    s, t = _check_trials(scores, target)
    accepted = s >= threshold
    p_miss = np.mean(~accepted[t])
    p_fa = np.mean(accepted[~t])
    return float(_dcf(np.asarray(p_miss), np.asarray(p_fa), params))


def compute_metrics(
    scores: npt.ArrayLike,
    target: npt.ArrayLike,
    dcf: Optional[Mapping[str, DcfParams]] = None,
) -> MetricsReport:
    s, t = _check_trials(scores, target)
    eer, eer_threshold = compute_eer(s, t)
    report = MetricsReport(
        eer=eer,
        eer_threshold=eer_threshold,
        n_scores=int(s.size),
        n_target=int(t.sum()),
        n_nontarget=int((~t).sum()),
    )
    for name, params in (dcf or DEFAULT_DCF).items():
        report.min_dcf[name], report.min_dcf_threshold[name] = min_dcf_point(s, t, params)
    return report
