"""
Tests for cosine scoring, EER and minimum DCF.
"""

import numpy as np
import pytest

from src.errors import NumericError, TrialError
from src.evaluation import (
    SRE08,
    SRE10,
    DcfParams,
    compute_eer,
    compute_metrics,
    compute_min_dcf,
    cosine_score,
    dcf_at_threshold,
    operating_points,
)

HAND_SCORES = np.array([0.9, 0.8, 0.7, 0.75, 0.3, 0.2])
HAND_TARGET = np.array([True, True, True, False, False, False])


def _naive_sweep(scores, target):
    """Reference sweep over every distinct score, accept iff score >= threshold."""
    thresholds = np.concatenate([[np.inf], np.unique(scores)[::-1]])
    n_target, n_nontarget = target.sum(), (~target).sum()
    p_miss = np.array([np.sum(target & (scores < t)) for t in thresholds]) / n_target
    p_fa = np.array([np.sum(~target & (scores >= t)) for t in thresholds]) / n_nontarget
    return thresholds, p_miss, p_fa


def _naive_eer(scores, target):
    _, p_miss, p_fa = _naive_sweep(scores, target)
    for k in range(len(p_miss)):
        gap = p_miss[k] - p_fa[k]
        if gap <= 0:
            if gap == 0 or k == 0:
                return p_fa[k]
            prev = p_miss[k - 1] - p_fa[k - 1]
            alpha = prev / (prev - gap)
            return p_fa[k - 1] + alpha * (p_fa[k] - p_fa[k - 1])
    raise AssertionError("sweep never crosses")


def _naive_min_dcf(scores, target, params):
    _, p_miss, p_fa = _naive_sweep(scores, target)
    cost = params.c_miss * p_miss * params.p_target + params.c_fa * p_fa * (1 - params.p_target)
    return np.min(cost) / params.default_cost


def _random_trials(rng, size):
    scores = np.round(rng.normal(size=size), 2)
    target = rng.random(size) < 0.3
    target[0], target[1] = True, False
    scores[target] += 1.0
    return scores, target


class TestCosineScore:
    """Cosine similarity."""

    def test_examples(self):
        assert cosine_score([1, 0], [0, 1]) == 0.0
        assert cosine_score([1, 1], [2, 2]) == pytest.approx(1.0)
        assert cosine_score([1, 0], [-3, 0]) == pytest.approx(-1.0)

    def test_zero_vector(self):
        with pytest.raises(NumericError):
            cosine_score([0, 0], [1, 0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cosine_score([1, 0], [1, 0, 0])


class TestEer:
    """Equal error rate."""

    def test_hand_example(self):
        eer, threshold = compute_eer(HAND_SCORES, HAND_TARGET)
        assert eer == pytest.approx(1 / 3, abs=1e-15)
        assert threshold == 0.75

    def test_flipped_labels(self):
        eer, threshold = compute_eer(HAND_SCORES, ~HAND_TARGET)
        assert eer == pytest.approx(2 / 3, abs=1e-15)
        assert threshold == 0.75

    def test_perfect_separation(self):
        eer, _ = compute_eer([0.9, 0.8, 0.1, 0.2], [True, True, False, False])
        assert eer == 0.0

    def test_interpolates_between_points(self):
        eer, threshold = compute_eer([0.9, 0.2, 0.5], [True, True, False])
        assert eer == pytest.approx(0.5)
        assert threshold == pytest.approx(0.7)

    def test_degenerate_trials(self):
        with pytest.raises(TrialError):
            compute_eer([0.1, 0.2], [True, True])
        with pytest.raises(TrialError):
            compute_eer([0.1, 0.2], [True])

    def test_operating_points_start_at_reject_all(self):
        points = operating_points(HAND_SCORES, HAND_TARGET)
        assert points.thresholds[0] == np.inf
        assert (points.p_miss[0], points.p_fa[0]) == (1.0, 0.0)
        assert (points.p_miss[-1], points.p_fa[-1]) == (0.0, 1.0)
        assert list(points.to_frame().columns) == ["threshold", "p_fa", "p_miss"]


class TestMinDcf:
    """Minimum detection cost."""

    def test_hand_example_unnormalized(self):
        params = SRE08.model_copy(update={"normalize": False})
        assert compute_min_dcf(HAND_SCORES, HAND_TARGET, params) == pytest.approx(10 * (1 / 3) * 0.01)

    def test_hand_example_normalized(self):
        assert compute_min_dcf(HAND_SCORES, HAND_TARGET, SRE08) == pytest.approx(1 / 3)

    def test_perfect_separation(self):
        assert compute_min_dcf([0.9, 0.8, 0.1, 0.2], [True, True, False, False], SRE10) == 0.0

    def test_not_above_dcf_at_eer_threshold(self):
        rng = np.random.default_rng(3)
        scores, target = _random_trials(rng, 400)
        _, threshold = compute_eer(scores, target)
        assert compute_min_dcf(scores, target, SRE08) <= dcf_at_threshold(scores, target, threshold, SRE08) + 1e-12

    def test_params_validation(self):
        with pytest.raises(ValueError):
            DcfParams(c_miss=1.0, c_fa=1.0, p_target=1.5)


class TestAgainstNaiveSweep:
    """The ROC-based sweep agrees with a direct threshold loop."""

    def test_operating_points(self):
        rng = np.random.default_rng(0)
        scores, target = _random_trials(rng, 200)
        thresholds, p_miss, p_fa = _naive_sweep(scores, target)
        points = operating_points(scores, target)
        np.testing.assert_array_equal(points.thresholds, thresholds)
        np.testing.assert_array_equal(points.p_miss, p_miss)
        np.testing.assert_array_equal(points.p_fa, p_fa)

    @pytest.mark.slow
    def test_random_trial_sets(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            scores, target = _random_trials(rng, int(rng.integers(2, 300)))
            eer, _ = compute_eer(scores, target)
            assert eer == pytest.approx(_naive_eer(scores, target), abs=1e-12)
            for params in (SRE08, SRE10):
                assert compute_min_dcf(scores, target, params) == pytest.approx(
                    _naive_min_dcf(scores, target, params), abs=1e-12
                )

    def test_invariant_under_increasing_transform(self):
        rng = np.random.default_rng(2)
        scores, target = _random_trials(rng, 300)
        warped = np.exp(3.0 * scores) + 1.0
        assert compute_eer(warped, target)[0] == compute_eer(scores, target)[0]
        assert compute_min_dcf(warped, target) == compute_min_dcf(scores, target)


class TestComputeMetrics:
    """Full report."""

    def test_report(self):
        report = compute_metrics(HAND_SCORES, HAND_TARGET)
        assert report.eer == pytest.approx(1 / 3)
        assert set(report.min_dcf) == {"sre08", "sre10"}
        assert report.min_dcf_threshold["sre08"] == 0.8
        assert (report.n_scores, report.n_target, report.n_nontarget) == (6, 3, 3)
        assert report.to_dict()["min_dcf"]["sre08"] == report.min_dcf["sre08"]
