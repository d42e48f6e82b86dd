"""
Tests for the numeric kernel.
"""

import numpy as np
import pytest

from src.errors import NumericError, ShapeError
from src.numkit import (
    RngStream,
    as_matrix,
    finite_difference_grad,
    relative_error,
    rng_draw_gaussian,
    stable_softmax,
)


class TestRngStream:
    """Seeded Philox streams."""

    def test_same_key_same_draws(self):
        a = RngStream(7, "data")
        b = RngStream(7, "data")
        np.testing.assert_array_equal(rng_draw_gaussian(a, 10), rng_draw_gaussian(b, 10))

    def test_streams_are_independent(self):
        a = RngStream(7, "data").gaussian(10)
        b = RngStream(7, "init").gaussian(10)
        assert not np.array_equal(a, b)

    def test_state_roundtrip_resumes_sequence(self):
        stream = RngStream(3, "sampler")
        stream.gaussian(5)
        state = stream.state_dict()
        expected = stream.gaussian(4)

        restored = RngStream.from_state_dict(state)
        np.testing.assert_array_equal(restored.gaussian(4), expected)

    def test_state_from_other_stream_rejected(self):
        state = RngStream(3, "sampler").state_dict()
        with pytest.raises(ValueError, match="belongs to stream"):
            RngStream(3, "data").load_state_dict(state)

    def test_unknown_stream_name(self):
        with pytest.raises(ValueError, match="Unknown stream"):
            RngStream(0, "nope")

    def test_gaussian_moments(self):
        draws = rng_draw_gaussian(RngStream(0, "data"), 100_000)
        assert abs(draws.mean()) < 0.02
        assert abs(draws.var() - 1.0) < 0.02

    def test_zero_draws(self):
        assert rng_draw_gaussian(RngStream(0, "data"), 0).shape == (0,)


class TestArrays:
    """Matrix coercion and finiteness checks."""

    def test_as_matrix_rejects_vectors(self):
        with pytest.raises(ShapeError):
            as_matrix("x", np.ones(3))

    def test_as_matrix_names_non_finite_entry(self):
        values = np.ones((2, 3))
        values[1, 2] = np.inf
        with pytest.raises(NumericError, match=r"\(1, 2\)"):
            as_matrix("x", values)

    def test_as_matrix_column_count(self):
        with pytest.raises(ShapeError, match="4 columns"):
            as_matrix("x", np.ones((2, 3)), cols=4)


class TestStableSoftmax:
    """Softmax with max subtraction."""

    def test_large_equal_logits(self):
        np.testing.assert_allclose(stable_softmax([1000.0, 1000.0]), [0.5, 0.5])

    def test_hand_values(self):
        np.testing.assert_allclose(
            stable_softmax([1.0, 2.0, 3.0]), [0.09003057, 0.24472847, 0.66524096], atol=1e-8
        )

    def test_shift_invariant(self):
        logits = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(stable_softmax(logits + 50.0), stable_softmax(logits), atol=1e-12)

    def test_sums_to_one(self):
        probs = stable_softmax([3.0, -2.0, 0.5])
        assert probs.sum() == pytest.approx(1.0)

    def test_empty_rejected(self):
        with pytest.raises(NumericError):
            stable_softmax([])

    def test_nan_rejected(self):
        with pytest.raises(NumericError):
            stable_softmax([0.0, np.nan])


class TestFiniteDifferences:
    """Central-difference oracle."""

    def test_quadratic(self):
        point = np.array([[1.0, -2.0], [0.5, 3.0]])
        grad = finite_difference_grad(lambda p: float(np.sum(p**2)), point)
        np.testing.assert_allclose(grad, 2 * point, rtol=1e-8)

    def test_norm_gradient(self):
        grad = finite_difference_grad(lambda p: float(np.linalg.norm(p)), np.array([3.0, 4.0]), 1e-5)
        np.testing.assert_allclose(grad, [0.6, 0.8], atol=1e-8)

    def test_constant_function(self):
        grad = finite_difference_grad(lambda p: 2.5, np.ones((2, 2)))
        np.testing.assert_array_equal(grad, np.zeros((2, 2)))

    def test_point_left_unchanged(self):
        point = np.array([1.0, 2.0])
        finite_difference_grad(lambda p: float(np.sum(p)), point)
        np.testing.assert_array_equal(point, [1.0, 2.0])

    def test_non_finite_function(self):
        with pytest.raises(NumericError):
            finite_difference_grad(lambda p: float(np.log(p[0])), np.array([0.0]))

    def test_relative_error(self):
        assert relative_error([1.0, 0.0], [1.0, 0.0]) == 0.0
        assert relative_error([0.0], [0.0]) == 0.0
        assert relative_error([1.0], [1.1]) == pytest.approx(0.1 / 1.1)
