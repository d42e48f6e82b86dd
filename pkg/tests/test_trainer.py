"""
Tests for SGD, the plateau scheduler, the batch sampler and the training loop.
"""

import numpy as np
import pytest

from src.data import CorpusSpec, generate_corpus
from src.errors import ShapeError
from src.evaluation import read_csv
from src.losses import AnnealSchedule, LossConfig, MarginSet, horizon_schedule
from src.models import (
    NetworkConfig,
    PlateauScheduler,
    TrainConfig,
    Trainer,
    build_net,
    plateau_scheduler_step,
    sample_batch,
    sgd_apply,
)
from src.models.trainer import LOSS_LOG_COLUMNS
from src.numkit import RngStream

NETWORK = NetworkConfig(
    input_dim=4,
    frame_kernel_sizes=[3, 3],
    frame_widths=[4, 4],
    segment_widths=[4, 4],
)
LOSS = LossConfig(kind="amsoftmax", margins=MarginSet(m3=0.2), ring_weight=0.01, ring_target_init=2.0)


def _train_config(**overrides):
    settings = dict(
        speakers_per_batch=4,
        frames_min=10,
        frames_max=20,
        max_steps=8,
        eval_interval=4,
        checkpoint_interval=5,
    )
    settings.update(overrides)
    return TrainConfig(**settings)


def _trainer(corpus, output_dir=None, loss=LOSS, **overrides):
    train = corpus.subset(range(corpus.n_speakers), slice(0, 3))
    validation = corpus.subset(range(corpus.n_speakers), slice(3, 4))
    net = build_net(NETWORK, loss, train.n_speakers, seed=2)
    return Trainer(net, loss, _train_config(**overrides), train, validation, seed=2, output_dir=output_dir)


class TestSgd:
    """Parameter update rule."""

    def test_zero_learning_rate(self, tiny_net, rng):
        before = {k: v.copy() for k, v in tiny_net.params.items()}
        grads = {k: rng.gaussian(v.size).reshape(v.shape) for k, v in tiny_net.params.items()}
        sgd_apply(tiny_net, grads, lr=0.0, weight_decay=0.01)
        for name, value in tiny_net.params.items():
            np.testing.assert_array_equal(value, before[name])

    def test_pure_decay(self, tiny_net):
        before = {k: v.copy() for k, v in tiny_net.params.items()}
        sgd_apply(tiny_net, {}, lr=1.0, weight_decay=0.01, grad_ring_target=None)
        np.testing.assert_allclose(tiny_net.params["segment0.weight"], 0.99 * before["segment0.weight"])
        np.testing.assert_array_equal(tiny_net.params["segment0.bn_beta"], before["segment0.bn_beta"])
        assert tiny_net.ring_target == 2.0

    def test_single_step_hand_value(self, tiny_net):
        tiny_net.params["segment1.bias"] = np.ones(4)
        sgd_apply(tiny_net, {"segment1.bias": np.full(4, 0.5)}, lr=0.1, weight_decay=0.0)
        np.testing.assert_allclose(tiny_net.params["segment1.bias"], 0.95)

    def test_decay_shrinks_norm(self, tiny_net):
        before = np.linalg.norm(tiny_net.params["frame0.weight"])
        sgd_apply(tiny_net, {}, lr=0.1, weight_decay=0.01)
        assert np.linalg.norm(tiny_net.params["frame0.weight"]) < before

    def test_ring_target_moves(self, tiny_net):
        sgd_apply(tiny_net, {}, lr=0.1, weight_decay=0.0, grad_ring_target=2.0)
        assert tiny_net.ring_target == pytest.approx(1.8)

    def test_ring_target_learning_rate_scale(self, tiny_net):
        sgd_apply(tiny_net, {}, lr=0.01, weight_decay=0.0, grad_ring_target=2.0, ring_target_lr_scale=50.0)
        assert tiny_net.ring_target == pytest.approx(1.0)

    def test_gradient_shape(self, tiny_net):
        with pytest.raises(ShapeError):
            sgd_apply(tiny_net, {"segment1.bias": np.ones(3)}, lr=0.1, weight_decay=0.0)


class TestPlateauScheduler:
    """Learning-rate halving on stalled validation loss."""

    def test_improving_history_keeps_rate(self):
        assert plateau_scheduler_step([1.0, 0.9, 0.8, 0.7], 0.01, 3) == (0.01, False)

    def test_flat_history_halves_rate(self):
        assert plateau_scheduler_step([1.0, 1.0, 1.0, 1.0], 0.01, 3) == (0.005, False)

    def test_short_history_keeps_rate(self):
        assert plateau_scheduler_step([1.0, 1.0, 1.0], 0.01, 3) == (0.01, False)

    def test_stop_below_threshold(self):
        assert plateau_scheduler_step([1.0, 1.0, 1.0, 1.0], 1.6e-5, 3, stop_threshold=1e-5) == (8e-6, True)

    def test_improvement_within_min_delta_counts_as_stall(self):
        lr, _ = plateau_scheduler_step([1.0, 0.99995, 0.99995, 0.99995], 0.01, 3, min_delta=1e-4)
        assert lr == 0.005

    def test_history_resets_after_reduction(self):
        scheduler = PlateauScheduler(0.01, patience=2)
        for value in (1.0, 1.0, 1.0):
            scheduler.step(value)
        assert scheduler.lr == 0.005
        assert scheduler.history == [1.0]
        assert scheduler.reductions == 1

    def test_state_roundtrip(self):
        scheduler = PlateauScheduler(0.01, patience=2)
        scheduler.step(1.0)
        restored = PlateauScheduler(0.5, patience=2)
        restored.load_state_dict(scheduler.state_dict())
        assert restored.state_dict() == scheduler.state_dict()


class TestSampleBatch:
    """Speaker-balanced segment sampling."""

    def test_all_speakers_once(self, small_corpus):
        tc = _train_config(speakers_per_batch=6)
        batch = sample_batch(small_corpus, RngStream(0, "sampler"), tc)
        assert sorted(batch.labels.tolist()) == list(range(6))
        assert 10 <= batch.segments.shape[1] <= 20
        assert batch.segments.shape[2] == 4

    def test_deterministic(self, small_corpus):
        tc = _train_config()
        a = sample_batch(small_corpus, RngStream(9, "sampler"), tc)
        b = sample_batch(small_corpus, RngStream(9, "sampler"), tc)
        np.testing.assert_array_equal(a.segments, b.segments)
        assert a.utt_ids == b.utt_ids

    def test_segments_come_from_labelled_speaker(self, small_corpus):
        batch = sample_batch(small_corpus, RngStream(1, "sampler"), _train_config(segments_per_speaker=2))
        for label, utt_id in zip(batch.labels, batch.utt_ids):
            assert small_corpus.get(utt_id).speaker == label
        assert batch.segments.shape[0] == 8

    def test_too_few_speakers(self, small_corpus):
        with pytest.raises(ValueError):
            sample_batch(small_corpus, RngStream(0, "sampler"), _train_config(speakers_per_batch=7))

    @pytest.mark.slow
    def test_speaker_frequencies_are_uniform(self):
        corpus = generate_corpus(
            CorpusSpec(n_speakers=20, utts_per_speaker=1, frames_min=25, frames_max=30, feature_dim=2, seed=1)
        )
        tc = _train_config(speakers_per_batch=8)
        rng = RngStream(4, "sampler")
        n_batches = 10_000
        counts = np.zeros(20)
        for _ in range(n_batches):
            counts += np.bincount(sample_batch(corpus, rng, tc).labels, minlength=20)
        frequency = counts / n_batches
        standard_error = np.sqrt(0.4 * 0.6 / n_batches)
        assert counts.sum() == 8 * n_batches
        # Bound holds for all 20 speakers jointly.
        assert np.max(np.abs(frequency - 0.4)) < 4 * standard_error


class TestTrainer:
    """Training loop, logging and resume."""

    def test_run_writes_log_and_checkpoints(self, small_corpus, temp_data_dir):
        trainer = _trainer(small_corpus, temp_data_dir)
        result = trainer.run()

        assert result.steps == 8
        assert result.stop_reason == "max_steps"
        assert list(result.log.columns) == LOSS_LOG_COLUMNS
        assert result.log["step"].tolist() == list(range(1, 9))
        assert (temp_data_dir / "checkpoints" / "step-000005.ckpt").exists()
        assert (temp_data_dir / "checkpoints" / "final.ckpt").exists()
        assert [step for step, _ in result.validation_losses] == [4, 8]
        logged = read_csv(temp_data_dir / "loss_log.csv")
        np.testing.assert_array_equal(logged["primary_loss"].to_numpy(), result.log["primary_loss"].to_numpy())

    def test_identical_runs_write_identical_logs(self, small_corpus, temp_data_dir):
        _trainer(small_corpus, temp_data_dir / "a").run()
        _trainer(small_corpus, temp_data_dir / "b").run()
        assert (temp_data_dir / "a" / "loss_log.csv").read_bytes() == (temp_data_dir / "b" / "loss_log.csv").read_bytes()

    def test_resume_matches_uninterrupted_run(self, small_corpus, temp_data_dir):
        full = _trainer(small_corpus, temp_data_dir / "full", max_steps=15)
        full_result = full.run()

        resumed = _trainer(small_corpus, temp_data_dir / "resumed", max_steps=15)
        resumed.resume(temp_data_dir / "full" / "checkpoints" / "step-000005.ckpt")
        assert resumed.step == 5
        resumed_result = resumed.run()

        expected = full_result.log[full_result.log["step"] > 5].reset_index(drop=True)
        np.testing.assert_array_equal(resumed_result.log.to_numpy(), expected.to_numpy())
        for name, value in full.net.params.items():
            np.testing.assert_array_equal(resumed.net.params[name], value)
        assert resumed.net.ring_target == full.net.ring_target

    def test_resume_keeps_earlier_log_rows(self, small_corpus, temp_data_dir):
        _trainer(small_corpus, temp_data_dir).run()
        resumed = _trainer(small_corpus, temp_data_dir)
        resumed.resume(temp_data_dir / "checkpoints" / "step-000005.ckpt")
        assert [row["step"] for row in resumed.rows] == [1, 2, 3, 4, 5]

    def test_loss_decreases(self, small_corpus):
        fixed_margin = LOSS.model_copy(update={"anneal": AnnealSchedule.disabled()})
        trainer = _trainer(small_corpus, loss=fixed_margin, max_steps=100, eval_interval=100, learning_rate=0.05)
        log = trainer.run().log
        assert log["primary_loss"].tail(20).mean() < log["primary_loss"].head(20).mean()

    def test_annealing_fitted_to_run_length(self, small_corpus):
        trainer = _trainer(small_corpus)
        assert trainer.loss_config.anneal == horizon_schedule("amsoftmax", 8)
        log = trainer.run().log
        assert log["lambda"].iloc[0] == 1000.0
        assert log["lambda"].iloc[-1] < 0.01

    def test_ring_target_follows_feature_norms(self, small_corpus):
        loss = LOSS.model_copy(update={"ring_weight": 0.5, "ring_target_init": 20.0, "ring_target_lr_scale": 50.0})
        trainer = _trainer(small_corpus, loss=loss, max_steps=30, eval_interval=30, learning_rate=0.01)
        log = trainer.run().log
        assert abs(trainer.net.ring_target - log["feature_norm_mean"].iloc[-1]) < 5.0
        assert trainer.net.ring_target < 20.0

    def test_ge2e_needs_two_segments(self, small_corpus):
        net = build_net(NETWORK, LossConfig(kind="ge2e", normalize_features=True), 6, seed=0)
        with pytest.raises(ValueError, match="segments_per_speaker"):
            Trainer(net, LossConfig(kind="ge2e", normalize_features=True), _train_config(), small_corpus, None, seed=0)

    def test_segments_shorter_than_network(self, small_corpus):
        net = build_net(NETWORK, LOSS, 6, seed=0)
        with pytest.raises(ValueError, match="minimum"):
            Trainer(net, LOSS, _train_config(frames_min=4), small_corpus, None, seed=0)
