"""
End-to-end tests of data generation, training, evaluation and analysis.
"""

import numpy as np
import pytest

from src.compare import compare_configs, summarize
from src.errors import ConfigError
from src.evaluate import analyze_model, evaluate_model
from src.evaluation import read_csv, read_digest, read_json
from src.prepare import CORPUS_FILE, TRIALS_FILE, generate_data, load_splits
from src.train import FINAL_CHECKPOINT, setup_mlflow, train_model


@pytest.fixture(autouse=True)
def no_tracking(monkeypatch):
    monkeypatch.delenv("MLFLOW_TRACKING_URI", raising=False)


@pytest.mark.integration
class TestPipeline:
    """gen-data, train, evaluate and analyze on a tiny experiment."""

    def test_generate_data(self, tiny_experiment):
        artifacts = generate_data(tiny_experiment)
        assert artifacts.n_utterances == 40
        assert artifacts.n_trials == 50
        splits = load_splits(tiny_experiment, tiny_experiment.resolved_output_dir())
        assert len(splits.train) == 18 and len(splits.validation) == 6 and len(splits.test) == 16

    def test_load_splits_checks_data_digest(self, tiny_experiment):
        generate_data(tiny_experiment)
        other = tiny_experiment.model_copy(update={"seed": 4})
        with pytest.raises(ConfigError, match="different data settings"):
            load_splits(other, tiny_experiment.resolved_output_dir())

    def test_train_requires_data(self, tiny_experiment):
        with pytest.raises(FileNotFoundError, match="gen-data"):
            train_model(tiny_experiment)

    def test_full_run(self, tiny_experiment):
        out = tiny_experiment.resolved_output_dir()
        generate_data(tiny_experiment)
        result = train_model(tiny_experiment)
        report = evaluate_model(tiny_experiment)
        summary = analyze_model(tiny_experiment)

        assert result.steps == 12
        assert (out / FINAL_CHECKPOINT).exists()
        assert (out / "train" / "config.json").exists()
        assert 0.0 <= report.eer <= 1.0
        metrics = read_json(out / "eval" / "metrics.json")
        assert metrics["config_digest"] == tiny_experiment.digest()
        assert metrics["eer"] == report.eer
        assert read_digest(out / "train" / "loss_log.csv") == tiny_experiment.digest()
        assert len(read_csv(out / "eval" / "scores.csv")) == 50

        assert set(summary) == {
            "feature_norm_mean",
            "feature_norm_variance",
            "weight_distance_mean",
            "weight_distance_variance",
        }
        curve = read_csv(out / "analysis" / "margin_curve.csv")
        assert len(curve) == 181
        np.testing.assert_allclose(curve["psi"], curve["cos"] - 0.2, atol=1e-6)
        assert (out / "analysis" / "weight_distances_histogram.csv").exists()

    def test_runs_are_reproducible(self, tiny_experiment, temp_data_dir):
        outputs = []
        for name in ("first", "second"):
            out = temp_data_dir / name
            generate_data(tiny_experiment, out)
            train_model(tiny_experiment, out)
            evaluate_model(tiny_experiment, out)
            outputs.append(out)
        for relative in (
            CORPUS_FILE,
            TRIALS_FILE,
            "train/loss_log.csv",
            FINAL_CHECKPOINT,
            "eval/metrics.json",
            "eval/scores.csv",
        ):
            assert (outputs[0] / relative).read_bytes() == (outputs[1] / relative).read_bytes()

    def test_resume_from_checkpoint(self, tiny_experiment, temp_data_dir):
        out = tiny_experiment.resolved_output_dir()
        generate_data(tiny_experiment)
        train_model(tiny_experiment)
        uninterrupted = (out / "train" / "loss_log.csv").read_bytes()
        train_model(tiny_experiment, resume=out / "train" / "checkpoints" / "step-000005.ckpt")
        assert (out / "train" / "loss_log.csv").read_bytes() == uninterrupted

    def test_evaluate_rejects_other_config(self, tiny_experiment):
        generate_data(tiny_experiment)
        train_model(tiny_experiment)
        changed = tiny_experiment.model_copy(update={"loss": tiny_experiment.loss.model_copy(update={"scale": 5.0})})
        with pytest.raises(ValueError, match="digest"):
            evaluate_model(changed)

    def test_ge2e_run_has_no_weight_distances(self, tiny_experiment):
        config = tiny_experiment.model_validate(
            {
                **tiny_experiment.model_dump(),
                "loss": {"kind": "ge2e", "normalize_features": True, "scale": 10.0},
                "train": {**tiny_experiment.train.model_dump(), "segments_per_speaker": 2},
            }
        )
        generate_data(config)
        train_model(config)
        summary = analyze_model(config)
        assert "weight_distance_mean" not in summary


@pytest.mark.integration
@pytest.mark.slow
class TestCompare:
    """A/B harness."""

    def test_compare_writes_reports(self, tiny_experiment, temp_data_dir):
        softmax = tiny_experiment.model_validate({**tiny_experiment.model_dump(), "loss": {"kind": "softmax"}})
        frame = compare_configs(softmax, tiny_experiment, [0, 1], temp_data_dir, digest="d" * 64)
        assert frame["seed"].tolist() == [0, 1]
        assert np.allclose(frame["delta_eer"], frame["b_eer"] - frame["a_eer"])
        report = read_json(temp_data_dir / "compare" / "report.json")
        assert report["seeds"] == [0, 1]
        assert set(report["summary"]["eer"]) == {"median_a", "median_b", "median_delta", "b_lower"}
        assert (temp_data_dir / "compare" / "seed-1" / "b" / "eval" / "metrics.json").exists()


class TestSummaries:
    """Comparison summaries and tracking setup."""

    def test_summarize_counts_b_lower(self):
        import pandas as pd

        frame = pd.DataFrame(
            {
                "a_eer": [0.3, 0.2, 0.1],
                "b_eer": [0.2, 0.1, 0.2],
                "a_min_dcf_sre08": [np.nan] * 3,
                "b_min_dcf_sre08": [np.nan] * 3,
                **{f"{side}_{key}": [1.0, 1.0, 1.0] for side in "ab" for key in (
                    "min_dcf_sre10", "feature_norm_variance", "weight_distance_mean", "weight_distance_variance"
                )},
            }
        )
        summary = summarize(frame)
        assert summary["eer"]["b_lower"] == 2
        assert summary["eer"]["median_delta"] == pytest.approx(-0.1)
        assert "min_dcf_sre08" not in summary

    def test_tracking_disabled_by_default(self, tiny_experiment):
        assert setup_mlflow(tiny_experiment.tracking) is False

    def test_tracking_failure_is_not_fatal(self, tiny_experiment, mocker):
        mocker.patch("src.train.mlflow.set_tracking_uri", side_effect=RuntimeError("no server"))
        tracking = tiny_experiment.tracking.model_copy(update={"enabled": True, "tracking_uri": "http://nowhere"})
        assert setup_mlflow(tracking) is False
