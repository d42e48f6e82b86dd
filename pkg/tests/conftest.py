"""
Test configuration and fixtures.
"""

import shutil
import tempfile
from pathlib import Path

import pytest

from src.config import ExperimentConfig
from src.data import CorpusSpec, generate_corpus
from src.models import EmbeddingNet, NetworkConfig
from src.numkit import RngStream


@pytest.fixture
def rng():
    """Seeded stream for test-local draws."""
    return RngStream(1234, 9)


@pytest.fixture
def temp_data_dir():
    """Create temporary directory for test outputs."""
    temp_dir = tempfile.mkdtemp()
    yield Path(temp_dir)
    shutil.rmtree(temp_dir)


@pytest.fixture
def small_corpus():
    """Six speakers, four utterances each, 30-40 frames of dimension 4."""
    spec = CorpusSpec(
        n_speakers=6,
        utts_per_speaker=4,
        frames_min=30,
        frames_max=40,
        feature_dim=4,
        sigma_within=0.3,
        sigma_channel=0.1,
        seed=5,
    )
    return generate_corpus(spec)


@pytest.fixture
def tiny_network_config():
    return NetworkConfig(
        input_dim=3,
        frame_kernel_sizes=[3, 3],
        frame_widths=[4, 4],
        segment_widths=[4, 4],
    )


@pytest.fixture
def tiny_net(tiny_network_config):
    return EmbeddingNet.initialize(tiny_network_config, RngStream(0, "init"), n_classes=3, ring_target=2.0)


@pytest.fixture
def tiny_experiment(temp_data_dir):
    """An experiment small enough to run gen-data, train and evaluate in seconds."""
    return ExperimentConfig.model_validate(
        {
            "seed": 3,
            "output_dir": str(temp_data_dir / "run"),
            "data": {
                "n_train_speakers": 6,
                "n_test_speakers": 4,
                "utts_per_speaker": 4,
                "frames_min": 20,
                "frames_max": 30,
                "feature_dim": 4,
                "n_target_trials": 10,
                "n_nontarget_trials": 40,
            },
            "network": {
                "input_dim": 4,
                "frame_kernel_sizes": [3, 3],
                "frame_widths": [8, 8],
                "segment_widths": [8, 8],
            },
            "train": {
                "speakers_per_batch": 4,
                "frames_min": 10,
                "frames_max": 20,
                "max_steps": 12,
                "eval_interval": 4,
                "checkpoint_interval": 5,
            },
            "loss": {"kind": "amsoftmax", "margins": {"m3": 0.2}},
        }
    )
