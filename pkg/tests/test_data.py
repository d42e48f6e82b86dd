"""
Tests for the synthetic corpus, corpus files and trial lists.
"""

import numpy as np
import pytest

from src.data import (
    Corpus,
    CorpusSpec,
    DataConfig,
    TrialSet,
    generate_corpus,
    generate_trials,
    read_corpus,
    read_corpus_digest,
    read_trials,
    split_corpus,
    utterance_id,
    write_corpus,
    write_trials,
)
from src.errors import CorpusFormatError, TrialError
from src.numkit import RngStream


def _cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


class TestGenerateCorpus:
    """Synthetic speaker data."""

    def test_noiseless_frames_are_speaker_directions(self):
        spec = CorpusSpec(n_speakers=3, utts_per_speaker=2, frames_min=5, frames_max=8, feature_dim=4,
                          sigma_within=0.0, sigma_channel=0.0, gain=2.0, seed=0)
        corpus = generate_corpus(spec)
        for speaker, utts in corpus.by_speaker().items():
            reference = utts[0].frames[0]
            assert np.linalg.norm(reference) == pytest.approx(2.0)
            for utt in utts:
                np.testing.assert_array_equal(utt.frames, np.broadcast_to(reference, utt.frames.shape))

    def test_deterministic(self):
        spec = CorpusSpec(n_speakers=4, utts_per_speaker=3, feature_dim=5, seed=8)
        a, b = generate_corpus(spec), generate_corpus(spec)
        for ua, ub in zip(a.utterances, b.utterances):
            assert ua.utt_id == ub.utt_id
            np.testing.assert_array_equal(ua.frames, ub.frames)

    def test_seed_changes_data(self):
        a = generate_corpus(CorpusSpec(n_speakers=2, utts_per_speaker=1, seed=1))
        b = generate_corpus(CorpusSpec(n_speakers=2, utts_per_speaker=1, seed=2))
        assert not np.array_equal(a.utterances[0].frames[:5], b.utterances[0].frames[:5])

    def test_frame_counts_in_range(self, small_corpus):
        assert all(30 <= u.n_frames <= 40 for u in small_corpus.utterances)
        assert len(small_corpus) == 24

    def test_one_dimensional_features_rejected(self):
        with pytest.raises(ValueError):
            generate_corpus(CorpusSpec(n_speakers=2, feature_dim=1))

    def test_speakers_are_separable(self):
        corpus = generate_corpus(CorpusSpec(n_speakers=20, utts_per_speaker=4, feature_dim=10, seed=3))
        means = [u.frames.mean(axis=0) for u in corpus.utterances]
        speakers = [u.speaker for u in corpus.utterances]
        same, different = [], []
        for a in range(len(means)):
            for b in range(a + 1, len(means)):
                (same if speakers[a] == speakers[b] else different).append(_cosine(means[a], means[b]))
        assert np.mean(same) - np.mean(different) > 0.3

    def test_utterance_ids(self):
        assert utterance_id(7, 3) == "spk0007-utt003"


class TestCorpus:
    """Corpus container and splits."""

    def test_subset_relabels_and_keeps_ids(self, small_corpus):
        subset = small_corpus.subset([4, 1], slice(0, 2))
        assert subset.n_speakers == 2
        assert [u.speaker for u in subset.utterances] == [0, 0, 1, 1]
        assert subset.utterances[0].utt_id == "spk0004-utt000"

    def test_subset_repeated_speakers(self, small_corpus):
        with pytest.raises(ValueError):
            small_corpus.subset([1, 1])

    def test_get_unknown(self, small_corpus):
        with pytest.raises(KeyError):
            small_corpus.get("spk9999-utt000")

    def test_split_is_disjoint(self, small_corpus):
        config = DataConfig(n_train_speakers=4, n_test_speakers=2, utts_per_speaker=4, feature_dim=4)
        splits = split_corpus(small_corpus, config)
        train_ids = {u.utt_id for u in splits.train.utterances}
        validation_ids = {u.utt_id for u in splits.validation.utterances}
        test_ids = {u.utt_id for u in splits.test.utterances}

        assert len(train_ids) == 12 and len(validation_ids) == 4 and len(test_ids) == 8
        assert not train_ids & validation_ids
        assert not {i[:7] for i in test_ids} & {i[:7] for i in train_ids | validation_ids}
        for utt in splits.validation.utterances:
            assert utt.utt_id.endswith("utt003")
            assert utt.utt_id == utterance_id(utt.speaker, 3)

    def test_split_size_mismatch(self, small_corpus):
        with pytest.raises(ValueError):
            split_corpus(small_corpus, DataConfig(n_train_speakers=4, n_test_speakers=4, feature_dim=4))


class TestCorpusFile:
    """Binary corpus file."""

    def test_roundtrip(self, small_corpus, temp_data_dir):
        path = write_corpus(small_corpus, temp_data_dir / "corpus.bin", "f" * 64)
        loaded = read_corpus(path)
        assert loaded.n_speakers == small_corpus.n_speakers
        for a, b in zip(small_corpus.utterances, loaded.utterances):
            assert (a.utt_id, a.speaker) == (b.utt_id, b.speaker)
            np.testing.assert_array_equal(a.frames, b.frames)
        assert read_corpus_digest(path) == "f" * 64

    def test_empty_corpus(self, temp_data_dir):
        empty = Corpus(utterances=[], n_speakers=2, feature_dim=3)
        loaded = read_corpus(write_corpus(empty, temp_data_dir / "empty.bin"))
        assert len(loaded) == 0
        assert read_corpus_digest(temp_data_dir / "empty.bin") == ""

    def test_truncated(self, small_corpus, temp_data_dir):
        path = write_corpus(small_corpus, temp_data_dir / "corpus.bin")
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(CorpusFormatError, match="truncated"):
            read_corpus(path)

    def test_not_a_corpus(self, temp_data_dir):
        path = temp_data_dir / "other.bin"
        path.write_bytes(b"hello\nend\n")
        with pytest.raises(CorpusFormatError):
            read_corpus(path)

    def test_missing_file(self, temp_data_dir):
        with pytest.raises(FileNotFoundError):
            read_corpus(temp_data_dir / "none.bin")


class TestTrials:
    """Trial generation and trial files."""

    def test_counts_and_labels(self, small_corpus):
        trials = generate_trials(small_corpus, RngStream(0, "trials"), 10, 30)
        assert (trials.n_target, trials.n_nontarget) == (10, 30)
        for enroll, test, target in zip(trials.enroll, trials.test, trials.target):
            same = small_corpus.get(enroll).speaker == small_corpus.get(test).speaker
            assert same == target
            assert enroll != test

    def test_pairs_are_distinct(self, small_corpus):
        trials = generate_trials(small_corpus, RngStream(1, "trials"), 36, 200)
        pairs = {frozenset(p) for p in zip(trials.enroll, trials.test)}
        assert len(pairs) == len(trials)

    def test_all_nontarget(self, small_corpus):
        trials = generate_trials(small_corpus, RngStream(0, "trials"), 0, 5)
        assert trials.n_target == 0 and len(trials) == 5

    def test_too_many_requested(self, small_corpus):
        # 6 speakers x C(4, 2) same-speaker pairs
        with pytest.raises(TrialError, match="only 36"):
            generate_trials(small_corpus, RngStream(0, "trials"), 37, 0)

    def test_deterministic(self, small_corpus):
        a = generate_trials(small_corpus, RngStream(5, "trials"), 10, 10)
        b = generate_trials(small_corpus, RngStream(5, "trials"), 10, 10)
        assert a.enroll == b.enroll and a.test == b.test

    def test_file_roundtrip(self, small_corpus, temp_data_dir):
        trials = generate_trials(small_corpus, RngStream(0, "trials"), 5, 5)
        loaded = read_trials(write_trials(trials, temp_data_dir / "trials.txt", "a" * 64))
        assert loaded.enroll == trials.enroll
        assert loaded.test == trials.test
        np.testing.assert_array_equal(loaded.target, trials.target)

    def test_empty_file(self, temp_data_dir):
        path = write_trials(TrialSet([], [], np.zeros(0, dtype=bool)), temp_data_dir / "trials.txt", "a" * 64)
        assert len(read_trials(path)) == 0

    def test_bad_label(self, temp_data_dir):
        path = temp_data_dir / "trials.txt"
        path.write_text("a b target\nc d maybe\n")
        with pytest.raises(TrialError, match="row 1"):
            read_trials(path)

    def test_missing_field(self, temp_data_dir):
        path = temp_data_dir / "trials.txt"
        path.write_text("a b target\nc d\n")
        with pytest.raises(TrialError):
            read_trials(path)

    def test_scores_length(self):
        with pytest.raises(TrialError):
            TrialSet(["a"], ["b"], [True], scores=[0.1, 0.2])
