"""Neutral-format ingestion, synthesis, splitting, and round-trips."""
import numpy as np
import pytest

from physioformer import data as ds
from physioformer.errors import ConfigurationError, IngestionError
from physioformer.signals import WindowPlan


@pytest.fixture(scope="module")
def tiny_recordings():
    return ds.synthesize_recordings(seed=3, n_subjects=2, windows=6)


@pytest.fixture(scope="module")
def tiny_dataset():
    return ds.synthesize(seed=3, n_subjects=2, windows=6)


class TestLoad:
    def test_valid_fixture_loads(self, tiny_recordings, tmp_path):
        ds.write_recordings(tiny_recordings, tmp_path)
        dataset = ds.load(tmp_path, "wrist", WindowPlan(30.0))
        assert len(dataset.subjects) == 2
        assert dataset.group_names == ["ACC", "BVP", "EDA", "TEMP"]

    def test_missing_indicator_file(self, tiny_recordings, tmp_path):
        ds.write_recordings(tiny_recordings, tmp_path)
        (tmp_path / "P00" / "TEMP.csv").unlink()
        with pytest.raises(IngestionError, match="P00.*TEMP"):
            ds.load(tmp_path, "wrist", WindowPlan(30.0))

    def test_label_outside_domain(self, tiny_recordings, tmp_path):
        ds.write_recordings(tiny_recordings, tmp_path)
        labels = tmp_path / "P01" / "labels.csv"
        lines = labels.read_text().splitlines()
        lines[1] = lines[1].rsplit(",", 1)[0] + ",3"
        labels.write_text("\n".join(lines) + "\n")
        with pytest.raises(IngestionError, match="label 3"):
            ds.load(tmp_path, "wrist", WindowPlan(30.0))

    def test_unlabeled_windows_dropped(self, tiny_recordings, tmp_path):
        ds.write_recordings(tiny_recordings, tmp_path)
        labels = tmp_path / "P00" / "labels.csv"
        lines = labels.read_text().splitlines()
        # keep only labels for the first two windows (t < 60)
        kept = [lines[0]] + [l for l in lines[1:] if float(l.split(",")[0]) < 60.0]
        labels.write_text("\n".join(kept) + "\n")
        dataset = ds.load(tmp_path, "wrist", WindowPlan(30.0))
        assert dataset.subject("P00").features.window_count == 2
        assert dataset.subject("P01").features.window_count == 6


class TestFeatureRoundTrip:
    def test_save_load_save_is_byte_identical(self, tiny_dataset, tmp_path):
        first = tmp_path / "a"
        second = tmp_path / "b"
        ds.save_features(tiny_dataset, first)
        ds.save_features(ds.load_features(first), second)
        files_a = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(second) for p in second.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (first / rel).read_bytes() == (second / rel).read_bytes()

    def test_loaded_matches_original(self, tiny_dataset, tmp_path):
        ds.save_features(tiny_dataset, tmp_path / "x")
        loaded = ds.load_features(tmp_path / "x")
        for a, b in zip(tiny_dataset.subjects, loaded.subjects):
            assert np.array_equal(a.labels, b.labels)
            assert np.allclose(a.features.pf_matrix, b.features.pf_matrix, rtol=0, atol=0)


class TestSynthesize:
    def test_determinism(self):
        a = ds.synthesize(seed=5, n_subjects=2, windows=6)
        b = ds.synthesize(seed=5, n_subjects=2, windows=6)
        for sa, sb in zip(a.subjects, b.subjects):
            assert np.array_equal(sa.features.pf_matrix, sb.features.pf_matrix)
            assert np.array_equal(sa.labels, sb.labels)

    def test_total_window_count(self):
        dataset = ds.synthesize(seed=1, n_subjects=4, windows=40)
        assert dataset.total_windows() == 160

    def test_planted_separable_feature(self):
        dataset = ds.synthesize(seed=11, n_subjects=4, windows=30)
        names = [e["name"] for e in dataset.catalog()]
        col = names.index("bvp_peak_rate_hz")
        values, labels = [], []
        for s in dataset.subjects:
            values.append(s.features.pf_matrix[:, col])
            labels.append(s.labels)
        values, labels = np.concatenate(values), np.concatenate(labels)
        # brute margin scan: per-class min/max intervals must be disjoint
        intervals = [(values[labels == c].min(), values[labels == c].max())
                     for c in (0, 1, 2)]
        assert intervals[0][1] < intervals[1][0]
        assert intervals[1][1] < intervals[2][0]

    def test_labels_in_domain_and_all_windows_labeled(self):
        dataset = ds.synthesize(seed=2, n_subjects=3, windows=12)
        for s in dataset.subjects:
            assert s.labels.size == s.features.window_count
            assert set(s.labels.tolist()) <= {0, 1, 2}

    def test_chest_device_groups(self):
        dataset = ds.synthesize(seed=2, n_subjects=1, windows=4, device="chest")
        assert dataset.group_names == ["ACC", "ECG", "EDA", "EMG", "RESP", "TEMP"]

    def test_chest_recordings_round_trip_files(self, tmp_path):
        recordings = ds.synthesize_recordings(seed=2, n_subjects=1, windows=4,
                                              device="chest")
        ds.write_recordings(recordings, tmp_path)
        loaded = ds.load(tmp_path, "chest", WindowPlan(30.0))
        direct = ds.synthesize(seed=2, n_subjects=1, windows=4, device="chest")
        assert np.allclose(loaded.subjects[0].features.pf_matrix,
                           direct.subjects[0].features.pf_matrix, atol=1e-9)


class TestSplit:
    def test_stratified_counts(self):
        dataset = ds.synthesize(seed=4, n_subjects=2, windows=60)
        split = ds.split_stratified(dataset, 0.2, seed=0)
        for s in dataset.subjects:
            n = s.labels.size
            assert len(split.test[s.subject_id]) == round(0.2 * n)
            assert len(split.train[s.subject_id]) == n - round(0.2 * n)

    def test_disjoint_and_covering(self):
        dataset = ds.synthesize(seed=4, n_subjects=2, windows=30)
        split = ds.split_stratified(dataset, 0.2, seed=1)
        for s in dataset.subjects:
            tr = set(split.train[s.subject_id].tolist())
            te = set(split.test[s.subject_id].tolist())
            assert tr & te == set()
            assert tr | te == set(range(s.labels.size))

    def test_deterministic_under_seed(self):
        dataset = ds.synthesize(seed=4, n_subjects=2, windows=30)
        a = ds.split_stratified(dataset, 0.2, seed=9)
        b = ds.split_stratified(dataset, 0.2, seed=9)
        for sid in a.train:
            assert np.array_equal(a.train[sid], b.train[sid])
            assert np.array_equal(a.test[sid], b.test[sid])

    def test_loso_folds(self):
        dataset = ds.synthesize(seed=4, n_subjects=5, windows=6)
        folds = ds.split_loso(dataset)
        assert len(folds) == 5
        for fold in folds:
            assert len(fold.test) == 1
            assert len(fold.train) == 4

    def test_stratification_preserves_label_mix(self):
        dataset = ds.synthesize(seed=4, n_subjects=1, windows=60)
        split = ds.split_stratified(dataset, 0.2, seed=2)
        s = dataset.subjects[0]
        test_labels = s.labels[split.test[s.subject_id]]
        for c in (0, 1, 2):
            frac_all = np.mean(s.labels == c)
            frac_test = np.mean(test_labels == c)
            assert abs(frac_all - frac_test) <= 0.1

    def test_unknown_policy(self):
        dataset = ds.synthesize(seed=4, n_subjects=1, windows=6)
        with pytest.raises(ConfigurationError):
            ds.split(dataset, "bogus")
