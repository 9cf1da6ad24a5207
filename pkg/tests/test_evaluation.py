"""Metric oracles and the study drivers."""
import numpy as np
import pytest

from physioformer import data as ds
from physioformer import evaluation as ev
from physioformer.errors import ConfigurationError, MetricsError
from physioformer.training import TrainConfig


def oracle_metrics(cm):
    """Independent implementation straight from the per-class definitions."""
    cm = np.asarray(cm, dtype=float)
    total = cm.sum()
    acc = sum(cm[i, i] for i in range(3)) / total
    f1s = []
    for c in range(3):
        tp = cm[c, c]
        fp = sum(cm[r, c] for r in range(3)) - tp
        fn = sum(cm[c, r] for r in range(3)) - tp
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * p * r / (p + r) if p + r else 0.0)
    return acc, f1s, sum(f1s) / 3


class TestConfusion:
    def test_perfect_diagonal(self):
        cm = ev.confusion([0, 1, 2], [0, 1, 2])
        assert np.array_equal(cm.counts, np.eye(3, dtype=int))

    def test_off_diagonal_cell(self):
        cm = ev.confusion([1, 1], [0, 1])
        assert cm.counts[0, 1] == 1
        assert cm.counts[1, 1] == 1

    def test_empty_input(self):
        cm = ev.confusion([], [])
        assert cm.total == 0
        assert np.all(cm.counts == 0)


class TestMetrics:
    def test_balanced_half_scores(self):
        # one class with TP=5, FP=5, FN=5: P=R=F1=0.5
        counts = np.zeros((3, 3), dtype=int)
        counts[0, 0] = 5
        counts[1, 0] = 5   # five false positives for class 0
        counts[0, 1] = 5   # five false negatives for class 0
        per_class, _ = ev.f1(ev.ConfusionMatrix(counts))
        assert per_class[0] == pytest.approx(0.5)

    def test_mse_hand_value(self):
        assert ev.mse([1, 2], [1, 0]) == pytest.approx(2.0)

    def test_perfect_predictions(self):
        preds = labels = [0, 1, 2, 0, 1, 2]
        report = ev.metrics_report(preds, labels)
        assert report.acc == 1.0
        assert report.f1_macro == 1.0
        assert report.mse == 0.0

    def test_fifty_random_matrices_match_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            counts = rng.integers(0, 20, size=(3, 3))
            if counts.sum() == 0:
                counts[1, 1] = 1
            cm = ev.ConfusionMatrix(counts)
            acc_o, f1s_o, macro_o = oracle_metrics(counts)
            assert abs(ev.accuracy(cm) - acc_o) <= 1e-12
            per_class, macro = ev.f1(cm)
            assert np.all(np.abs(np.asarray(per_class) - f1s_o) <= 1e-12)
            assert abs(macro - macro_o) <= 1e-12

    def test_metrics_from_pairs_equal_metrics_from_matrix(self):
        rng = np.random.default_rng(5)
        preds = rng.integers(0, 3, size=200)
        labels = rng.integers(0, 3, size=200)
        report = ev.metrics_report(preds, labels)
        cm = ev.confusion(preds, labels)
        assert report.acc == ev.accuracy(cm)
        assert report.f1_per_class == ev.f1(cm)[0]

    def test_macro_f1_relabeling_invariance(self):
        rng = np.random.default_rng(6)
        preds = rng.integers(0, 3, size=120)
        labels = rng.integers(0, 3, size=120)
        perm = {0: 2, 1: 0, 2: 1}
        _, macro = ev.f1(ev.confusion(preds, labels))
        _, macro_p = ev.f1(ev.confusion([perm[p] for p in preds],
                                        [perm[t] for t in labels]))
        assert macro == pytest.approx(macro_p, abs=1e-12)

    def test_empty_metrics_error(self):
        with pytest.raises(MetricsError):
            ev.accuracy(ev.confusion([], []))
        with pytest.raises(MetricsError):
            ev.mse([], [])


@pytest.fixture(scope="module")
def micro_dataset():
    return ds.synthesize(seed=3, n_subjects=2, windows=12)


@pytest.fixture(scope="module")
def micro_train_cfg():
    return TrainConfig(seed=1, max_epochs=2, patience=99)


class TestStudies:
    def test_width_sweep_grid_size(self, micro_dataset, micro_train_cfg):
        report = ev.run_study("width_sweep", micro_dataset, micro_train_cfg,
                              model_overrides={}, widths=(4, 8))
        assert len(report.rows) == 4
        report_full = ev.run_study("width_sweep", micro_dataset, micro_train_cfg,
                                   widths=ev.DEFAULT_WIDTHS[:1])
        assert len(report_full.rows) == 1

    def test_default_width_grid_is_sixteen(self):
        assert len(ev.DEFAULT_WIDTHS) ** 2 == 16

    def test_no_embedding_scores_report_one(self, micro_dataset):
        from physioformer.model import ModelConfig, PhysioFormer
        cfg = ModelConfig.from_dataset(micro_dataset, no_embedding=True, seed=0)
        model = PhysioFormer(cfg)
        trace = model.forward(micro_dataset.subjects[0].features, train=False)
        assert all(np.all(trace.alpha[g] == 1.0) for g in trace.alpha)

    def test_ablation_studies_produce_pairs(self, micro_dataset, micro_train_cfg):
        for kind in ("no_embedding", "no_attributes"):
            report = ev.run_study(kind, micro_dataset, micro_train_cfg,
                                  model_overrides={"hidden_contrib": 4,
                                                   "hidden_affect": 4})
            assert len(report.rows) == 2
            assert report.rows[0].settings[kind] is False
            assert report.rows[1].settings[kind] is True

    def test_window_sweep_counts(self, micro_train_cfg):
        recordings = ds.synthesize_recordings(seed=3, n_subjects=2, windows=8,
                                              window_len_s=30.0)
        report = ev.run_study("window_sweep", recordings, micro_train_cfg,
                              model_overrides={"hidden_contrib": 4, "hidden_affect": 4},
                              window_sizes=(30.0, 60.0, 120.0))
        assert [r.settings["window_len_s"] for r in report.rows] == [30.0, 60.0, 120.0]

    def test_window_sweep_xi_follows_floor(self):
        # 3600 s of signal: 120/60/40/30 windows for T=30/60/90/120
        from physioformer.signals import WindowPlan
        for t, xi in ((30.0, 120), (60.0, 60), (90.0, 40), (120.0, 30)):
            assert WindowPlan(t).window_count(3600.0) == xi

    def test_unknown_kind(self, micro_dataset, micro_train_cfg):
        with pytest.raises(ConfigurationError):
            ev.run_study("bogus", micro_dataset, micro_train_cfg)

    def test_study_csv_layout(self, micro_dataset, micro_train_cfg):
        report = ev.run_study("no_embedding", micro_dataset, micro_train_cfg,
                              model_overrides={"hidden_contrib": 4, "hidden_affect": 4})
        text = ev.study_table_csv(report)
        lines = text.strip().splitlines()
        assert lines[0] == "no_embedding,acc,f1_macro,f1_weighted,mse,n"
        assert len(lines) == 3
