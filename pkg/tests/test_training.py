"""Loss, gradients, the optimizer, and the per-subject training loop."""
import numpy as np
import pytest

from conftest import toy_features, toy_model
from physioformer import data as ds
from physioformer.errors import TrainingError
from physioformer.model import ModelConfig, PhysioFormer
from physioformer.training import (RMSprop, TrainConfig, backward, loss,
                                   step_lr, train)


class TestLoss:
    def test_uniform_logits_ln3(self, toy_pair):
        model, feats = toy_pair
        trace = model.forward(feats, train=False)
        trace.logits[:] = 0.0
        for g in trace.alpha:
            trace.alpha[g][:] = 1.0
        assert loss(trace, np.array([0, 1, 2]), lam=0.7) == pytest.approx(np.log(3.0))

    def test_unit_scores_zero_regularizer(self, toy_pair):
        model, feats = toy_pair
        trace = model.forward(feats, train=False)
        labels = np.array([0, 1, 2])
        base = loss(trace, labels, lam=0.0)
        for g in trace.alpha:
            trace.alpha[g][:] = 1.0
        assert loss(trace, labels, lam=5.0) == pytest.approx(base)

    def test_lambda_zero_is_pure_cross_entropy(self, toy_pair):
        model, feats = toy_pair
        trace = model.forward(feats, train=False)
        labels = np.array([2, 0, 1])
        probs = np.exp(trace.logits)
        probs /= probs.sum(axis=1, keepdims=True)
        expected = -np.mean(np.log(probs[np.arange(3), labels]))
        assert loss(trace, labels, lam=0.0) == pytest.approx(expected, abs=1e-12)

    def test_invalid_label_rejected(self, toy_pair):
        model, feats = toy_pair
        trace = model.forward(feats, train=False)
        with pytest.raises(TrainingError):
            loss(trace, np.array([0, 1, 3]), lam=0.0)


class TestGradients:
    def relative_errors(self, model, feats, labels, lam, samples_per_group=6,
                        h=1e-5, train_mode=True):
        def f():
            return loss(model.forward(feats, train=train_mode), labels, lam)

        trace = model.forward(feats, train=train_mode)
        model.zero_grads()
        backward(model, trace, feats, labels, lam)
        rng = np.random.default_rng(0)
        errors, checked = [], 0
        for name, p in model.param_items():
            flat = p.value.reshape(-1)
            gflat = p.grad.reshape(-1)
            take = min(samples_per_group, flat.size)
            for i in rng.choice(flat.size, size=take, replace=False):
                orig = flat[i]
                flat[i] = orig + h
                fp = f()
                flat[i] = orig - h
                fm = f()
                flat[i] = orig
                num = (fp - fm) / (2 * h)
                rel = abs(num - gflat[i]) / max(abs(num), abs(gflat[i]), 1e-8)
                errors.append(rel)
                checked += 1
        return errors, checked

    def test_finite_difference_suite(self):
        model = toy_model(seed=3, hidden=4)
        feats = toy_features(seed=42, xi=3)
        labels = np.array([0, 1, 2])
        errors, checked = self.relative_errors(model, feats, labels, lam=0.01)
        assert checked >= 100
        assert max(errors) < 1e-4

    def test_baseline_state_gradient(self):
        model = toy_model(seed=4)
        feats = toy_features(seed=5, xi=3)
        labels = np.array([1, 2, 0])
        trace = model.forward(feats, train=True)
        model.zero_grads()
        backward(model, trace, feats, labels, lam=0.0)
        h = 1e-6
        for j in range(2):
            model.u.value[j] += h
            fp = loss(model.forward(feats, train=True), labels, 0.0)
            model.u.value[j] -= 2 * h
            fm = loss(model.forward(feats, train=True), labels, 0.0)
            model.u.value[j] += h
            num = (fp - fm) / (2 * h)
            assert num == pytest.approx(model.u.grad[j], rel=1e-4, abs=1e-10)

    def test_saturated_softmax_gradient_vanishes(self, toy_pair):
        model, feats = toy_pair
        trace = model.forward(feats, train=False)
        labels = np.array([0, 1, 2])
        trace.logits[:] = -50.0
        trace.logits[np.arange(3), labels] = 50.0  # one-hot correct, huge margin
        model.zero_grads()
        backward(model, trace, feats, labels, lam=0.0)
        total = sum(np.abs(p.grad).sum() for _, p in model.param_items())
        assert total <= 1e-12


class TestRMSprop:
    def test_zero_gradient_no_change(self, toy_pair):
        model, _ = toy_pair
        before = {n: p.value.copy() for n, p in model.param_items()}
        opt = RMSprop(model)
        model.zero_grads()
        opt.step(model, lr=0.1)
        for n, p in model.param_items():
            assert np.array_equal(p.value, before[n])

    def test_first_step_magnitude(self, toy_pair):
        model, _ = toy_pair
        opt = RMSprop(model)
        model.zero_grads()
        name, p = model.param_items()[0]
        p.grad[:] = 1.0
        before = p.value.copy()
        lr = 1e-2
        opt.step(model, lr=lr)
        expected = -lr * 1.0 / np.sqrt(0.1 * 1.0 + 1e-8)
        assert np.allclose(p.value - before, expected)

    def test_constant_gradient_step_approaches_lr(self, toy_pair):
        model, _ = toy_pair
        opt = RMSprop(model)
        name, p = model.param_items()[0]
        lr = 1e-3
        last_delta = None
        for _ in range(200):
            model.zero_grads()
            p.grad[:] = 2.0
            before = p.value.copy()
            opt.step(model, lr=lr)
            last_delta = p.value - before
        assert np.allclose(np.abs(last_delta), lr, rtol=1e-3)


class TestStepLR:
    def test_decay_schedule(self):
        assert step_lr(1e-4, 0, 60, 0.5) == 1e-4
        assert step_lr(1e-4, 59, 60, 0.5) == 1e-4
        assert step_lr(1e-4, 60, 60, 0.5) == pytest.approx(5e-5)
        assert step_lr(1e-4, 120, 60, 0.5) == pytest.approx(2.5e-5)


@pytest.fixture(scope="module")
def small_data():
    return ds.synthesize(seed=3, n_subjects=2, windows=24)


class TestTrainLoop:

    def test_zero_lr_leaves_params_unchanged(self, small_data):
        cfg = TrainConfig(seed=1, lr=0.0, max_epochs=3, patience=99)
        model = PhysioFormer(ModelConfig.from_dataset(small_data, seed=1,
                                                      hidden_contrib=8, hidden_affect=8))
        before = {n: p.value.copy() for n, p in model.param_items()}
        model, _ = train(model, small_data, cfg)
        for n, p in model.param_items():
            assert np.array_equal(p.value, before[n])

    def test_patience_one_frozen_loss_stops_after_two_epochs(self, small_data):
        # lr=0 plus frozen normalization statistics freezes the val loss
        cfg = TrainConfig(seed=1, lr=0.0, max_epochs=50, patience=1)
        model = PhysioFormer(ModelConfig.from_dataset(small_data, seed=1, bn_momentum=0.0,
                                                      hidden_contrib=8, hidden_affect=8))
        _, report = train(model, small_data, cfg)
        assert len(report.epochs) == 2
        assert "early stop" in report.stopping_reason

    def test_training_loss_decreases_first_five_epochs(self, small_data):
        cfg = TrainConfig(seed=5, max_epochs=5, patience=99)
        model = PhysioFormer(ModelConfig.from_dataset(small_data, seed=5))
        _, report = train(model, small_data, cfg)
        losses = [e["train_loss"] for e in report.epochs]
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_determinism_bitwise(self, small_data):
        cfg = TrainConfig(seed=7, max_epochs=4, patience=99)
        states = []
        for _ in range(2):
            model = PhysioFormer(ModelConfig.from_dataset(small_data, seed=7,
                                                          hidden_contrib=8, hidden_affect=8))
            model, _ = train(model, small_data, cfg)
            states.append(model.state_dict())
        a, b = states
        assert a == b  # exact float lists, bit for bit

    def test_best_val_loss_recomputable_from_checkpoint(self, small_data):
        from physioformer.training import _masked_eval_loss
        cfg = TrainConfig(seed=2, max_epochs=6, patience=99)
        split = ds.split_stratified(small_data, cfg.test_fraction, cfg.seed)
        model = PhysioFormer(ModelConfig.from_dataset(small_data, seed=2,
                                                      hidden_contrib=8, hidden_affect=8))
        model, report = train(model, small_data, cfg, split)
        recomputed, _ = _masked_eval_loss(model, small_data, split.test, cfg.lam)
        assert recomputed == pytest.approx(report.best_val_loss, abs=1e-6)

    def test_regularizer_gradient_flow_reduces_score_spread(self):
        # with the classification term silenced, steps shrink mean (alpha-1)^2
        model = toy_model(seed=9)
        feats = toy_features(seed=9, xi=8)
        opt = RMSprop(model)
        lam = 0.5

        def spread():
            trace = model.forward(feats, train=True)
            return float(np.mean([(trace.alpha[g] - 1.0) ** 2 for g in trace.alpha]))

        values = [spread()]
        for _ in range(20):
            trace = model.forward(feats, train=True)
            model.zero_grads()
            n_groups = len(model.config.groups)
            dalpha = {g: 2.0 * lam * (trace.alpha[g] - 1.0)
                      / (n_groups * trace.window_count)
                      for g in model.config.groups}
            model.backward(trace, feats, np.zeros_like(trace.logits), dalpha)
            opt.step(model, lr=1e-3)
            values.append(spread())
        assert values[-1] < values[0]
        assert all(a >= b - 1e-9 for a, b in zip(values, values[1:]))

    def test_leave_one_subject_out_fold_trains(self, small_data):
        fold = ds.split_loso(small_data)[0]
        cfg = TrainConfig(seed=1, max_epochs=2, patience=99)
        model = PhysioFormer(ModelConfig.from_dataset(small_data, seed=1,
                                                      hidden_contrib=8, hidden_affect=8))
        model, report = train(model, small_data, cfg, fold)
        assert len(report.epochs) == 2
        held_subject = next(iter(fold.test))
        assert held_subject not in fold.train

    def test_non_finite_logits_raise(self, toy_pair):
        model, feats = toy_pair
        model.analyser.g2.w.value[:] = 1e308
        model.u.value[:] = 1e308
        with np.errstate(all="ignore"), pytest.raises(TrainingError):
            model.forward(feats, train=False)
