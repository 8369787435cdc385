import csv

import numpy as np
import numpy.testing as npt
import pytest

from exprnet.augment import AugmentConfig
from exprnet.resnet import ModelConfig, build_model
from exprnet.tensor import Parameter
from exprnet.training import (AdamOptimizer, TrainConfig, TrainingError, evaluate_model, fit,
                              lr_at_epoch, train_epoch)

from toydata import make_toy_dataset

TINY_MODEL = dict(width_multiplier=1 / 16, input_size=32)


def tiny_setup(tmp_path, per_class=2, epochs=2, **train_kw):
    manifest = make_toy_dataset(tmp_path, per_class=per_class, size=32)
    model = build_model(ModelConfig(**TINY_MODEL), seed=0)
    config = TrainConfig(batch_size=8, epochs=epochs, seed=0, checkpoint_every=0, **train_kw)
    augment = AugmentConfig(target_size=32, seed=0)
    return model, manifest, config, augment


class TestSchedule:
    def test_table_values(self):
        cfg = TrainConfig()
        assert lr_at_epoch(cfg, 0) == pytest.approx(3e-3)
        assert lr_at_epoch(cfg, 14) == pytest.approx(3e-3)
        assert lr_at_epoch(cfg, 15) == pytest.approx(3e-4)
        assert lr_at_epoch(cfg, 30) == pytest.approx(3e-5)

    def test_identity_gamma_constant(self):
        cfg = TrainConfig(lr_gamma=1.0)
        assert all(lr_at_epoch(cfg, e) == cfg.learning_rate for e in range(0, 100, 7))

    def test_non_increasing(self):
        cfg = TrainConfig()
        values = [lr_at_epoch(cfg, e) for e in range(80)]
        assert all(a >= b for a, b in zip(values, values[1:]))


class TestAdam:
    def _param(self, value):
        p = Parameter("w", np.asarray(value, dtype=np.float64))
        return p

    def test_zero_grad_zero_decay_fixed_point(self):
        p = self._param([1.0, -2.0])
        opt = AdamOptimizer([p], TrainConfig(weight_decay=0.0))
        p.grad = np.zeros(2)
        opt.step(lr=0.1)
        npt.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step_hand_value(self):
        # bias corrections cancel at t=1: update = lr * g / (|g| + eps)
        p = self._param([1.0])
        cfg = TrainConfig(weight_decay=0.0)
        opt = AdamOptimizer([p], cfg)
        p.grad = np.array([1.0])
        opt.step(lr=0.1)
        expected = 1.0 - 0.1 * 1.0 / (1.0 + cfg.epsilon)
        assert p.data[0] == pytest.approx(expected, abs=1e-12)
        assert opt.t == 1

    def test_weight_decay_shrinks_parameters(self):
        p = self._param([2.0, -3.0])
        opt = AdamOptimizer([p], TrainConfig(weight_decay=1e-2))
        history = [np.abs(p.data).sum()]
        for _ in range(50):
            p.grad = np.zeros(2)
            opt.step(lr=0.05)
            history.append(np.abs(p.data).sum())
        assert all(a >= b - 1e-12 for a, b in zip(history, history[1:]))
        assert history[-1] < history[0]

    def test_coupled_l2_equals_explicit_gradient(self):
        # wd w with zero grad must match grad = w*theta with wd 0
        a = self._param([1.5, -0.5, 2.0])
        b = self._param(a.data.copy())
        wd = 3e-4
        opt_a = AdamOptimizer([a], TrainConfig(weight_decay=wd))
        opt_b = AdamOptimizer([b], TrainConfig(weight_decay=0.0))
        for _ in range(5):
            a.grad = np.zeros(3)
            opt_a.step(lr=0.01)
            b.grad = wd * b.data.copy()
            opt_b.step(lr=0.01)
        npt.assert_allclose(a.data, b.data, atol=1e-15)

    def test_missing_grad_names_parameter(self):
        p = self._param([1.0])
        opt = AdamOptimizer([p], TrainConfig())
        with pytest.raises(TrainingError, match="w"):
            opt.step(lr=0.1)


class TestTrainEpoch:
    def test_zero_lr_no_op(self, tmp_path):
        model, manifest, config, augment = tiny_setup(tmp_path, per_class=1)
        config.learning_rate = 0.0
        opt = AdamOptimizer(model.parameters(), config)
        before = {p.name: p.data.copy() for p in model.parameters()}
        stats = train_epoch(model, manifest[:1], np.ones(7), config, augment, 0, opt)
        assert np.isfinite(stats.mean_loss)
        for p in model.parameters():
            npt.assert_array_equal(p.data, before[p.name])

    def test_one_step_per_batch(self, tmp_path):
        model, manifest, config, augment = tiny_setup(tmp_path, per_class=2)
        opt = AdamOptimizer(model.parameters(), config)
        stats = train_epoch(model, manifest, np.ones(7), config, augment, 0, opt)
        assert stats.batches == (len(manifest) + config.batch_size - 1) // config.batch_size
        assert opt.t == stats.batches

    def test_empty_manifest_errors(self, tmp_path):
        model, _, config, augment = tiny_setup(tmp_path, per_class=1)
        opt = AdamOptimizer(model.parameters(), config)
        with pytest.raises(TrainingError):
            train_epoch(model, [], np.ones(7), config, augment, 0, opt)

    def test_run_to_run_determinism(self, tmp_path):
        results = []
        for _ in range(2):
            model, manifest, config, augment = tiny_setup(tmp_path, per_class=1, epochs=2)
            opt = AdamOptimizer(model.parameters(), config)
            for epoch in range(2):
                train_epoch(model, manifest, np.ones(7), config, augment, epoch, opt)
            results.append({p.name: p.data.copy() for p in model.parameters()})
        for name in results[0]:
            npt.assert_array_equal(results[0][name], results[1][name])

    def test_loss_decreases_on_tiny_set(self, tmp_path):
        model, manifest, config, augment = tiny_setup(tmp_path, per_class=1)
        config.learning_rate = 1e-3
        augment.max_rotation_degrees = 0.0
        augment.flip_probability = 0.0
        opt = AdamOptimizer(model.parameters(), config)
        losses = [train_epoch(model, manifest, np.ones(7), config, augment, e, opt).mean_loss
                  for e in range(5)]
        assert losses[-1] < losses[0]


class TestFitAndEvaluate:
    def test_fit_writes_history_and_checkpoints(self, tmp_path):
        model, manifest, config, augment = tiny_setup(tmp_path / "data", per_class=1, epochs=2)
        out = tmp_path / "run"
        best, history = fit(model, manifest, manifest, np.ones(7), config, augment, out)
        assert (out / "history.csv").exists()
        assert (out / "checkpoint_final.expr1").exists()
        assert (out / "checkpoint_best.expr1").exists()
        assert len(history) == 2
        with open(out / "history.csv") as f:
            rows = list(csv.DictReader(f))
        for row, epoch in zip(rows, range(2)):
            assert float(row["lr"]) == pytest.approx(lr_at_epoch(config, epoch))

    def test_fit_zero_epochs(self, tmp_path):
        model, manifest, config, augment = tiny_setup(tmp_path / "data", per_class=1, epochs=0)
        before = {p.name: p.data.copy() for p in model.parameters()}
        _, history = fit(model, manifest, manifest, np.ones(7), config, augment, tmp_path / "run")
        assert history == []
        for p in model.parameters():
            npt.assert_array_equal(p.data, before[p.name])

    def test_evaluate_does_not_mutate_model(self, tmp_path):
        model, manifest, config, augment = tiny_setup(tmp_path, per_class=1)
        weights_before = {p.name: p.data.copy() for p in model.parameters()}
        stats_before = [(bn.running_mean.copy(), bn.running_var.copy())
                        for bn in model._bn_layers()]
        evaluate_model(model, manifest, augment, batch_size=4)
        for p in model.parameters():
            npt.assert_array_equal(p.data, weights_before[p.name])
        for bn, (rm, rv) in zip(model._bn_layers(), stats_before):
            npt.assert_array_equal(bn.running_mean, rm)
            npt.assert_array_equal(bn.running_var, rv)

    def test_evaluate_report_shape(self, tmp_path):
        model, manifest, config, augment = tiny_setup(tmp_path, per_class=1)
        report = evaluate_model(model, manifest, augment, batch_size=4)
        assert 0.0 <= report.accuracy <= 1.0
        assert report.confusion.total == len(manifest)


class TestConfigValidation:
    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(lr_gamma=0.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(weight_decay=-1.0)
