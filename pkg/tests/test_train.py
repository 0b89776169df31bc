import math

import numpy as np
import pytest

from specxai import train as train_mod
from specxai.core import rng_fork
from specxai.data import Dataset
from specxai.errors import DataError
from specxai.net import BatchNorm, Dense, ModelConfig, init_params, parse_layers
from specxai.train import TrainConfig, evaluate, fit_with_cap, softmax_xent


def blobs(n=200, seed=0, sep=3.0):
    r = rng_fork(seed, 0)
    y = np.arange(n) % 2
    x = r.normal((n, 2)) + sep * (2 * y[:, None] - 1) * np.array([1.0, 0.5])
    return Dataset(x, y, "blobs", 2)


def mlp(beta=math.inf):
    return ModelConfig(parse_layers("dense:8, sp, dense:2", beta), 2, (2,))


class TestConfig:
    @pytest.mark.parametrize("kw", [{"lr": 0}, {"batch_size": 0}, {"accuracy_cap": 1.5}, {"optimizer": "rmsprop"},
                                    {"eval_every": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


class TestEvaluate:
    def test_memorizing_oracle(self):
        ds = Dataset(np.eye(4), [0, 1, 2, 3], num_classes=4)
        cfg = ModelConfig((Dense(4),), 4, (4,))
        p = {"0.W": 10 * np.eye(4), "0.b": np.zeros(4)}
        assert evaluate(cfg, p, ds)[0] == 1.0

    def test_uniform_logits(self):
        ds = Dataset(np.zeros((1000, 3)), np.arange(1000) % 10, num_classes=10)
        cfg = ModelConfig((Dense(10),), 10, (3,))
        p = {"0.W": np.zeros((10, 3)), "0.b": np.zeros(10)}
        acc, loss = evaluate(cfg, p, ds)
        assert abs(acc - 0.10) <= 0.02
        assert loss == pytest.approx(math.log(10), abs=1e-12)

    def test_empty(self):
        with pytest.raises(DataError):
            evaluate(mlp(), init_params(mlp(), 0), Dataset(np.zeros((0, 2)), np.zeros(0), num_classes=2))

    def test_softmax_xent_gradient(self):
        z = rng_fork(1, 0).normal((4, 3))
        y = np.array([0, 2, 1, 1])
        loss, g = softmax_xent(z, y)
        h = 1e-6
        for i, j in ((0, 0), (1, 2), (3, 1)):
            zp, zm = z.copy(), z.copy()
            zp[i, j] += h
            zm[i, j] -= h
            fd = (softmax_xent(zp, y)[0][i] - softmax_xent(zm, y)[0][i]) / (2 * h)
            assert g[i, j] == pytest.approx(fd, abs=1e-8)


class TestFit:
    def test_zero_cap_stops_at_first_eval(self):
        params, hist = fit_with_cap(mlp(), TrainConfig(accuracy_cap=0.0, max_epochs=5), blobs(), blobs(seed=1))
        assert hist.stop_reason == "cap_reached" and len(hist.records) == 1

    def test_no_cap_runs_all_epochs(self):
        _, hist = fit_with_cap(mlp(), TrainConfig(max_epochs=4, batch_size=50), blobs(), blobs(seed=1))
        assert hist.stop_reason == "max_epochs"
        assert [r.epoch for r in hist.records] == [1, 2, 3, 4]
        assert hist.records[-1].step == 16

    def test_blobs_reach_cap(self):
        tc = TrainConfig(optimizer="sgd", lr=0.05, batch_size=20, max_epochs=20, accuracy_cap=0.95)
        _, hist = fit_with_cap(mlp(2.0), tc, blobs(), blobs(seed=1))
        assert hist.stop_reason == "cap_reached" and hist.epochs <= 20

    @pytest.mark.parametrize("lr", [1e-3, 1e-2, 1e-1])
    def test_loss_decreases_sgd(self, lr):
        tc = TrainConfig(optimizer="sgd", lr=lr, batch_size=200, max_epochs=5, seed=3)
        _, hist = fit_with_cap(mlp(3.0), tc, blobs(), blobs(seed=1))
        losses = [r.train_loss for r in hist.records]
        assert len(losses) == 5
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_deterministic(self):
        tc = TrainConfig(max_epochs=3, batch_size=32, seed=7)
        cfg = ModelConfig(parse_layers("dense:6, bn, sp, dense:2", 2.0), 2, (2,))
        a, ha = fit_with_cap(cfg, tc, blobs(), blobs(seed=1))
        b, hb = fit_with_cap(cfg, tc, blobs(), blobs(seed=1))
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert ha.rows() == hb.rows()

    def test_no_step_after_cap(self, monkeypatch):
        calls = []
        orig = train_mod._Optimizer.step

        def counting(self, params, grads):
            calls.append(1)
            return orig(self, params, grads)

        monkeypatch.setattr(train_mod._Optimizer, "step", counting)
        tc = TrainConfig(lr=0.01, batch_size=20, max_epochs=20, accuracy_cap=0.9, eval_every=3)
        _, hist = fit_with_cap(mlp(), tc, blobs(), blobs(seed=1))
        assert hist.stop_reason == "cap_reached"
        assert len(calls) == hist.records[-1].step
        assert all(r.val_accuracy < 0.9 for r in hist.records[:-1])

    def test_label_out_of_range(self):
        bad = Dataset(np.zeros((4, 2)), [0, 1, 2, 0], num_classes=3)
        with pytest.raises(DataError):
            fit_with_cap(mlp(), TrainConfig(), bad, blobs())

    def test_batchnorm_running_stats_move(self):
        cfg = ModelConfig((Dense(4), BatchNorm(), Dense(2)), 2, (2,))
        p0 = init_params(cfg, 0)
        p, _ = fit_with_cap(cfg, TrainConfig(max_epochs=1, batch_size=50), blobs(), blobs(seed=1))
        assert not np.allclose(p["1.running_var"], p0["1.running_var"])
        assert np.all(p["1.running_var"] > 0)
