"""Minibatch training with validation-accuracy-cap early stopping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import rng_fork
from .data import Dataset
from .errors import DataError
from .net import BatchNorm, ModelConfig, _class_seed, _walk, backward, forward, init_params, trainable_keys

log = logging.getLogger(__name__)

SHUFFLE_STREAM = 0x5A0F


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 20
    accuracy_cap: float | None = None
    eval_every: int | None = None  # steps; None evaluates once per epoch
    seed: int = 0
    adam_b1: float = 0.9
    adam_b2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size must be >= 1 and max_epochs >= 0")
        if self.accuracy_cap is not None and not 0.0 <= self.accuracy_cap <= 1.0:
            raise ValueError("accuracy_cap must lie in [0, 1]")
        if self.eval_every is not None and self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


@dataclass
class EvalRecord:
    step: int
    epoch: int
    train_loss: float
    val_accuracy: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    stop_reason: str = "max_epochs"

    @property
    def epochs(self) -> int:
        return self.records[-1].epoch if self.records else 0

    def rows(self) -> list[dict]:
        return [{"step": r.step, "train_loss": r.train_loss, "val_accuracy": r.val_accuracy} for r in self.records]


def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-example cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    loss = lse - z[np.arange(len(labels)), labels]
    p = np.exp(z - lse[:, None])
    p[np.arange(len(labels)), labels] -= 1.0
    return loss, p


def _check(cfg: ModelConfig, ds: Dataset, what: str):
    if len(ds) == 0:
        raise DataError(f"{what} dataset is empty")
    if ds.labels.min() < 0 or ds.labels.max() >= cfg.num_classes:
        raise DataError(f"{what} labels fall outside [0, {cfg.num_classes})")


def evaluate(cfg: ModelConfig, params: dict, data: Dataset, batch_size: int = 256) -> tuple[float, float]:
    """Argmax accuracy and mean cross-entropy in eval mode."""
    _check(cfg, data, "evaluation")
    correct, losses = 0, []
    for i in range(0, len(data), batch_size):
        x, y = data.images[i:i + batch_size], data.labels[i:i + batch_size]
        logits, _ = forward(cfg, params, x)
        correct += int((logits.argmax(axis=1) == y).sum())
        losses.append(softmax_xent(logits, y)[0])
    return correct / len(data), float(np.concatenate(losses).mean())


class _Optimizer:
    def __init__(self, tc: TrainConfig, keys):
        self.tc, self.keys, self.t = tc, keys, 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict):
        tc = self.tc
        self.t += 1
        for k in self.keys:
            g = grads[k]
            if tc.optimizer == "sgd":
                params[k] = params[k] - tc.lr * g
                continue
            m = self.m[k] = tc.adam_b1 * self.m.get(k, 0.0) + (1 - tc.adam_b1) * g
            v = self.v[k] = tc.adam_b2 * self.v.get(k, 0.0) + (1 - tc.adam_b2) * g * g
            mhat = m / (1 - tc.adam_b1 ** self.t)
            vhat = v / (1 - tc.adam_b2 ** self.t)
            params[k] = params[k] - tc.lr * mhat / (np.sqrt(vhat) + tc.adam_eps)


def _update_running_stats(cfg: ModelConfig, params: dict, trace):
    momentum = {path: layer.momentum for path, layer in _walk(cfg.layers) if isinstance(layer, BatchNorm)}
    for path, (mean, var, count) in trace.batch_stats().items():
        mom = momentum[path]
        unbiased = var * count / max(count - 1, 1)
        params[f"{path}.running_mean"] = (1 - mom) * params[f"{path}.running_mean"] + mom * mean
        params[f"{path}.running_var"] = (1 - mom) * params[f"{path}.running_var"] + mom * unbiased


def fit_with_cap(cfg: ModelConfig, tc: TrainConfig, train: Dataset, val: Dataset,
                 params: dict | None = None) -> tuple[dict, TrainHistory]:
    """Train until validation accuracy reaches ``tc.accuracy_cap`` or epochs run out.

    The cap is only checked at evaluations; nothing is updated after the
    evaluation that meets it.  Deterministic given ``tc.seed``.
    """
    _check(cfg, train, "training")
    _check(cfg, val, "validation")
    params = init_params(cfg, tc.seed) if params is None else {k: v.copy() for k, v in params.items()}
    keys = trainable_keys(cfg)
    opt = _Optimizer(tc, keys)
    hist = TrainHistory()
    n = len(train)
    steps_per_epoch = -(-n // tc.batch_size)
    eval_every = tc.eval_every or steps_per_epoch
    step, window = 0, []

    def do_eval(epoch) -> bool:
        acc, _ = evaluate(cfg, params, val)
        loss = float(np.mean(window)) if window else evaluate(cfg, params, train)[1]
        window.clear()
        hist.records.append(EvalRecord(step, epoch, loss, acc))
        log.debug("step %d epoch %d loss %.4f val_acc %.4f", step, epoch, loss, acc)
        return tc.accuracy_cap is not None and acc >= tc.accuracy_cap

    for epoch in range(1, tc.max_epochs + 1):
        order = rng_fork(tc.seed, SHUFFLE_STREAM + epoch).permutation(n)
        for b in range(steps_per_epoch):
            idx = order[b * tc.batch_size:(b + 1) * tc.batch_size]
            x, y = train.images[idx], train.labels[idx]
            logits, trace = forward(cfg, params, x, train=True)
            loss, dlogits = softmax_xent(logits, y)
            _, grads, _ = backward(cfg, params, trace, dlogits / len(y))
            opt.step(params, grads)
            _update_running_stats(cfg, params, trace)
            window.append(float(loss.mean()))
            step += 1
            if step % eval_every == 0 and do_eval(epoch):
                hist.stop_reason = "cap_reached"
                return params, hist
    return params, hist
