"""Fixed-vocabulary feedforward networks with analytic forward/backward passes.

Parameters live in a flat ``dict[str, ndarray]`` keyed by layer path, e.g.
``"0.W"`` or ``"3.1.b"`` for the second layer inside a skip block at index 3.
Batch-norm running statistics are stored alongside but are not trainable.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import check_finite, conv2d_backward, _correlate, _pad_amount, rng_fork
from .errors import ShapeError

INIT_STREAM = 0x1A17
BN_EPS = 1e-5
BN_MOMENTUM = 0.1

Shape = tuple[int, ...]


def softplus(x, beta: float):
    """``(1/beta) * ln(1 + exp(beta*x))``, stable for large ``|beta*x|``; exact ReLU at ``beta = inf``."""
    if not beta > 0:
        raise ValueError(f"softplus requires beta > 0, got {beta}")
    x = np.asarray(x, dtype=np.float64)
    if math.isinf(beta):
        out = np.maximum(x, 0.0)
    else:
        out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(beta * x))) / beta
    return out if out.ndim else float(out)


def softplus_grad(x, beta: float):
    """Logistic sigmoid of ``beta*x``; the ReLU step (0 at the kink) at ``beta = inf``."""
    x = np.asarray(x, dtype=np.float64)
    if math.isinf(beta):
        return (x > 0).astype(np.float64)
    z = beta * x
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


# ---------------------------------------------------------------------------
# layer vocabulary
# ---------------------------------------------------------------------------


class Layer:
    kind: str = ""
    trainable: tuple[str, ...] = ()

    def out_shape(self, in_shape: Shape) -> Shape:
        raise NotImplementedError

    def init(self, rng, in_shape: Shape) -> dict:
        return {}

    def forward(self, p: dict, x: np.ndarray, train: bool):
        raise NotImplementedError

    def backward(self, p: dict, cache, dy: np.ndarray, guided: bool):
        raise NotImplementedError

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for k, v in self.__dict__.items():
            d[k] = v
        return d


@dataclass(frozen=True)
class Dense(Layer):
    out: int
    kind = "dense"
    trainable = ("W", "b")

    def out_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeError(f"Dense expects a flat input, got shape {in_shape}; add Flatten")
        return (self.out,)

    def init(self, rng, in_shape):
        fan_in = in_shape[0]
        W = rng.normal((self.out, fan_in)) * math.sqrt(2.0 / fan_in)
        return {"W": W, "b": np.zeros(self.out)}

    def forward(self, p, x, train):
        return x @ p["W"].T + p["b"], x

    def backward(self, p, x, dy, guided):
        return dy @ p["W"], {"W": dy.T @ x, "b": dy.sum(axis=0)}


@dataclass(frozen=True)
class Conv2D(Layer):
    out_ch: int
    k: int = 3
    padding: str = "same"
    kind = "conv2d"
    trainable = ("W", "b")

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"Conv2D expects C,H,W input, got {in_shape}")
        c, h, w = in_shape
        ph, pw = _pad_amount(self.k, self.k, self.padding)
        ho, wo = h + 2 * ph - self.k + 1, w + 2 * pw - self.k + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"Conv2D kernel {self.k} too large for {h}x{w}")
        return (self.out_ch, ho, wo)

    def init(self, rng, in_shape):
        fan_in = in_shape[0] * self.k * self.k
        W = rng.normal((self.out_ch, in_shape[0], self.k, self.k)) * math.sqrt(2.0 / fan_in)
        return {"W": W, "b": np.zeros(self.out_ch)}

    def forward(self, p, x, train):
        ph, pw = _pad_amount(self.k, self.k, self.padding)
        y = _correlate(x, p["W"], ph, pw) + p["b"][None, :, None, None]
        return y, x

    def backward(self, p, x, dy, guided):
        dx, dW = conv2d_backward(x, p["W"], dy, self.padding)
        return dx, {"W": dW, "b": dy.sum(axis=(0, 2, 3))}


def _pool_windows(x: np.ndarray, s: int) -> np.ndarray:
    n, c, h, w = x.shape
    ho, wo = h // s, w // s
    v = x[:, :, : ho * s, : wo * s].reshape(n, c, ho, s, wo, s)
    return v.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, s * s)


def _unpool(g: np.ndarray, s: int, in_shape: Shape) -> np.ndarray:
    # g: N,C,Ho,Wo,s*s  ->  N,C,H,W with the cropped border left at zero
    n, c, ho, wo, _ = g.shape
    full = np.zeros((n, c) + tuple(in_shape[-2:]))
    blk = g.reshape(n, c, ho, wo, s, s).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * s, wo * s)
    full[:, :, : ho * s, : wo * s] = blk
    return full


@dataclass(frozen=True)
class AvgPool(Layer):
    s: int = 2
    kind = "avgpool"

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("pool size must be >= 1")

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[1] < self.s or in_shape[2] < self.s:
            raise ShapeError(f"AvgPool({self.s}) cannot pool shape {in_shape}")
        return (in_shape[0], in_shape[1] // self.s, in_shape[2] // self.s)

    def forward(self, p, x, train):
        return _pool_windows(x, self.s).mean(axis=-1), x.shape

    def backward(self, p, in_shape, dy, guided):
        g = np.repeat(dy[..., None], self.s * self.s, axis=-1) / (self.s * self.s)
        return _unpool(g, self.s, in_shape), {}


@dataclass(frozen=True)
class MaxPool(Layer):
    s: int = 2
    kind = "maxpool"

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("pool size must be >= 1")

    def out_shape(self, in_shape):
        return AvgPool(self.s).out_shape(in_shape)

    def forward(self, p, x, train):
        win = _pool_windows(x, self.s)
        idx = win.argmax(axis=-1)  # first maximum in row-major window order
        y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        return y, (x.shape, idx)

    def backward(self, p, cache, dy, guided):
        in_shape, idx = cache
        g = np.zeros(idx.shape + (self.s * self.s,))
        np.put_along_axis(g, idx[..., None], dy[..., None], axis=-1)
        return _unpool(g, self.s, in_shape), {}


@dataclass(frozen=True)
class SPActivation(Layer):
    """SoftPlus with sharpness ``beta``; ``beta = inf`` is exact ReLU."""

    beta: float = math.inf
    kind = "sp"

    def __post_init__(self):
        if not (self.beta > 0):
            raise ValueError(f"SPActivation beta must be > 0 or inf, got {self.beta}")

    @property
    def is_relu(self) -> bool:
        return math.isinf(self.beta)

    def out_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, p, x, train):
        if self.is_relu:
            return np.maximum(x, 0.0), x
        return softplus(x, self.beta), x

    def gate(self, x):
        if self.is_relu:
            return (x > 0).astype(np.float64)  # subgradient 0 at the kink
        return softplus_grad(x, self.beta)

    def backward(self, p, x, dy, guided):
        if guided:
            dy = np.maximum(dy, 0.0)
        return dy * self.gate(x), {}

    def to_dict(self):
        return {"kind": self.kind, "beta": "inf" if self.is_relu else self.beta}


@dataclass(frozen=True)
class BatchNorm(Layer):
    eps: float = BN_EPS
    momentum: float = BN_MOMENTUM
    kind = "batchnorm"
    trainable = ("gamma", "beta")

    def out_shape(self, in_shape):
        return tuple(in_shape)

    def init(self, rng, in_shape):
        c = in_shape[0]
        return {
            "gamma": np.ones(c),
            "beta": np.zeros(c),
            "running_mean": np.zeros(c),
            "running_var": np.ones(c),
        }

    @staticmethod
    def _axes(x):
        return (0, 2, 3) if x.ndim == 4 else (0,)

    @staticmethod
    def _bc(v, x):
        return v[None, :, None, None] if x.ndim == 4 else v[None, :]

    def forward(self, p, x, train):
        axes = self._axes(x)
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
        else:
            mean, var = p["running_mean"], p["running_var"]
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - self._bc(mean, x)) * self._bc(inv, x)
        y = self._bc(p["gamma"], x) * xhat + self._bc(p["beta"], x)
        count = x.size // x.shape[1]
        return y, (xhat, inv, train, mean, var, count)

    def backward(self, p, cache, dy, guided):
        xhat, inv, train, _, _, m = cache
        axes = self._axes(dy)
        grads = {"gamma": (dy * xhat).sum(axis=axes), "beta": dy.sum(axis=axes)}
        dxhat = dy * self._bc(p["gamma"], dy)
        if not train:
            return dxhat * self._bc(inv, dy), grads
        s1 = dxhat.sum(axis=axes)
        s2 = (dxhat * xhat).sum(axis=axes)
        dx = self._bc(inv, dy) / m * (m * dxhat - self._bc(s1, dy) - xhat * self._bc(s2, dy))
        return dx, grads


@dataclass(frozen=True)
class GlobalAvgPool(Layer):
    kind = "gap"

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"GlobalAvgPool expects C,H,W input, got {in_shape}")
        return (in_shape[0],)

    def forward(self, p, x, train):
        return x.mean(axis=(2, 3)), x.shape

    def backward(self, p, in_shape, dy, guided):
        h, w = in_shape[2], in_shape[3]
        return np.broadcast_to(dy[:, :, None, None] / (h * w), in_shape).copy(), {}


@dataclass(frozen=True)
class Flatten(Layer):
    kind = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, p, x, train):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, p, in_shape, dy, guided):
        return dy.reshape(in_shape), {}


@dataclass(frozen=True)
class SkipBlock(Layer):
    """``y = x + inner(x)``; the inner stack must preserve shape."""

    inner: tuple = ()
    kind = "skip"

    def out_shape(self, in_shape):
        s = tuple(in_shape)
        for layer in self.inner:
            s = layer.out_shape(s)
        if s != tuple(in_shape):
            raise ShapeError(f"SkipBlock inner output {s} differs from input {tuple(in_shape)}")
        return s

    def to_dict(self):
        return {"kind": self.kind, "inner": [l.to_dict() for l in self.inner]}


_KINDS = {
    "dense": Dense,
    "conv2d": Conv2D,
    "avgpool": AvgPool,
    "maxpool": MaxPool,
    "sp": SPActivation,
    "batchnorm": BatchNorm,
    "gap": GlobalAvgPool,
    "flatten": Flatten,
    "skip": SkipBlock,
}


def layer_from_dict(d: dict) -> Layer:
    d = dict(d)
    kind = d.pop("kind")
    if kind not in _KINDS:
        raise ValueError(f"unknown layer kind {kind!r}")
    if kind == "skip":
        return SkipBlock(tuple(layer_from_dict(x) for x in d["inner"]))
    if kind == "sp":
        b = d["beta"]
        return SPActivation(math.inf if b in ("inf", math.inf) else float(b))
    return _KINDS[kind](**d)


# ---------------------------------------------------------------------------
# model configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelConfig:
    layers: tuple
    num_classes: int
    input_shape: Shape

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        self.shapes()  # static chain check

    def shapes(self) -> list[Shape]:
        """Input shape followed by the output shape of every top-level layer."""
        out = [self.input_shape]
        for layer in self.layers:
            out.append(tuple(layer.out_shape(out[-1])))
        if out[-1] != (self.num_classes,):
            raise ShapeError(f"network output shape {out[-1]} does not match num_classes={self.num_classes}")
        return out

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "layers": [l.to_dict() for l in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            layers=tuple(layer_from_dict(x) for x in d["layers"]),
            num_classes=int(d["num_classes"]),
            input_shape=tuple(d["input_shape"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def with_beta(self, beta: float) -> "ModelConfig":
        """Copy with every activation set to ``beta``."""

        def swap(layers):
            out = []
            for l in layers:
                if isinstance(l, SPActivation):
                    out.append(SPActivation(beta))
                elif isinstance(l, SkipBlock):
                    out.append(SkipBlock(tuple(swap(l.inner))))
                else:
                    out.append(l)
            return out

        return ModelConfig(tuple(swap(self.layers)), self.num_classes, self.input_shape)


def parse_layers(text: str, beta: float = math.inf) -> tuple:
    """Parse a compact comma-separated layer list.

    Tokens: ``conv:<out>[:<k>[:<same|valid>]]``, ``dense:<out>``, ``sp[:<beta>]``,
    ``avgpool:<s>``, ``maxpool:<s>``, ``bn``, ``gap``, ``flatten``; a skip block
    is written ``skip(<tokens separated by ;>)``.  ``sp`` without an explicit
    value uses ``beta``.
    """
    layers = []
    for tok in _split_top(text, ","):
        tok = tok.strip()
        if not tok:
            continue
        if tok.startswith("skip(") and tok.endswith(")"):
            inner = tok[5:-1].replace(";", ",")
            layers.append(SkipBlock(parse_layers(inner, beta)))
            continue
        name, *args = tok.split(":")
        if name in ("conv", "dense") and not args:
            raise ValueError(f"layer token {tok!r} needs an output size")
        if name == "conv":
            out = int(args[0])
            k = int(args[1]) if len(args) > 1 else 3
            pad = args[2] if len(args) > 2 else "same"
            layers.append(Conv2D(out, k, pad))
        elif name == "dense":
            layers.append(Dense(int(args[0])))
        elif name == "sp":
            layers.append(SPActivation(parse_beta(args[0]) if args else beta))
        elif name == "avgpool":
            layers.append(AvgPool(int(args[0]) if args else 2))
        elif name == "maxpool":
            layers.append(MaxPool(int(args[0]) if args else 2))
        elif name == "bn":
            layers.append(BatchNorm())
        elif name == "gap":
            layers.append(GlobalAvgPool())
        elif name == "flatten":
            layers.append(Flatten())
        else:
            raise ValueError(f"unknown layer token {tok!r}")
    return tuple(layers)


def _split_top(text: str, sep: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def parse_beta(text) -> float:
    s = str(text).strip().lower()
    if s in ("inf", "infinity", "relu"):
        return math.inf
    b = float(s)
    if not b > 0:
        raise ValueError(f"beta must be > 0 or inf, got {text}")
    return b


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def _walk(layers, prefix=""):
    """Yield ``(path, layer)`` for every non-container layer, depth first."""
    for i, layer in enumerate(layers):
        path = f"{prefix}{i}"
        if isinstance(layer, SkipBlock):
            yield from _walk(layer.inner, path + ".")
        else:
            yield path, layer


def init_params(cfg: ModelConfig, seed: int) -> dict:
    """He-normal weights, zero biases; one scheme regardless of activation."""
    rng = rng_fork(seed, INIT_STREAM)
    params: dict[str, np.ndarray] = {}

    def visit(layers, in_shape, prefix):
        s = in_shape
        for i, layer in enumerate(layers):
            path = f"{prefix}{i}"
            if isinstance(layer, SkipBlock):
                visit(layer.inner, s, path + ".")
            else:
                for k, v in layer.init(rng, s).items():
                    params[f"{path}.{k}"] = v
            s = layer.out_shape(s)

    visit(cfg.layers, cfg.input_shape, "")
    return params


def param_order(cfg: ModelConfig, params: dict) -> list[str]:
    """All parameter keys in layer order (used for checkpoints and flattening)."""
    keys = []
    for path, layer in _walk(cfg.layers):
        names = ("W", "b", "gamma", "beta", "running_mean", "running_var")
        keys.extend(f"{path}.{n}" for n in names if f"{path}.{n}" in params)
    return keys


def trainable_keys(cfg: ModelConfig) -> list[str]:
    keys = []
    for path, layer in _walk(cfg.layers):
        keys.extend(f"{path}.{n}" for n in layer.trainable)
    return keys


def _local(params: dict, path: str) -> dict:
    pre = path + "."
    return {k[len(pre):]: v for k, v in params.items() if k.startswith(pre) and "." not in k[len(pre):]}


def fingerprint(cfg: ModelConfig, params: dict) -> str:
    h = hashlib.sha256(cfg.to_json().encode())
    for k in param_order(cfg, params):
        h.update(k.encode())
        h.update(np.ascontiguousarray(params[k], dtype="<f8").tobytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------


@dataclass
class ForwardTrace:
    """Per-layer inputs, outputs and backward caches of one forward pass.

    ``inputs[i]`` is what top-level layer ``i`` received (the pre-activation
    when layer ``i`` is an activation) and ``outputs[i]`` what it produced.
    """

    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    caches: list = field(default_factory=list)
    train: bool = False
    layers: tuple = ()

    @property
    def logits(self) -> np.ndarray:
        return self.outputs[-1]

    def batch_stats(self) -> dict:
        """Batch mean/var of every batch-norm layer hit in train mode."""
        stats = {}

        def visit(layers, caches, prefix):
            for i, (layer, cache) in enumerate(zip(layers, caches)):
                path = f"{prefix}{i}"
                if isinstance(layer, SkipBlock):
                    visit(layer.inner, cache, path + ".")
                elif isinstance(layer, BatchNorm) and cache[2]:
                    stats[path] = (cache[3], cache[4], cache[5])

        visit(self.layers, self.caches, "")
        return stats


def _forward_stack(layers, params, x, train, prefix, trace=None):
    caches = []
    for i, layer in enumerate(layers):
        path = f"{prefix}{i}"
        if trace is not None:
            trace.inputs.append(x)
        if isinstance(layer, SkipBlock):
            h, sub = _forward_stack(layer.inner, params, x, train, path + ".")
            y, cache = x + h, sub
        else:
            y, cache = layer.forward(_local(params, path), x, train)
        caches.append(cache)
        if trace is not None:
            trace.outputs.append(y)
        x = y
    return x, caches


def _backward_stack(layers, params, caches, dy, guided, prefix, grads, capture=None, captured=None):
    for i in range(len(layers) - 1, -1, -1):
        layer, path = layers[i], f"{prefix}{i}"
        if captured is not None and capture == i:
            captured.append(dy)
        if isinstance(layer, SkipBlock):
            dh = _backward_stack(layer.inner, params, caches[i], dy, guided, path + ".", grads)
            dy = dy + dh
        else:
            dy, g = layer.backward(_local(params, path), caches[i], dy, guided)
            for k, v in g.items():
                grads[f"{path}.{k}"] = v
    return dy


def _batched(cfg: ModelConfig, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape == cfg.input_shape:
        return x[None], True
    if x.ndim == len(cfg.input_shape) + 1 and x.shape[1:] == cfg.input_shape:
        return x, False
    raise ShapeError(f"input shape {x.shape} does not match model input {cfg.input_shape}")


def forward(cfg: ModelConfig, params: dict, x, train: bool = False):
    """Logits and trace for a single input or a batch.

    ``train=True`` normalises batch-norm layers with batch statistics; the
    running statistics in ``params`` are never modified here.
    """
    xb, single = _batched(cfg, x)
    check_finite(xb, "network input")
    trace = ForwardTrace(train=train, layers=cfg.layers)
    logits, trace.caches = _forward_stack(cfg.layers, params, xb, train, "", trace)
    check_finite(logits, "logits")
    return (logits[0] if single else logits), trace


def backward(cfg: ModelConfig, params: dict, trace: ForwardTrace, dlogits, guided: bool = False, capture: int | None = None):
    """Backpropagate ``dlogits`` (batched) through a recorded trace.

    Returns ``(d_input, param_grads, d_capture)`` where ``d_capture`` is the
    gradient w.r.t. the output of top-level layer ``capture`` (or None).
    """
    grads: dict[str, np.ndarray] = {}
    captured = [] if capture is not None else None
    dx = _backward_stack(cfg.layers, params, trace.caches, np.asarray(dlogits, dtype=np.float64),
                         guided, "", grads, capture, captured)
    return dx, grads, (captured[0] if captured else None)


def _class_seed(n: int, num_classes: int, class_index) -> np.ndarray:
    cls = np.broadcast_to(np.asarray(class_index, dtype=np.int64), (n,))
    if np.any(cls < 0) or np.any(cls >= num_classes):
        raise ValueError(f"class_index out of range for {num_classes} classes")
    seed = np.zeros((n, num_classes))
    seed[np.arange(n), cls] = 1.0
    return seed


def input_gradient(cfg: ModelConfig, params: dict, x, class_index, guided: bool = False) -> np.ndarray:
    """Exact gradient of the selected logit w.r.t. the input (eval mode)."""
    xb, single = _batched(cfg, x)
    _, trace = forward(cfg, params, xb)
    dx, _, _ = backward(cfg, params, trace, _class_seed(len(xb), cfg.num_classes, class_index), guided)
    check_finite(dx, "input gradient")
    return dx[0] if single else dx


def guided_input_gradient(cfg: ModelConfig, params: dict, x, class_index) -> np.ndarray:
    """Input gradient with negative upstream signals clamped at every activation."""
    return input_gradient(cfg, params, x, class_index, guided=True)


def param_gradient(cfg: ModelConfig, params: dict, x, class_index) -> dict:
    """Gradient of the selected logit w.r.t. every trainable parameter."""
    xb, single = _batched(cfg, x)
    if not single:
        raise ShapeError("param_gradient takes a single input")
    _, trace = forward(cfg, params, xb)
    _, grads, _ = backward(cfg, params, trace, _class_seed(1, cfg.num_classes, class_index))
    return grads


@dataclass
class Model:
    """A configuration together with its parameters."""

    cfg: ModelConfig
    params: dict

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.cfg, self.params)

    def logits(self, x) -> np.ndarray:
        return forward(self.cfg, self.params, x)[0]

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.logits(x), axis=-1)


def default_cam_layer(cfg: ModelConfig) -> int:
    """Index of the last top-level Conv2D, moved past an activation that directly follows it."""
    idx = [i for i, l in enumerate(cfg.layers) if isinstance(l, Conv2D)]
    if not idx:
        raise ValueError("model has no Conv2D layer")
    i = idx[-1]
    if i + 1 < len(cfg.layers) and isinstance(cfg.layers[i + 1], SPActivation):
        i += 1
    return i


def flatten_params(grads: dict, keys: Sequence[str]) -> np.ndarray:
    return np.concatenate([np.ravel(grads[k]) for k in keys])
