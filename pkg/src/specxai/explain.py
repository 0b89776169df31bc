"""Gradient-based saliency methods.

Each method is an expectation of input gradients under some perturbation of
the input (a point mass for VanillaGrad, Gaussian noise for SmoothGrad, a
straight path from a baseline for Integrated Gradients).  GuidedBP and
GradCAM modify the backward pass instead.  Multi-channel results are reduced
to one H x W raster by averaging over channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import check_finite, rng_fork
from .net import (
    Conv2D,
    Model,
    _class_seed,
    backward,
    default_cam_layer,
    forward,
    input_gradient,
)

METHOD_IDS = {"vanilla": 0, "smoothgrad": 1, "intgrad": 2, "guidedbp": 3, "gradcam": 4}
METHOD_NAMES = {v: k for k, v in METHOD_IDS.items()}

_CHUNK = 128


@dataclass
class ExplainerConfig:
    method: str = "vanilla"
    sg_sigma_rel: float = 0.15
    sg_samples: int = 32
    ig_steps: int = 64
    ig_baseline: np.ndarray | None = None  # None means all-zero
    cam_layer: int | None = None  # None means last conv block
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHOD_IDS:
            raise ValueError(f"unknown method {self.method!r}; choose from {sorted(METHOD_IDS)}")
        if self.sg_samples < 1 or self.ig_steps < 1 or self.sg_sigma_rel < 0:
            raise ValueError("sg_samples and ig_steps must be >= 1 and sg_sigma_rel >= 0")


@dataclass
class SaliencyMap:
    values: np.ndarray
    method: str
    model: str = ""
    class_index: int = -1
    seed: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"saliency raster must be 2D, got {self.values.shape}")
        check_finite(self.values, "saliency map")

    @property
    def method_id(self) -> int:
        return METHOD_IDS[self.method]


def collapse_channels(g: np.ndarray) -> np.ndarray:
    g = np.asarray(g)
    return g.mean(axis=-3) if g.ndim >= 3 else g


def _resolve_class(model: Model, x, class_index) -> int:
    if class_index is None:
        return int(np.argmax(model.logits(x)))
    return int(class_index)


def _grads(model: Model, xs: np.ndarray, cls: int, guided: bool = False) -> np.ndarray:
    out = []
    for i in range(0, len(xs), _CHUNK):
        out.append(input_gradient(model.cfg, model.params, xs[i:i + _CHUNK], cls, guided=guided))
    return np.concatenate(out)


def _smap(model, values, method, cls, seed=0) -> SaliencyMap:
    return SaliencyMap(values, method, model.fingerprint, cls, seed)


def vanilla_grad(model: Model, x, class_index=None) -> SaliencyMap:
    cls = _resolve_class(model, x, class_index)
    g = input_gradient(model.cfg, model.params, x, cls)
    return _smap(model, collapse_channels(g), "vanilla", cls)


def guided_backprop(model: Model, x, class_index=None) -> SaliencyMap:
    cls = _resolve_class(model, x, class_index)
    g = input_gradient(model.cfg, model.params, x, cls, guided=True)
    return _smap(model, collapse_channels(g), "guidedbp", cls)


def smooth_grad(model: Model, x, class_index=None, cfg: ExplainerConfig | None = None, stream: int = 0) -> SaliencyMap:
    """Monte-Carlo mean of gradients at ``x + N(0, sigma^2 I)``.

    ``sigma = sg_sigma_rel * (max(x) - min(x))``; noise is drawn from
    ``rng_fork(cfg.seed, stream)``.
    """
    cfg = cfg or ExplainerConfig(method="smoothgrad")
    x = np.asarray(x, dtype=np.float64)
    cls = _resolve_class(model, x, class_index)
    sigma = cfg.sg_sigma_rel * float(x.max() - x.min())
    rng = rng_fork(cfg.seed, stream)
    noise = rng.normal((cfg.sg_samples,) + x.shape)
    g = _grads(model, x[None] + sigma * noise, cls).mean(axis=0)
    return _smap(model, collapse_channels(g), "smoothgrad", cls, cfg.seed)


def integrated_gradients_raw(model: Model, x, cls: int, steps: int, baseline=None) -> np.ndarray:
    """Per-input-element attributions ``(x - b) * mean_k grad(b + a_k (x - b))``.

    ``a_k = (k + 0.5) / steps`` (midpoint rule).
    """
    x = np.asarray(x, dtype=np.float64)
    b = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if b.shape != x.shape:
        raise ValueError(f"baseline shape {b.shape} differs from input {x.shape}")
    a = (np.arange(steps) + 0.5) / steps
    path = b[None] + a.reshape((-1,) + (1,) * x.ndim) * (x - b)[None]
    return (x - b) * _grads(model, path, cls).mean(axis=0)


def integrated_gradients(model: Model, x, class_index=None, cfg: ExplainerConfig | None = None) -> SaliencyMap:
    cfg = cfg or ExplainerConfig(method="intgrad")
    cls = _resolve_class(model, x, class_index)
    attr = integrated_gradients_raw(model, x, cls, cfg.ig_steps, cfg.ig_baseline)
    return _smap(model, collapse_channels(attr), "intgrad", cls)


def bilinear_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Row-stochastic ``n_out x n_in`` interpolation matrix, half-pixel centres."""
    src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    t = src - i0
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), i0] += 1 - t
    m[np.arange(n_out), i1] += t
    return m


def upsample_bilinear(a: np.ndarray, h: int, w: int) -> np.ndarray:
    return bilinear_matrix(h, a.shape[0]) @ a @ bilinear_matrix(w, a.shape[1]).T


def _cam_index(model: Model, cfg: ExplainerConfig) -> int:
    if cfg.cam_layer is not None:
        return int(cfg.cam_layer)
    return default_cam_layer(model.cfg)


def grad_cam(model: Model, x, class_index=None, cfg: ExplainerConfig | None = None) -> SaliencyMap:
    """Rectified, gradient-weighted sum of feature maps, bilinearly upsampled."""
    cfg = cfg or ExplainerConfig(method="gradcam")
    if not any(isinstance(l, Conv2D) for l in model.cfg.layers):
        raise ValueError("GradCAM needs a model with a Conv2D layer")
    cls = _resolve_class(model, x, class_index)
    cam = _grad_cam_batch(model, np.asarray(x, dtype=np.float64)[None], np.array([cls]), _cam_index(model, cfg))[0]
    return _smap(model, cam, "gradcam", cls)


def _grad_cam_batch(model: Model, xs: np.ndarray, classes: np.ndarray, layer: int) -> np.ndarray:
    _, trace = forward(model.cfg, model.params, xs)
    A = trace.outputs[layer]
    if A.ndim != 4:
        raise ValueError(f"GradCAM layer {layer} does not produce feature maps")
    _, _, dA = backward(model.cfg, model.params, trace, _class_seed(len(xs), model.cfg.num_classes, classes), capture=layer)
    weights = dA.mean(axis=(2, 3))
    cams = np.maximum(np.einsum("nk,nkhw->nhw", weights, A), 0.0)
    h, w = xs.shape[-2:]
    mh, mw = bilinear_matrix(h, A.shape[2]), bilinear_matrix(w, A.shape[3])
    return np.einsum("ih,nhw,jw->nij", mh, cams, mw)


def explain(model: Model, x, class_index=None, cfg: ExplainerConfig | None = None, stream: int = 0) -> SaliencyMap:
    cfg = cfg or ExplainerConfig()
    m = cfg.method
    if m == "vanilla":
        return vanilla_grad(model, x, class_index)
    if m == "smoothgrad":
        return smooth_grad(model, x, class_index, cfg, stream)
    if m == "intgrad":
        return integrated_gradients(model, x, class_index, cfg)
    if m == "guidedbp":
        return guided_backprop(model, x, class_index)
    return grad_cam(model, x, class_index, cfg)


def image_seed(seed: int, index: int) -> int:
    """Per-image seed derived from the run seed and the image's dataset index."""
    return rng_fork(seed, index).uint64()


def explain_batch(model: Model, images, cfg: ExplainerConfig | None = None, class_source: str = "argmax",
                  labels=None, indices=None) -> list[SaliencyMap]:
    """Explain every image; map ``i`` carries ``image_seed(cfg.seed, indices[i])``.

    Stochastic methods draw their noise from that per-image seed (stream 0),
    so any single map can be reproduced from its stored seed.  ``indices``
    defaults to ``0..n-1``; passing dataset positions makes the result
    independent of presentation order.
    """
    cfg = cfg or ExplainerConfig()
    images = np.asarray(images, dtype=np.float64)
    n = len(images)
    if n == 0:
        raise ValueError("explain_batch needs at least one image")
    indices = np.arange(n) if indices is None else np.asarray(indices)
    if class_source == "argmax":
        classes = np.concatenate([np.argmax(model.logits(images[i:i + _CHUNK]), axis=-1) for i in range(0, n, _CHUNK)])
    elif class_source == "label":
        if labels is None:
            raise ValueError("class_source='label' needs labels")
        classes = np.asarray(labels, dtype=np.int64)
    else:
        raise ValueError(f"unknown class_source {class_source!r}")

    fp = model.fingerprint
    if cfg.method in ("vanilla", "guidedbp", "gradcam"):
        vals = []
        for i in range(0, n, _CHUNK):
            xs, cs = images[i:i + _CHUNK], classes[i:i + _CHUNK]
            if cfg.method == "gradcam":
                vals.append(_grad_cam_batch(model, xs, cs, _cam_index(model, cfg)))
            else:
                g = input_gradient(model.cfg, model.params, xs, cs, guided=cfg.method == "guidedbp")
                vals.append(collapse_channels(g))
        vals = np.concatenate(vals)
        return [SaliencyMap(v, cfg.method, fp, int(c), image_seed(cfg.seed, int(j)))
                for v, c, j in zip(vals, classes, indices)]
    out = []
    for i in range(n):
        s = image_seed(cfg.seed, int(indices[i]))
        m = explain(model, images[i], int(classes[i]), replace(cfg, seed=s))
        m.seed = s
        out.append(m)
    return out
