"""Shared oracles for the test-suite: finite differences and random models."""

import math

import numpy as np

from specxai.core import rng_fork
from specxai.net import ModelConfig, forward, init_params, parse_layers, trainable_keys

# every layer type appears in at least one template
TEMPLATES = [
    ((2, 8, 8), "conv:4:3, bn, sp, maxpool:2, skip(conv:4:3;sp), avgpool:2, flatten, dense:3"),
    ((1, 9, 7), "conv:3:3:valid, sp, skip(conv:3:3;bn;sp), gap, dense:5, sp, dense:3"),
    ((3, 6, 6), "flatten, dense:6, sp, bn, dense:3"),
    ((1, 8, 8), "conv:2:1, sp, conv:3:5, sp, maxpool:2, avgpool:2, flatten, dense:3"),
]
BETAS = (0.9, 3.0, 7.0, math.inf)


def random_model(seed: int):
    """Template, beta and parameters drawn from ``seed``; BN stats made nontrivial."""
    r = rng_fork(seed, 99)
    shape, arch = TEMPLATES[seed % len(TEMPLATES)]
    beta = BETAS[int(r.integers(len(BETAS)))]
    cfg = ModelConfig(parse_layers(arch, beta), 3, shape)
    p = init_params(cfg, seed)
    for k in p:
        if k.endswith(".b") or k.endswith(".beta"):
            p[k] = 0.1 * r.normal(p[k].shape)
        elif k.endswith(".gamma"):
            p[k] = 1.0 + 0.2 * r.normal(p[k].shape)
        elif k.endswith(".running_mean"):
            p[k] = 0.1 * r.normal(p[k].shape)
        elif k.endswith(".running_var"):
            p[k] = 0.5 + r.uniform(p[k].shape)
    x = r.uniform(shape)
    return cfg, p, x, int(r.integers(3))


def logit(cfg, p, x, c):
    return forward(cfg, p, x)[0][c]


def fd_input_gradient(cfg, p, x, c, h=1e-5):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (logit(cfg, p, xp, c) - logit(cfg, p, xm, c)) / (2 * h)
    return g


def fd_param_gradient(cfg, p, x, c, coords, h=1e-5):
    """Central differences at ``coords``: list of (key, flat index)."""
    out = []
    for k, j in coords:
        q = dict(p)
        a = p[k].copy().ravel()
        a[j] += h
        q[k] = a.reshape(p[k].shape)
        fp = logit(cfg, q, x, c)
        a[j] -= 2 * h
        q[k] = a.reshape(p[k].shape)
        fm = logit(cfg, q, x, c)
        out.append((fp - fm) / (2 * h))
    return np.array(out)


def sample_param_coords(cfg, p, seed, max_coords=150):
    coords = [(k, j) for k in trainable_keys(cfg) for j in range(p[k].size)]
    if len(coords) <= max_coords:
        return coords
    pick = rng_fork(seed, 7).permutation(len(coords))[:max_coords]
    return [coords[i] for i in sorted(pick)]


def rel_err(a, b, floor=None):
    """Elementwise relative error; the denominator never drops below ``floor``.

    The default floor, ``1e-6 * max|a|``, sits above the ~eps/h roundoff of a
    central difference so vanishing coordinates are not judged on noise.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if floor is None:
        floor = max(1e-6 * float(np.max(np.abs(a), initial=0.0)), 1e-12)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
