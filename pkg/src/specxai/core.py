"""Dense float64 array primitives and counter-based random streams.

Arrays are plain ``numpy.ndarray`` objects of dtype float64; the helpers here
add the shape and finiteness checks the rest of the package relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NonFiniteError, ShapeError

MASK64 = (1 << 64) - 1


def as_tensor(x, name: str = "tensor") -> np.ndarray:
    """Return ``x`` as a contiguous float64 array, rejecting NaN/Inf."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    return check_finite(arr, name)


def check_finite(arr: np.ndarray, name: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite values")
    return arr


@dataclass
class RngStream:
    """Philox-backed stream keyed by ``(seed, stream_id)``.

    The 128-bit Philox key is ``stream_id << 64 | seed``, so every pair maps to
    its own sequence and the draws never depend on scheduling order.
    """

    seed: int
    stream_id: int
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.seed = int(self.seed) & MASK64
        self.stream_id = int(self.stream_id) & MASK64
        key = (self.stream_id << 64) | self.seed
        self._gen = np.random.Generator(np.random.Philox(key=key))

    @property
    def counter(self) -> int:
        return int(self._gen.bit_generator.state["state"]["counter"][0])

    def uniform(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def integers(self, high: int, size=None) -> np.ndarray:
        return self._gen.integers(0, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def uint64(self) -> int:
        return int(self._gen.integers(0, 2**64, dtype=np.uint64))


def rng_fork(seed: int, stream_id: int) -> RngStream:
    return RngStream(seed, stream_id)


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return check_finite(a @ b, "matmul output")


def _pad_amount(kh: int, kw: int, padding: str) -> tuple[int, int]:
    if padding == "valid":
        return 0, 0
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError("same padding requires odd kernel sizes")
        return kh // 2, kw // 2
    raise ValueError(f"unknown padding {padding!r}")


def conv2d(x, kernels, padding: str = "same") -> np.ndarray:
    """Cross-correlate ``x`` (C,H,W or N,C,H,W) with ``kernels`` (K,C,kh,kw).

    Zero padding; no kernel flip.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(kernels, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects C,H,W input and K,C,kh,kw kernels, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d channel mismatch: input has {x.shape[1]}, kernels expect {w.shape[1]}")
    out = _correlate(x, w, *_pad_amount(w.shape[2], w.shape[3], padding))
    check_finite(out, "conv2d output")
    return out[0] if single else out


def _correlate(x: np.ndarray, w: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    kh, kw = w.shape[2], w.shape[3]
    if x.shape[2] < kh or x.shape[3] < kw:
        raise ShapeError("conv2d kernel larger than (padded) input")
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))  # N,C,H',W',kh,kw
    return np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)


def conv2d_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray, padding: str):
    """Gradients of a batched ``conv2d`` w.r.t. its input and kernels."""
    kh, kw = w.shape[2], w.shape[3]
    ph, pw = _pad_amount(kh, kw, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    dw = np.tensordot(dy, win, axes=([0, 2, 3], [0, 2, 3]))  # K,C,kh,kw
    # full correlation of dy with the flipped, channel-transposed kernels
    wf = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    dxp = _correlate(dy, np.ascontiguousarray(wf), kh - 1, kw - 1)
    dx = dxp[:, :, ph:ph + x.shape[2], pw:pw + x.shape[3]]
    return np.ascontiguousarray(dx), dw
