"""Datasets: IDX raster files and synthetic Gaussian random fields."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .core import rng_fork
from .errors import DataError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Images as an ``N x C x H x W`` float64 array in [0, 1] plus integer labels."""

    images: np.ndarray
    labels: np.ndarray
    name: str = ""
    num_classes: int | None = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim == 3:
            self.images = self.images[:, None]
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.num_classes is None:
            self.num_classes = int(self.labels.max()) + 1 if len(self.labels) else 0
        elif len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(f"labels outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def shape(self) -> tuple:
        return tuple(self.images.shape[1:])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.images[idx], self.labels[idx], self.name, self.num_classes)

    def split(self, n_first: int) -> tuple["Dataset", "Dataset"]:
        return self.subset(np.arange(n_first)), self.subset(np.arange(n_first, len(self)))


# ---------------------------------------------------------------------------
# IDX
# ---------------------------------------------------------------------------


def _read_idx(path, magic: int, kind: str) -> tuple[tuple[int, ...], bytes]:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8:
        raise FormatError(f"{kind} file {path} is truncated (no header)")
    got = struct.unpack(">I", raw[:4])[0]
    if got != magic:
        raise FormatError(f"{kind} file {path}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    ndim = raw[3]
    hdr = 4 + 4 * ndim
    if len(raw) < hdr:
        raise FormatError(f"{kind} file {path} is truncated (header)")
    dims = struct.unpack(f">{ndim}I", raw[4:hdr])
    need = int(np.prod(dims))
    payload = raw[hdr:]
    if len(payload) < need:
        raise FormatError(f"{kind} file {path} is truncated: {len(payload)} of {need} payload bytes")
    return dims, payload[:need]


def load_idx(images_path, labels_path, name: str | None = None) -> Dataset:
    """Parse big-endian IDX image and label files; pixels are scaled by 1/255."""
    dims, pix = _read_idx(images_path, IDX_IMAGES_MAGIC, "images")
    if len(dims) != 3:
        raise FormatError(f"images file {images_path}: expected 3 dims, got {len(dims)}")
    ldims, lab = _read_idx(labels_path, IDX_LABELS_MAGIC, "labels")
    if ldims[0] != dims[0]:
        raise DataError(f"count mismatch: {dims[0]} images vs {ldims[0]} labels")
    images = np.frombuffer(pix, dtype=np.uint8).reshape(dims).astype(np.float64) / 255.0
    labels = np.frombuffer(lab, dtype=np.uint8).astype(np.int64)
    return Dataset(images[:, None], labels, name or os.path.basename(str(images_path)))


def write_idx(ds: Dataset, images_path, labels_path) -> None:
    """Inverse of :func:`load_idx` for single-channel datasets."""
    if ds.images.shape[1] != 1:
        raise DataError("IDX holds single-channel images only")
    n, _, h, w = ds.images.shape
    pix = np.rint(ds.images[:, 0] * 255.0).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w))
        f.write(pix.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        f.write(ds.labels.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# Gaussian random fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GrfConfig:
    H: int = 32
    W: int = 32
    alpha: float = 2.0
    seed: int = 0
    n: int = 256
    channels: int = 1
    class_rule: str = "template"

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.H < 8 or self.W < 8:
            raise ValueError("GRF images must be at least 8 x 8")
        if self.class_rule not in ("template", "none"):
            raise ValueError(f"unknown class_rule {self.class_rule!r}")


def grf_amplitude(h: int, w: int, alpha: float) -> np.ndarray:
    """``(1 + |k|)^(-alpha/2)`` on the DFT grid, ``|k|`` in cycles per image."""
    ky = np.fft.fftfreq(h)[:, None] * h
    kx = np.fft.fftfreq(w)[None, :] * w
    return (1.0 + np.sqrt(ky ** 2 + kx ** 2)) ** (-alpha / 2.0)


def grf_field(rng, h: int, w: int, alpha: float) -> np.ndarray:
    """One zero-mean field with power spectrum ``(1 + |k|)^-alpha``."""
    noise = rng.normal((h, w))
    return np.fft.ifft2(np.fft.fft2(noise) * grf_amplitude(h, w, alpha)).real


def label_template(h: int, w: int) -> np.ndarray:
    """Fixed one-cycle pattern whose correlation sign defines the class."""
    y = (np.arange(h) + 0.5) / h
    x = (np.arange(w) + 0.5) / w
    return np.cos(2 * np.pi * x)[None, :] + np.cos(2 * np.pi * y)[:, None]


def gen_grf(cfg: GrfConfig) -> Dataset:
    """Synthesize ``cfg.n`` fields, each min-max scaled to [0, 1].

    Image ``i`` is drawn from ``rng_fork(cfg.seed, i)`` so any subset can be
    regenerated independently.  With ``class_rule="template"`` the label is
    1 when the mean-removed image correlates positively with
    :func:`label_template`, else 0.
    """
    imgs = np.empty((cfg.n, cfg.channels, cfg.H, cfg.W))
    for i in range(cfg.n):
        rng = rng_fork(cfg.seed, i)
        for c in range(cfg.channels):
            f = grf_field(rng, cfg.H, cfg.W, cfg.alpha)
            lo, hi = f.min(), f.max()
            imgs[i, c] = (f - lo) / (hi - lo) if hi > lo else 0.5
    if cfg.class_rule == "template":
        t = label_template(cfg.H, cfg.W)
        centred = imgs.mean(axis=1) - imgs.mean(axis=(1, 2, 3))[:, None, None]
        labels = (np.einsum("nhw,hw->n", centred, t) > 0).astype(np.int64)
    else:
        labels = np.zeros(cfg.n, dtype=np.int64)
    return Dataset(imgs, labels, f"grf{cfg.H}x{cfg.W}-a{cfg.alpha:g}-s{cfg.seed}", num_classes=2)
