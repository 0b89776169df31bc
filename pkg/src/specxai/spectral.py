"""Spatial power spectra of saliency rasters and their Expected Frequency.

Pipeline per map: rank-based CDF normalisation -> mean-removed 2D power
spectrum -> annular (radial) average normalised to a distribution over
frequency -> power-weighted mean frequency in cycles/pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DataError, DegenerateSpectrumError, ShapeError


@dataclass
class RadialSpectrum:
    freqs: np.ndarray  # cycles/pixel, ascending, 0 .. 0.5
    power: np.ndarray
    normalized: bool = True
    degenerate: bool = False

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=np.float64)
        self.power = np.asarray(self.power, dtype=np.float64)
        if self.freqs.shape != self.power.shape:
            raise ShapeError("freqs and power must have equal length")


@dataclass
class EFReport:
    method: str
    ef_vanilla: float
    ef_method: float
    n_images: int

    @property
    def delta_ef(self) -> float:
        return delta_ef(self.ef_vanilla, self.ef_method)

    def row(self) -> dict:
        return {"method": self.method, "ef": self.ef_method, "delta_ef": self.delta_ef, "n_images": self.n_images}


def _values(m) -> np.ndarray:
    return np.asarray(getattr(m, "values", m), dtype=np.float64)


def cdf_normalize(m) -> np.ndarray:
    """Replace each pixel by its empirical-CDF position ``(rank - 0.5) / N``.

    Ties share their average rank, so a constant map becomes all 0.5 and the
    output depends on the input only through its ordering.
    """
    v = _values(m)
    if v.size < 2:
        raise ShapeError("cdf_normalize needs at least two pixels")
    r = rankdata(v, method="average").reshape(v.shape)
    return (r - 0.5) / v.size


def power_spectrum2d(m) -> np.ndarray:
    """``|DFT2(m - mean(m))|^2 / (H*W)``; the DC bin is therefore zero."""
    v = _values(m)
    if v.ndim != 2 or min(v.shape) < 2:
        raise ShapeError(f"power_spectrum2d needs an H x W raster with H, W >= 2, got {v.shape}")
    X = np.fft.fft2(v - v.mean())
    return (X.real ** 2 + X.imag ** 2) / v.size


def radial_bins(h: int, w: int) -> tuple[np.ndarray, int]:
    """Integer annulus index of every DFT bin and the largest kept radius.

    Frequencies are scaled so that Nyquist along each axis maps to radius
    ``floor(min(h, w) / 2)``; rounding is half-to-even.
    """
    rmax = min(h, w) // 2
    fy = np.fft.fftfreq(h)[:, None] / 0.5
    fx = np.fft.fftfreq(w)[None, :] / 0.5
    rho = np.sqrt(fy ** 2 + fx ** 2) * rmax
    return np.rint(rho).astype(np.int64), rmax


def radial_average(spec2d, normalize: bool = True) -> RadialSpectrum:
    """Mean power in integer-radius annuli ``r = 0 .. floor(min(H, W)/2)``.

    Bins beyond the largest radius (the corners) are dropped.  An all-zero
    spectrum is returned flagged ``degenerate`` rather than normalised.
    """
    s = np.asarray(spec2d, dtype=np.float64)
    r, rmax = radial_bins(*s.shape)
    keep = r <= rmax
    sums = np.bincount(r[keep], weights=s[keep], minlength=rmax + 1)
    counts = np.bincount(r[keep], minlength=rmax + 1)
    power = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    freqs = np.arange(rmax + 1) / (2.0 * rmax)
    total = power.sum()
    if total <= 0:
        return RadialSpectrum(freqs, power, normalized=False, degenerate=True)
    if normalize:
        power = power / total
    return RadialSpectrum(freqs, power, normalized=normalize)


def expected_frequency(rs: RadialSpectrum) -> float:
    """Power-weighted mean frequency of a normalised spectrum."""
    if rs.degenerate or rs.power.sum() <= 0:
        raise DegenerateSpectrumError("spectrum has no power; expected frequency is undefined")
    p = rs.power if rs.normalized else rs.power / rs.power.sum()
    return float(np.dot(rs.freqs, p))


def map_spectrum(m) -> RadialSpectrum:
    """Normalised radial spectrum of one CDF-normalised saliency map."""
    return radial_average(power_spectrum2d(cdf_normalize(m)))


def map_ef(m) -> float:
    return expected_frequency(map_spectrum(m))


def batch_ef_stats(maps: Sequence) -> tuple[float, int, int]:
    """``(mean EF, maps used, degenerate maps skipped)`` over a batch of equal-size maps.

    A map with no power after CDF normalisation (e.g. a constant GradCAM
    raster) has no defined EF and is left out of the mean.
    """
    maps = list(maps)
    if not maps:
        raise DataError("batch_ef needs at least one map")
    shape = _values(maps[0]).shape
    efs, skipped = [], 0
    for m in maps:
        if _values(m).shape != shape:
            raise DataError(f"mixed map sizes in batch: {shape} vs {_values(m).shape}")
        try:
            efs.append(map_ef(m))
        except DegenerateSpectrumError:
            skipped += 1
    if not efs:
        raise DegenerateSpectrumError(f"all {len(maps)} maps are constant; batch EF is undefined")
    return math.fsum(efs) / len(efs), len(efs), skipped


def batch_ef(maps: Sequence) -> float:
    """Mean of per-image Expected Frequency; constant maps are skipped."""
    return batch_ef_stats(maps)[0]


def batch_spectrum(maps: Iterable) -> RadialSpectrum:
    """Average of the per-image normalised radial spectra."""
    specs = [map_spectrum(m) for m in maps]
    if not specs:
        raise DataError("batch_spectrum needs at least one map")
    return RadialSpectrum(specs[0].freqs, np.mean([s.power for s in specs], axis=0))


def delta_ef(ef_vanilla: float, ef_method: float) -> float:
    """Explanation-gap proxy: absolute change in Expected Frequency."""
    return abs(float(ef_vanilla) - float(ef_method))


def tail_slope(rs: RadialSpectrum, band: tuple[float, float]) -> float:
    """Least-squares slope of ``log(power)`` against ``log(freq)`` inside ``band``."""
    lo, hi = band
    sel = (rs.freqs >= lo) & (rs.freqs <= hi) & (rs.freqs > 0)
    if sel.sum() < 5:
        raise ValueError(f"tail_slope needs >= 5 bins in band {band}, found {int(sel.sum())}")
    p = rs.power[sel]
    if np.any(p <= 0):
        raise ValueError("tail_slope band contains a zero-power bin")
    slope, _ = np.polyfit(np.log(rs.freqs[sel]), np.log(p), 1)
    return float(slope)
