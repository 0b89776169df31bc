"""Numerical bench for kernel-spectral claims.

Closed-form power spectral densities of Laplace and Gaussian kernels, the
covariance shift a Gaussian-smoothed activation induces in the
tau-transform, empirical NTK Gram matrices, the trajectory-intersection
experiment, and the b-scaling of the band-limited frequency integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .net import Model, flatten_params, param_gradient, trainable_keys
from .spectral import RadialSpectrum


@dataclass(frozen=True)
class KernelSpec:
    family: str  # "laplace" | "gaussian"
    b: float

    def __post_init__(self):
        if self.family not in ("laplace", "gaussian"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not self.b > 0:
            raise ValueError("kernel scale b must be > 0")

    def __call__(self, d):
        """``k(d)``; both families have ``k(0) = 1``."""
        d = np.asarray(d, dtype=np.float64)
        if self.family == "laplace":
            return np.exp(-np.abs(d) / self.b)
        return np.exp(-(d / self.b) ** 2)

    def derivative(self, d):
        """``dk/dd``; the Laplace derivative jumps at 0 (taken as 0 there)."""
        d = np.asarray(d, dtype=np.float64)
        if self.family == "laplace":
            return -np.sign(d) * np.exp(-np.abs(d) / self.b) / self.b
        return -2.0 * d / self.b ** 2 * np.exp(-(d / self.b) ** 2)

    def psd(self, w):
        return laplace_psd(w, self.b) if self.family == "laplace" else gaussian_psd(w, self.b)


def laplace_psd(w, b: float):
    """``2b / (1 + b^2 w^2)``."""
    if not b > 0:
        raise ValueError("b must be > 0")
    w = np.asarray(w, dtype=np.float64)
    out = 2.0 * b / (1.0 + (b * w) ** 2)
    return out if out.ndim else float(out)


def gaussian_psd(w, b: float):
    """Squared Fourier transform of ``exp(-(d/b)^2)``: ``pi b^2 exp(-b^2 w^2 / 2)``."""
    if not b > 0:
        raise ValueError("b must be > 0")
    w = np.asarray(w, dtype=np.float64)
    out = math.pi * b * b * np.exp(-0.5 * (b * w) ** 2)
    return out if out.ndim else float(out)


def tau_cov_shift(sigma2: float, c: float, v: float) -> np.ndarray:
    """Covariance of the pre-activation pair after Gaussian smoothing.

    ``v`` is the variance the smoothing kernel adds to each diagonal entry;
    a smoothing Gaussian of precision ``beta`` corresponds to ``v = 1/beta``.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be > 0")
    if not -1.0 <= c <= 1.0:
        raise ValueError("c must lie in [-1, 1]")
    if v < 0:
        raise ValueError("v must be >= 0")
    q = np.array([[sigma2 + v, c * sigma2], [c * sigma2, sigma2 + v]])
    assert np.linalg.eigvalsh(q).min() >= -1e-12 * q.max()
    return q


def effective_correlation(q: np.ndarray) -> float:
    return float(q[0, 1] / math.sqrt(q[0, 0] * q[1, 1]))


# ---------------------------------------------------------------------------
# empirical NTK
# ---------------------------------------------------------------------------


def param_jacobian(model: Model, xs, class_index: int = 0) -> np.ndarray:
    """Rows are flattened parameter gradients of one logit, one row per input."""
    keys = trainable_keys(model.cfg)
    return np.stack([flatten_params(param_gradient(model.cfg, model.params, x, class_index), keys) for x in xs])


def empirical_ntk(model: Model, xs, class_index: int = 0) -> np.ndarray:
    """Gram matrix of parameter-gradient inner products over all parameters."""
    xs = list(xs)
    if len(xs) < 2:
        raise ValueError("empirical_ntk needs at least two inputs")
    J = param_jacobian(model, xs, class_index)
    K = J @ J.T
    return 0.5 * (K + K.T)


def eigen_decay(gram) -> np.ndarray:
    """Eigenvalues in descending order, divided by the largest, clipped at 0."""
    G = np.asarray(gram, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] != G.shape[1] or not np.allclose(G, G.T, rtol=0, atol=1e-12 * max(1.0, np.abs(G).max())):
        raise ValueError("eigen_decay needs a symmetric matrix")
    ev = np.linalg.eigvalsh(G)[::-1]
    top = ev[0]
    if top <= 0:
        raise ValueError("largest eigenvalue is not positive")
    return np.clip(ev / top, 0.0, None)


def cutoff_index(decay: np.ndarray, threshold: float = 1e-3) -> int:
    """First index where the normalised eigenvalue drops below ``threshold``."""
    below = np.nonzero(decay < threshold)[0]
    return int(below[0]) if len(below) else len(decay)


# ---------------------------------------------------------------------------
# trajectory experiment
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Samples over ``tau in [0, 1)`` at ``N`` uniform points (N a power of two >= 64)."""

    samples: np.ndarray
    fn: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        n = len(self.samples)
        if self.samples.ndim != 1 or n < 64 or n & (n - 1):
            raise ValueError("trajectory needs N >= 64 samples with N a power of two")

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def tau(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    def at(self, t: np.ndarray) -> np.ndarray:
        """Value at arbitrary ``t``: exact when built from a function, else periodic linear interpolation."""
        if self.fn is not None:
            return np.asarray(self.fn(t), dtype=np.float64)
        return np.interp(t, self.tau, self.samples, period=1.0)

    @classmethod
    def from_function(cls, fn: Callable, n: int) -> "Trajectory":
        return cls(fn(np.arange(n) / n), fn)

    def shifted(self, delta: Callable) -> "Trajectory":
        """``x(tau) - delta(tau)``, keeping exact evaluation when available."""
        base = self.at
        return Trajectory.from_function(lambda t: base(t) - delta(t), self.n)


def smooth_trajectory(n: int, amps=(1.0, 0.5, 0.25), freqs=(1, 2, 4), phases=(0.0, 1.0, 2.0), offset=0.0) -> Trajectory:
    """Sum of low-frequency sinusoids: a highly autocorrelated 1D signal."""
    def fn(t):
        return offset + sum(a * np.sin(2 * np.pi * f * t + p) for a, f, p in zip(amps, freqs, phases))
    return Trajectory.from_function(fn, n)


def trajectory_gradient_spectrum(kernel: KernelSpec, x_t: Trajectory, x_e: Trajectory, oversample: int = 16,
                                 taper: bool = True) -> RadialSpectrum:
    """Normalised power spectrum of ``g(tau) = k'(x_e(tau) - x_t(tau))``.

    Both trajectories are evaluated on a grid ``oversample`` times finer
    (exactly if they carry a function, else by periodic linear
    interpolation) before ``g`` is formed, so a jump in
    ``g`` keeps its ``1/omega`` amplitude decay up to the coarse Nyquist
    frequency instead of folding back.  With ``taper`` the product with
    ``sin^2(pi tau)`` (smooth and periodic) hides the wrap-around step a
    non-periodic difference would otherwise add.  Bins are ``k / N`` cycles
    per sample, ``k = 0 .. N/2``; DC is removed.
    """
    if x_t.n != x_e.n:
        raise ValueError("trajectories must have the same length")
    n = x_t.n
    m = n * oversample
    fine = np.arange(m) / m
    d = x_e.at(fine) - x_t.at(fine)
    g = kernel.derivative(d)
    if taper:
        g = g * np.sin(np.pi * fine) ** 2
    G = np.fft.rfft(g - g.mean())[: n // 2 + 1]
    power = (G.real ** 2 + G.imag ** 2) / m
    power[0] = 0.0
    total = power.sum()
    freqs = np.arange(n // 2 + 1) / n
    if total <= 0:
        return RadialSpectrum(freqs, power, normalized=False, degenerate=True)
    return RadialSpectrum(freqs, power / total)


def count_intersections(x_t: Trajectory, x_e: Trajectory) -> int:
    d = x_t.samples - x_e.samples
    s = np.sign(d)
    return int(np.sum(s[:-1] * s[1:] < 0))


def octave_slope(rs: RadialSpectrum, lo_frac: float = 0.5, n_sub: int = 8, floor: float = 1e-26) -> float:
    """Log-log slope over the top octave ``[f_max * lo_frac, f_max]``.

    Power is first averaged in ``n_sub`` log-spaced sub-bands, which washes
    out interference fringes between several jumps.  Sub-bands whose mean
    power sits below ``floor`` (relative to the spectrum peak) are at
    float64 roundoff and are dropped; if fewer than two remain the decay is
    steeper than can be resolved and ``-inf`` is returned.
    """
    fmax = rs.freqs[-1]
    edges = np.geomspace(lo_frac * fmax, fmax, n_sub + 1)
    edges[-1] *= 1 + 1e-12
    peak = rs.power.max()
    fc, pc = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (rs.freqs >= a) & (rs.freqs < b)
        if not sel.any():
            continue
        p = rs.power[sel].mean()
        if p > floor * peak:
            fc.append(math.sqrt(a * b))
            pc.append(p)
    if len(fc) < 2:
        return -math.inf
    slope, _ = np.polyfit(np.log(fc), np.log(pc), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# band integrals and b-scaling
# ---------------------------------------------------------------------------


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float = 1e-9, max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        diff = left + right - whole
        if depth <= 0 or abs(diff) <= 15.0 * tol:
            return left + right + diff / 15.0
        return rec(a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(m, b, fm, frm, fb, right, tol / 2.0, depth - 1)

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return rec(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


def integrate_real_line(f: Callable[[float], float], tol: float = 1e-9) -> float:
    """``int_R f`` via ``w = tan(t)`` on ``(-pi/2, pi/2)``."""
    eps = 1e-12

    def g(t):
        c = math.cos(t)
        return f(math.tan(t)) / (c * c)

    return adaptive_simpson(g, -math.pi / 2 + eps, math.pi / 2 - eps, tol)


def band_moment(b: float, band: tuple[float, float], order: int = 1, tol: float = 1e-12) -> float:
    """``int_l^h w^order * laplace_psd(w, b) dw`` by adaptive Simpson."""
    lo, hi = band
    return adaptive_simpson(lambda w: w ** order * laplace_psd(w, b), lo, hi, tol * max(1.0, hi - lo))


def band_ef(b: float, band: tuple[float, float], normalized: bool = False) -> float:
    """Expected frequency of the Laplace PSD restricted to ``band``.

    Unnormalised (default) this is ``int w S dw``; normalised it is divided by
    ``int S dw``.
    """
    num = band_moment(b, band, 1)
    return num / band_moment(b, band, 0) if normalized else num


def delta_ef_kernel(b: float, band: tuple[float, float], b_ref: float | None = None) -> float:
    """``|EF(b) - EF(reference)|`` over the band.

    ``b_ref=None`` takes the reference to be a surrogate that suppresses the
    whole band (EF 0); a finite ``b_ref`` compares against that kernel.
    """
    ref = 0.0 if b_ref is None else band_ef(b_ref, band)
    return abs(band_ef(b, band) - ref)


def gap_kernel(b: float, band: tuple[float, float]) -> float:
    """Band-limited gradient-gap integral ``int w^2 S dw``."""
    return band_moment(b, band, 2)


@dataclass
class ScalingResult:
    b: np.ndarray
    delta_ef: np.ndarray
    gap: np.ndarray
    slope_small_b: float
    slope_large_b: float
    gap_slope_small_b: float
    gap_slope_large_b: float


def _loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def gap_scaling(b_grid: Sequence[float], band: tuple[float, float], b_ref: float | None = None,
                tail_points: int | None = None) -> ScalingResult:
    """Fit log-log slopes of the band gap proxies at both ends of ``b_grid``.

    The grid must reach three decades below and above ``1/sqrt(l*h)``.
    """
    lo, hi = band
    if not 0 < lo < hi:
        raise ValueError("band must satisfy 0 < l < h")
    b = np.sort(np.asarray(b_grid, dtype=np.float64))
    centre = 1.0 / math.sqrt(lo * hi)
    if b[0] > centre * 1e-3 * (1 + 1e-9) or b[-1] < centre * 1e3 * (1 - 1e-9):
        raise ValueError("b_grid must span >= 3 decades on each side of 1/sqrt(l*h)")
    d = np.array([delta_ef_kernel(x, band, b_ref) for x in b])
    g = np.array([gap_kernel(x, band) for x in b])
    k = tail_points or max(3, len(b) // 8)
    return ScalingResult(
        b, d, g,
        _loglog_slope(b[:k], d[:k]), _loglog_slope(b[-k:], d[-k:]),
        _loglog_slope(b[:k], g[:k]), _loglog_slope(b[-k:], g[-k:]),
    )
