"""Per-channel discrete Fourier transform and band-limited magnitude features.

The transform is a recursive mixed-radix Cooley-Tukey FFT that works for any
length: it splits off the smallest prime factor at each level and falls back
to a direct sum for prime lengths. It operates on the last axis and
broadcasts over all leading axes.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DEFAULT_BAND = (3.0, 45.0)


@dataclass(frozen=True)
class Spectrum:
    bins: np.ndarray
    resolution_hz: float

    @property
    def freqs(self):
        return np.arange(len(self.bins)) * self.resolution_hz


@dataclass(frozen=True)
class SpectralFeatures:
    matrix: np.ndarray  # (channels, B)
    band_hz: tuple
    bin_freqs: np.ndarray


def _smallest_factor(n):
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n


@lru_cache(maxsize=None)
def _dft_matrix(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * (np.outer(k, k) % n) / n)


@lru_cache(maxsize=None)
def _twiddles(p, m):
    n = p * m
    return np.exp(-2j * np.pi * (np.outer(np.arange(p), np.arange(m)) % n) / n)


def fft(x):
    """Complex DFT along the last axis, ``X[f] = sum_t x[t] exp(-2 pi i f t / n)``."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    if n <= 1:
        return x.copy()
    p = _smallest_factor(n)
    if p == n:
        return x @ _dft_matrix(n).T
    m = n // p
    lead = x.shape[:-1]
    # sub-sequence r holds x[r::p]
    sub = np.swapaxes(x.reshape(*lead, m, p), -1, -2)
    g = fft(sub) * _twiddles(p, m)
    out = np.einsum("qr,...rk->...qk", _dft_matrix(p), g)
    return out.reshape(*lead, n)


def rfft(x):
    """Non-negative-frequency half of the DFT of real input, bins 0..n//2."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    out = fft(x)[..., : n // 2 + 1]
    out[..., 0] = out[..., 0].real
    if n % 2 == 0:
        out[..., -1] = out[..., -1].real
    return out


def irfft(bins, n):
    """Real signal of length ``n`` whose half-spectrum is ``bins`` (inverse of ``rfft``)."""
    bins = np.asarray(bins, dtype=complex)
    half = n // 2 + 1
    full = np.zeros(bins.shape[:-1] + (n,), dtype=complex)
    full[..., :half] = bins[..., :half]
    # Hermitian mirror of bins 1 .. ceil(n/2)-1
    mirror = np.conj(bins[..., 1:(n + 1) // 2])[..., ::-1]
    full[..., half:] = mirror
    return np.real(np.conj(fft(np.conj(full)))) / n


def naive_dft(x):
    """Direct O(n^2) evaluation of the DFT sum; used as a cross-check."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    t = np.arange(n)
    return np.array([np.sum(x * np.exp(-2j * np.pi * f * t / n)) for f in range(n)])


def dft_real(x, rate=1.0):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("dft_real needs a 1-D signal with at least 2 samples")
    return Spectrum(rfft(x), rate / x.size)


def band_bins(n_samples, rate, band_hz):
    lo, hi = band_hz
    if not (0 <= lo < hi <= rate / 2):
        raise ValueError(f"band {band_hz} must satisfy 0 <= lo < hi <= Nyquist ({rate / 2} Hz)")
    freqs = np.arange(n_samples // 2 + 1) * (rate / n_samples)
    # tolerance guards bins that land exactly on an edge
    eps = 1e-9 * rate / n_samples
    keep = np.flatnonzero((freqs >= lo - eps) & (freqs <= hi + eps))
    return keep, freqs[keep]


def band_magnitudes(data, rate, band_hz=DEFAULT_BAND):
    """``|DFT|`` of every row of ``data`` (any leading shape), restricted to the band."""
    data = np.asarray(data, dtype=float)
    keep, freqs = band_bins(data.shape[-1], rate, band_hz)
    return np.abs(rfft(data)[..., keep]), freqs


def magnitude_features(epoch, band_hz=DEFAULT_BAND):
    mags, freqs = band_magnitudes(epoch.data, epoch.rate, band_hz)
    return SpectralFeatures(mags, tuple(float(b) for b in band_hz), freqs)
