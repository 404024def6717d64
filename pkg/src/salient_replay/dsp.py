"""Signal kernels: Kaiser FIR design, zero-phase FIR filtering, analytic
envelopes, Teager-Kaiser energy, centered smoothing and Welch spectra.

Functions operate along the last axis, so a (C, N) array is filtered channel
by channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

DEFAULT_BETA = 8.6
DEFAULT_TAPS_PER_BRANCH = 10


@dataclass(frozen=True, eq=False)
class FirKernel:
    """Odd-length symmetric FIR kernel.

    ``cutoff`` (and ``low_cutoff`` for band-pass kernels) are in cycles/sample.
    """

    taps: np.ndarray
    cutoff: float
    beta: float
    low_cutoff: float = 0.0

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64).ravel().copy()
        if taps.size % 2 != 1:
            raise ValueError(f"kernel length must be odd, got {taps.size}")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    def __len__(self):
        return int(self.taps.size)

    @property
    def delay(self) -> int:
        """Integer group delay (T - 1) / 2."""
        return (self.taps.size - 1) // 2

    def response(self, freqs) -> np.ndarray:
        """Magnitude of the DTFT at ``freqs`` (cycles/sample)."""
        freqs = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
        k = np.arange(self.taps.size) - self.delay
        # symmetric taps -> purely real zero-phase response
        return np.abs(np.cos(2 * np.pi * np.outer(freqs, k)) @ self.taps)


def _windowed_sinc(cutoff: float, n_taps: int, beta: float) -> np.ndarray:
    k = np.arange(n_taps) - (n_taps - 1) / 2
    return 2 * cutoff * np.sinc(2 * cutoff * k) * np.kaiser(n_taps, beta)


def lowpass_length(cutoff: float, taps_per_branch: int = DEFAULT_TAPS_PER_BRANCH) -> int:
    """Tap count 2*ceil(taps_per_branch * 0.5/cutoff) + 1.

    For a resampling kernel with cutoff 0.5/max(u, d) this is
    2*ceil(taps_per_branch * max(u, d)) + 1.
    """
    half = math.ceil(taps_per_branch * 0.5 / cutoff - 1e-9)
    return 2 * half + 1


def design_lowpass(
    cutoff: float,
    beta: float = DEFAULT_BETA,
    taps_per_branch: int = DEFAULT_TAPS_PER_BRANCH,
) -> FirKernel:
    """Kaiser-windowed sinc low-pass with unit DC gain.

    Parameters
    ----------
    cutoff : float
        -6 dB point in cycles/sample, strictly inside (0, 0.5).
    beta : float
        Kaiser shape parameter. 8.6 gives roughly 85 dB of stopband rejection.
    taps_per_branch : int
        Kernel half-length measured in units of 0.5/cutoff samples.
    """
    if not 0 < cutoff < 0.5:
        raise ValueError(f"cutoff must lie in (0, 0.5) cycles/sample, got {cutoff}")
    if taps_per_branch < 4:
        raise ValueError(f"taps_per_branch must be >= 4, got {taps_per_branch}")
    if beta < 0:
        raise ValueError(f"kaiser beta must be >= 0, got {beta}")
    taps = _windowed_sinc(cutoff, lowpass_length(cutoff, taps_per_branch), beta)
    return FirKernel(taps / taps.sum(), cutoff, beta)


def design_bandpass(low: float, high: float, n_taps: int, beta: float = DEFAULT_BETA) -> FirKernel:
    """Band-pass as the difference of two equal-length unit-DC low-passes.

    ``low`` and ``high`` are in cycles/sample. DC gain is exactly zero.
    """
    if not 0 < low < high < 0.5:
        raise ValueError(f"band edges must satisfy 0 < low < high < 0.5, got ({low}, {high})")
    if n_taps < 3 or n_taps % 2 == 0:
        raise ValueError(f"n_taps must be odd and >= 3, got {n_taps}")
    hi = _windowed_sinc(high, n_taps, beta)
    lo = _windowed_sinc(low, n_taps, beta)
    return FirKernel(hi / hi.sum() - lo / lo.sum(), high, beta, low_cutoff=low)


def _causal(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    h = taps.reshape((1,) * (x.ndim - 1) + (-1,))
    return signal.oaconvolve(x, h, axes=-1)[..., : x.shape[-1]]


def filtfilt(x, kernel: FirKernel) -> np.ndarray:
    """Forward-backward FIR filtering with reflection padding of len(kernel)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    t = len(kernel)
    if n <= 3 * t:
        raise ValueError(f"signal length {n} too short for a {t}-tap filtfilt (need N > {3 * t})")
    pad = [(0, 0)] * (x.ndim - 1) + [(t, t)]
    xp = np.pad(x, pad, mode="reflect")
    y = _causal(xp, kernel.taps)
    y = _causal(y[..., ::-1], kernel.taps)[..., ::-1]
    return y[..., t : t + n]


def hilbert_envelope(x) -> np.ndarray:
    """|x + jH{x}| via the FFT analytic signal."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < 8:
        raise ValueError(f"need at least 8 samples for an envelope, got {n}")
    spectrum = np.fft.fft(x, axis=-1)
    h = np.zeros(n)
    h[0] = 1.0
    if n % 2 == 0:
        h[n // 2] = 1.0
        h[1 : n // 2] = 2.0
    else:
        h[1 : (n + 1) // 2] = 2.0
    return np.abs(np.fft.ifft(spectrum * h, axis=-1))


def teager_kaiser(x) -> np.ndarray:
    """Half-wave rectified x[n]^2 - x[n-1]x[n+1]; both endpoints are 0."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 3:
        raise ValueError(f"Teager-Kaiser needs at least 3 samples, got {x.shape[-1]}")
    out = np.zeros_like(x)
    out[..., 1:-1] = x[..., 1:-1] ** 2 - x[..., :-2] * x[..., 2:]
    return np.maximum(out, 0.0)


def moving_average(x, window: int) -> np.ndarray:
    """Centered running mean; windows shrink at the edges instead of padding."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    window = int(window)
    if not 1 <= window <= n:
        raise ValueError(f"window must be in [1, {n}], got {window}")
    if window == 1:
        return x.copy()
    left = (window - 1) // 2
    right = window // 2
    csum = np.concatenate([np.zeros(x.shape[:-1] + (1,)), np.cumsum(x, axis=-1)], axis=-1)
    idx = np.arange(n)
    lo = np.maximum(idx - left, 0)
    hi = np.minimum(idx + right, n - 1) + 1
    return (csum[..., hi] - csum[..., lo]) / (hi - lo)


def welch_psd(x, fs: float):
    """Hann-windowed Welch estimate, segment min(256, N), 50% overlap.

    Returns ``(freqs, power)``; power is a one-sided density.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < 16:
        raise ValueError(f"Welch PSD needs at least 16 samples, got {n}")
    nperseg = min(256, n)
    return signal.welch(
        x, fs=fs, window="hann", nperseg=nperseg, noverlap=nperseg // 2, average="mean", axis=-1
    )
