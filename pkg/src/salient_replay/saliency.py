"""Saliency trace, robust peak threshold and the coverage-capped protected set."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import dsp
from .types import ProtectedSet, Segment

MAD_TO_SIGMA = 1.4826
BANDPASS_SECONDS = 1.0  # band-pass kernel half-length


@dataclass(frozen=True)
class SaliencyConfig:
    """Saliency parameters. Times are in seconds, converted with the segment's Fs."""

    bands: tuple = ((0.5, 4.0), (11.0, 16.0))
    weight_stat: str = "median"  # "median" or "trimmed"
    trim: float = 0.1
    top_k: int = 2
    gamma: float = 0.3
    kappa: float = 2.5
    rho: float = 0.75
    phi: float = 0.05
    smooth_window: float = 0.5
    stride: int = 5
    fs: float | None = None  # nominal rate of the preset, informational
    name: str = "custom"

    def __post_init__(self):
        bands = tuple((float(lo), float(hi)) for lo, hi in self.bands)
        object.__setattr__(self, "bands", bands)
        if not bands:
            raise ValueError("at least one band is required")
        for lo, hi in bands:
            if not 0 < lo < hi:
                raise ValueError(f"band ({lo}, {hi}) must satisfy 0 < low < high")
        if self.weight_stat not in ("median", "trimmed"):
            raise ValueError(f"weight_stat must be 'median' or 'trimmed', got {self.weight_stat!r}")
        if not 0 <= self.trim < 0.5:
            raise ValueError(f"trim fraction must be in [0, 0.5), got {self.trim}")
        if not 1 <= self.top_k <= len(bands):
            raise ValueError(f"top_k must be in [1, {len(bands)}], got {self.top_k}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.rho < 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if not 0 < self.phi < 1:
            raise ValueError(f"phi must be in (0, 1), got {self.phi}")
        if self.smooth_window <= 0:
            raise ValueError(f"smooth_window must be > 0, got {self.smooth_window}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")

    def check_rate(self, fs: float) -> None:
        for lo, hi in self.bands:
            if hi >= fs / 2:
                raise ValueError(f"band ({lo}, {hi}) Hz reaches Nyquist at Fs={fs} Hz")

    def window_samples(self, fs: float, n: int) -> int:
        return int(min(max(1, math.floor(self.smooth_window * fs)), n))

    def rho_samples(self, fs: float) -> int:
        return int(round(self.rho * fs))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "fs": self.fs,
            "bands": [list(b) for b in self.bands],
            "weight_stat": self.weight_stat,
            "trim": self.trim,
            "top_k": self.top_k,
            "gamma": self.gamma,
            "kappa": self.kappa,
            "rho": self.rho,
            "phi": self.phi,
            "smooth_window": self.smooth_window,
            "stride": self.stride,
        }


# rho: midpoint of the recommended range for each dataset
PRESETS = {
    "isruc": SaliencyConfig(
        bands=((0.5, 4.0), (11.0, 16.0)), weight_stat="median", top_k=2, gamma=0.3,
        phi=0.05, rho=0.75, smooth_window=0.5, fs=100.0, name="isruc",
    ),
    "faced": SaliencyConfig(
        bands=((0.5, 4.0), (4.0, 8.0), (8.0, 13.0), (13.0, 30.0), (30.0, 45.0)),
        weight_stat="median", top_k=3, gamma=0.1, phi=0.10, rho=0.75, smooth_window=0.5,
        fs=250.0, name="faced",
    ),
    "physionet-mi": SaliencyConfig(
        bands=((6.0, 9.0), (8.0, 13.0), (13.0, 30.0)), weight_stat="trimmed", trim=0.1,
        top_k=2, gamma=0.3, phi=0.10, rho=0.3, smooth_window=0.1, fs=160.0,
        name="physionet-mi",
    ),
}


def get_preset(name: str, **overrides) -> SaliencyConfig:
    try:
        cfg = PRESETS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None
    return replace(cfg, **overrides) if overrides else cfg


@dataclass(frozen=True, eq=False)
class SaliencyTrace:
    values: np.ndarray
    threshold: float = float("nan")
    peak_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    weights: np.ndarray | None = None
    protected: ProtectedSet | None = None


def bandpass_length(fs: float, n: int) -> int:
    """Odd band-pass tap count: about 2 s of kernel, shortened so that N > 3T."""
    half = int(round(BANDPASS_SECONDS * fs))
    half = min(half, ((n - 1) // 3 - 1) // 2)
    if half < 1:
        raise ValueError(f"segment of {n} samples is too short for band-pass filtering")
    return 2 * half + 1


def band_power(segment: Segment, band, window: int) -> np.ndarray:
    """Channel-averaged, smoothed Hilbert envelope of the zero-phase band-passed signal."""
    lo, hi = band
    fs = segment.fs
    if not 0 < lo < hi < fs / 2:
        raise ValueError(f"band ({lo}, {hi}) Hz invalid for Fs={fs} Hz")
    kernel = dsp.design_bandpass(lo / fs, hi / fs, bandpass_length(fs, segment.n))
    env = dsp.hilbert_envelope(dsp.filtfilt(segment.data, kernel))
    return dsp.moving_average(env.mean(axis=0), window)


def _robust_stat(x: np.ndarray, config: SaliencyConfig) -> float:
    if config.weight_stat == "median":
        return float(np.median(x))
    return float(stats.trim_mean(x, config.trim))


def band_weights(powers: np.ndarray, config: SaliencyConfig) -> np.ndarray:
    """Top-K robust statistics normalized to sum 1; other bands get 0.

    Returns all zeros when every statistic is zero.
    """
    stat = np.array([_robust_stat(p, config) for p in powers])
    weights = np.zeros(len(stat))
    # stable sort keeps configured band order among equal statistics
    top = np.argsort(-stat, kind="stable")[: config.top_k]
    total = stat[top].sum()
    if total > 0:
        weights[top] = stat[top] / total
    return weights


def transient_energy(segment: Segment, window: int) -> np.ndarray:
    """Per-channel rectified TK energy, smoothed, then averaged across channels."""
    return dsp.moving_average(dsp.teager_kaiser(segment.data), window).mean(axis=0)


def saliency_trace(segment: Segment, config: SaliencyConfig, return_weights: bool = False):
    """S[n] = sum_b w_b Pow_b[n] + gamma * TK[n]."""
    config.check_rate(segment.fs)
    window = config.window_samples(segment.fs, segment.n)
    powers = np.stack([band_power(segment, b, window) for b in config.bands])
    weights = band_weights(powers, config)
    if not weights.any():
        values = np.zeros(segment.n)
    else:
        values = weights @ powers
        if config.gamma > 0:
            values = values + config.gamma * transient_energy(segment, window)
        values = np.maximum(values, 0.0)
    return (values, weights) if return_weights else values


def robust_threshold(values, kappa: float) -> float:
    """Med(S) + kappa * 1.4826 * MAD(S).

    A zero MAD falls back to the sample standard deviation; a constant trace
    gives its own value, so nothing strictly exceeds it.
    """
    s = np.asarray(values, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("cannot threshold an empty trace")
    med = float(np.median(s))
    scale = MAD_TO_SIGMA * float(np.median(np.abs(s - med)))
    if scale == 0:
        # a constant trace has exact zero spread; np.std can round above it
        if s.size < 2 or np.all(s == s[0]):
            return med
        scale = float(np.std(s, ddof=1))
    return med + kappa * scale


def detect_peaks(values, threshold: float, stride: int = 1) -> np.ndarray:
    """Local maxima on the grid 0, s, 2s, ... that strictly exceed ``threshold``.

    A grid point must be >= both grid neighbors, so every point of a flat
    plateau is reported.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    s = np.asarray(values, dtype=np.float64).ravel()
    grid = s[::stride]
    if grid.size == 0:
        return np.zeros(0, dtype=np.int64)
    ok = grid > threshold
    ok[1:] &= grid[1:] >= grid[:-1]
    ok[:-1] &= grid[:-1] >= grid[1:]
    return np.flatnonzero(ok).astype(np.int64) * stride


def coverage_cap(phi: float, n: int) -> int:
    # round first so that e.g. 0.07 * 100 does not ceil to 8
    return math.ceil(round(phi * n, 9))


def build_protected_set(peaks, values, rho_samples: int, phi: float, n: int) -> ProtectedSet:
    """Greedily protect [p - rho, p + rho] around the strongest peaks.

    A peak whose neighborhood would push the peak-derived coverage past
    ceil(phi * N) is skipped; weaker peaks that still fit are admitted.
    Endpoints are added afterwards and are not charged to the cap.
    """
    if rho_samples < 0:
        raise ValueError(f"rho_samples must be >= 0, got {rho_samples}")
    if not 0 < phi < 1:
        raise ValueError(f"phi must be in (0, 1), got {phi}")
    s = np.asarray(values, dtype=np.float64)
    cap = coverage_cap(phi, n)
    covered = np.zeros(n, dtype=bool)
    used = 0
    for p in sorted((int(p) for p in peaks), key=lambda p: (-s[p], p)):
        lo, hi = max(0, p - rho_samples), min(n - 1, p + rho_samples)
        extra = int(np.count_nonzero(~covered[lo : hi + 1]))
        if used + extra <= cap:
            covered[lo : hi + 1] = True
            used += extra
    covered[0] = covered[-1] = True
    return ProtectedSet(np.flatnonzero(covered), n)


def analyze(segment: Segment, config: SaliencyConfig) -> SaliencyTrace:
    """Full pass: trace, threshold, peaks and protected set."""
    values, weights = saliency_trace(segment, config, return_weights=True)
    tau = robust_threshold(values, config.kappa)
    peaks = detect_peaks(values, tau, config.stride)
    protected = build_protected_set(
        peaks, values, config.rho_samples(segment.fs), config.phi, segment.n
    )
    return SaliencyTrace(values, tau, peaks, weights, protected)
