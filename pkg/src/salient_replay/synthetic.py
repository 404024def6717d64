"""Synthetic EEG-like fixtures: pink + white background with Hann-windowed
oscillatory bursts (spindle / K-complex stand-ins) at known locations."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .types import Segment


@dataclass(frozen=True)
class Event:
    center: float  # seconds
    duration: float  # seconds
    band: tuple  # (low, high) Hz; the burst oscillates at the band center
    amplitude: float
    channels: tuple | None = None  # None -> every channel

    @property
    def frequency(self) -> float:
        return 0.5 * (self.band[0] + self.band[1])

    def interval(self, fs: float) -> tuple[int, int]:
        start = int(round((self.center - self.duration / 2) * fs))
        return start, start + int(round(self.duration * fs))


@dataclass(frozen=True)
class SyntheticSpec:
    fs: float
    n: int
    channels: int = 1
    pink: float = 1.0  # background std, 1/f spectrum
    white: float = 0.0
    events: tuple = field(default_factory=tuple)
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        noise = d.pop("noise", None)
        if noise is not None:
            if isinstance(noise, dict):
                d.setdefault("pink", noise.get("pink", 0.0))
                d.setdefault("white", noise.get("white", 0.0))
            else:
                d.setdefault("pink", float(noise))
                d.setdefault("white", 0.25 * float(noise))
        events = []
        for e in d.pop("events", ()):
            e = dict(e)
            e["band"] = tuple(e["band"])
            if e.get("channels") is not None:
                e["channels"] = tuple(e["channels"])
            events.append(Event(**e))
        return cls(events=tuple(events), **d)

    def to_dict(self) -> dict:
        return asdict(self)


def pink_noise(rng: np.random.Generator, channels: int, n: int) -> np.ndarray:
    """Unit-variance 1/f noise by spectral shaping of white noise."""
    spec = rng.standard_normal((channels, n // 2 + 1)) + 1j * rng.standard_normal((channels, n // 2 + 1))
    f = np.arange(n // 2 + 1, dtype=np.float64)
    shape = np.zeros_like(f)
    shape[1:] = 1.0 / np.sqrt(f[1:])
    x = np.fft.irfft(spec * shape, n=n, axis=-1)
    std = x.std(axis=-1, keepdims=True)
    return x / np.where(std > 0, std, 1.0)


def generate(spec: SyntheticSpec) -> tuple[Segment, list[tuple[int, int]]]:
    """Return the fixture and each event's [start, stop) sample interval."""
    if spec.n < 2 or spec.channels < 1:
        raise ValueError("fixture needs n >= 2 and channels >= 1")
    rng = np.random.default_rng(spec.seed)
    x = np.zeros((spec.channels, spec.n))
    if spec.pink > 0:
        x += spec.pink * pink_noise(rng, spec.channels, spec.n)
    if spec.white > 0:
        x += spec.white * rng.standard_normal((spec.channels, spec.n))
    intervals = []
    t = np.arange(spec.n) / spec.fs
    for ev in spec.events:
        start, stop = ev.interval(spec.fs)
        if start < 0 or stop > spec.n or stop <= start:
            raise ValueError(f"event at {ev.center}s (duration {ev.duration}s) falls outside [0, N)")
        if not 0 < ev.band[0] < ev.band[1] < spec.fs / 2:
            raise ValueError(f"event band {ev.band} invalid for Fs={spec.fs}")
        chans = range(spec.channels) if ev.channels is None else ev.channels
        burst = ev.amplitude * np.hanning(stop - start) * np.cos(
            2 * np.pi * ev.frequency * (t[start:stop] - ev.center)
        )
        for c in chans:
            x[c, start:stop] += burst
        intervals.append((start, stop))
    return Segment(x, spec.fs), intervals


def spindle_fixture(seed: int, seconds: float = 60.0, fs: float = 100.0, channels: int = 2,
                    amplitude: float = 4.0) -> SyntheticSpec:
    """One 1 s, 11-16 Hz burst at a seed-dependent position."""
    rng = np.random.default_rng(10_000 + seed)
    center = float(rng.uniform(5.0, seconds - 5.0))
    return SyntheticSpec(
        fs=fs, n=int(seconds * fs), channels=channels, pink=1.0, white=0.25,
        events=(Event(center=round(center, 2), duration=1.0, band=(11.0, 16.0), amplitude=amplitude),),
        seed=seed,
    )


def dump_events(path, spec: SyntheticSpec, intervals) -> None:
    payload = {
        "fs": spec.fs,
        "n": spec.n,
        "events": [
            {**asdict(e), "start": s, "stop": t} for e, (s, t) in zip(spec.events, intervals)
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
