"""Shared domain types and storage-cost accounting.

All signal data is float32, channel-major (C x N). Containers are treated as
immutable once built; arrays are flagged read-only on construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

TRUE = "true"
PSEUDO = "pseudo"
PROVENANCES = (TRUE, PSEUDO)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Segment:
    """A C x N window of float32 samples at ``fs`` Hz."""

    data: np.ndarray
    fs: float

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32, copy=True)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2:
            raise ValueError(f"segment data must be 2-D (C, N), got shape {data.shape}")
        c, n = data.shape
        if c < 1 or n < 2:
            raise ValueError(f"segment needs C >= 1 and N >= 2, got C={c}, N={n}")
        if not np.all(np.isfinite(data)):
            raise ValueError("segment contains non-finite samples")
        if not (self.fs > 0 and math.isfinite(self.fs)):
            raise ValueError(f"sample rate must be positive, got {self.fs}")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "fs", float(self.fs))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Segment):
            return NotImplemented
        return (
            self.fs == other.fs
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ProtectedSet:
    """Sorted keyframe indices of a length-``n`` segment, endpoints included."""

    indices: np.ndarray
    n: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel().copy()
        n = int(self.n)
        if n < 2:
            raise ValueError(f"segment length must be >= 2, got {n}")
        if idx.size < 2 or idx[0] != 0 or idx[-1] != n - 1:
            raise ValueError("protected set must contain both endpoints 0 and N-1")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("protected indices must be strictly increasing")
        object.__setattr__(self, "indices", _frozen(idx))
        object.__setattr__(self, "n", n)

    @classmethod
    def endpoints_only(cls, n: int) -> "ProtectedSet":
        return cls(np.array([0, n - 1]), n)

    def __len__(self):
        return int(self.indices.size)

    def __contains__(self, t):
        i = np.searchsorted(self.indices, t)
        return bool(i < self.indices.size and self.indices[i] == t)

    def __eq__(self, other):
        if not isinstance(other, ProtectedSet):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.indices, other.indices)

    __hash__ = None


@dataclass(frozen=True, order=True)
class RationalRate:
    u: int
    d: int

    def __post_init__(self):
        if self.u < 1 or self.d < 1:
            raise ValueError(f"rate terms must be >= 1, got {self.u}/{self.d}")
        if math.gcd(self.u, self.d) != 1:
            raise ValueError(f"rate {self.u}/{self.d} is not in lowest terms")

    @property
    def value(self) -> float:
        return self.u / self.d

    def output_length(self, n: int) -> int:
        """ceil(n * u / d) in exact integer arithmetic."""
        return -(-n * self.u // self.d)

    def swapped(self) -> "RationalRate":
        return RationalRate(self.d, self.u)

    def __str__(self):
        return f"{self.u}/{self.d}"


@dataclass(frozen=True, eq=False)
class CompressedSegment:
    """Low-rate sequence, verbatim keyframes and the metadata to invert them.

    No semantic validation happens here: a container read from disk may carry
    inconsistent metadata, and reconstruction is expected to cope with it.
    """

    y: np.ndarray  # (C, n_low) float32
    indices: np.ndarray  # (|P|,) uint32-range ints
    verbatim: np.ndarray  # (|P|, C) float32, index-major
    u: int
    d: int
    n: int
    fs: float
    budget_overshoot: bool = field(default=False, compare=False)

    def __post_init__(self):
        y = np.array(self.y, dtype=np.float32, copy=True)
        if y.ndim != 2:
            raise ValueError(f"y must be 2-D (C, n_low), got shape {y.shape}")
        idx = np.array(self.indices, dtype=np.int64, copy=True).ravel()
        verb = np.array(self.verbatim, dtype=np.float32, copy=True)
        if verb.ndim == 1:
            verb = verb.reshape(idx.size, -1) if idx.size else verb.reshape(0, y.shape[0])
        if verb.shape != (idx.size, y.shape[0]):
            raise ValueError(
                f"verbatim shape {verb.shape} does not match (|P|, C)=({idx.size}, {y.shape[0]})"
            )
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "indices", _frozen(idx))
        object.__setattr__(self, "verbatim", _frozen(verb))
        object.__setattr__(self, "u", int(self.u))
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "fs", float(np.float32(self.fs)))

    @property
    def channels(self) -> int:
        return self.y.shape[0]

    @property
    def n_low(self) -> int:
        return self.y.shape[1]

    @property
    def rate(self) -> RationalRate:
        return RationalRate(self.u, self.d)

    @property
    def protected_count(self) -> int:
        return int(self.indices.size)

    @property
    def realized_ratio(self) -> float:
        return (self.n_low + self.protected_count) / self.n

    def __eq__(self, other):
        if not isinstance(other, CompressedSegment):
            return NotImplemented
        return (
            (self.u, self.d, self.n) == (other.u, other.d, other.n)
            and np.float32(self.fs).tobytes() == np.float32(other.fs).tobytes()
            and self.y.shape == other.y.shape
            and self.y.tobytes() == other.y.tobytes()
            and np.array_equal(self.indices, other.indices)
            and self.verbatim.tobytes() == other.verbatim.tobytes()
        )

    __hash__ = None


@dataclass(eq=False)
class BufferEntry:
    payload: CompressedSegment
    label: int
    provenance: str
    window_confidences: np.ndarray
    feature: np.ndarray
    seq: int = -1  # insertion order, assigned by the buffer

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}, got {self.provenance!r}")
        self.window_confidences = np.asarray(self.window_confidences, dtype=np.float64).ravel()
        self.feature = np.asarray(self.feature, dtype=np.float64).ravel()

    @property
    def mean_confidence(self) -> float:
        if self.window_confidences.size == 0:
            return 0.0
        return float(np.mean(self.window_confidences))

    @property
    def cost(self) -> int:
        return cost(self)


def cost(item: Union[BufferEntry, CompressedSegment]) -> int:
    """Stored scalars: (n_low + |P|) * C."""
    c = item.payload if isinstance(item, BufferEntry) else item
    return (c.n_low + c.protected_count) * c.channels


@dataclass
class PredictionLog:
    """(step, subject) -> predicted / true label arrays for T adaptation steps.

    Records with subject == step feed plasticity; subject > step feed stability.
    """

    T: int
    records: dict = field(default_factory=dict)

    def add(self, step: int, subject: int, predicted, truth) -> None:
        if not (1 <= step <= self.T and 1 <= subject <= self.T):
            raise ValueError(f"(step, subject)=({step}, {subject}) outside 1..{self.T}")
        if subject < step:
            raise ValueError(f"subject {subject} precedes step {step}; only s >= t is tracked")
        pred = np.asarray(predicted).ravel()
        true = np.asarray(truth).ravel()
        if pred.shape != true.shape:
            raise ValueError("predicted and true label arrays differ in length")
        self.records[(int(step), int(subject))] = (pred, true)

    def get(self, step: int, subject: int):
        return self.records.get((step, subject))
