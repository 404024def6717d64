"""Compression, overwrite-augmented reconstruction and the ``.adcr`` container.

Container layout (all little-endian)::

    magic "ADCR" | version u16 | N u32 | C u16 | Fs f32 | u u16 | d u16
    | protected_count u32 | y_length u32                      (28 bytes)
    protected indices        u32  x |P|
    verbatim samples         f32  x |P| * C   (index-major)
    low-rate sequence y      f32  x C * y_length (channel-major)

Raw segment files: N u32 | C u16 | Fs f32, then C * N f32 channel-major.
"""

from __future__ import annotations

import logging
import math
import struct
from pathlib import Path

import numpy as np

from . import saliency
from .resampler import polyphase_resample, refine_farey, resampling_kernel
from .saliency import SaliencyConfig
from .types import CompressedSegment, ProtectedSet, Segment

log = logging.getLogger(__name__)

MAGIC = b"ADCR"
VERSION = 1
HEADER = struct.Struct("<4sHIHfHHII")
RAW_HEADER = struct.Struct("<IHf")
DEFAULT_DMAX = 64


class FormatError(ValueError):
    """Malformed byte stream; ``offset`` is where reading went wrong."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def compress(segment: Segment, keep_ratio: float, config: SaliencyConfig,
             d_max: int = DEFAULT_DMAX) -> CompressedSegment:
    if not 0 < keep_ratio <= 1:
        raise ValueError(f"keep ratio must lie in (0, 1], got {keep_ratio}")
    n = segment.n
    try:
        protected = saliency.analyze(segment, config).protected
    except ValueError as exc:
        log.warning("saliency failed (%s); protecting endpoints only", exc)
        protected = ProtectedSet.endpoints_only(n)
    rate = refine_farey(keep_ratio, n, len(protected), d_max)
    y = polyphase_resample(segment.data, rate.u, rate.d).astype(np.float32)
    idx = protected.indices
    overshoot = 1 / d_max > keep_ratio and len(protected) > keep_ratio * n
    return CompressedSegment(
        y=y,
        indices=idx,
        verbatim=segment.data[:, idx].T,
        u=rate.u,
        d=rate.d,
        n=n,
        fs=segment.fs,
        budget_overshoot=overshoot,
    )


def check_consistency(c: CompressedSegment) -> list[str]:
    """Reasons the primary reconstruction path cannot be trusted; empty if fine."""
    problems = []
    if c.n < 2:
        problems.append(f"N={c.n} < 2")
    if not (math.isfinite(c.fs) and c.fs > 0):
        problems.append(f"invalid sample rate {c.fs}")
    if c.u < 1 or c.d < 1 or math.gcd(c.u, c.d) != 1:
        problems.append(f"invalid rate {c.u}/{c.d}")
    elif c.n_low != -(-c.n * c.u // c.d):
        problems.append(f"y length {c.n_low} != ceil(N*u/d) = {-(-c.n * c.u // c.d)}")
    elif (c.u, c.d) != (1, 1) and c.n_low * max(c.u, c.d) < len(resampling_kernel(c.d, c.u)):
        problems.append(f"y length {c.n_low} too short for the adjoint kernel")
    idx = c.indices
    if idx.size < 2 or idx[0] != 0 or idx[-1] != c.n - 1:
        problems.append("protected set lacks an endpoint")
    if idx.size and (idx.min() < 0 or idx.max() >= c.n):
        problems.append("protected index out of range")
    if np.any(np.diff(idx) <= 0):
        problems.append("protected indices not strictly increasing")
    if not np.all(np.isfinite(c.y)):
        problems.append("non-finite values in y")
    if not np.all(np.isfinite(c.verbatim)):
        problems.append("non-finite verbatim values")
    return problems


def fallback_interpolate(indices, values, n: int, fs: float = 1.0) -> Segment:
    """Per-channel linear interpolation through known samples.

    ``values`` is (k, C). The indices must be distinct and include 0 and N-1.
    """
    idx = np.asarray(indices, dtype=np.int64).ravel()
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim == 1:
        vals = vals[:, None]
    if np.unique(idx).size < 2:
        raise ValueError("container irrecoverable: fewer than two known indices")
    if np.unique(idx).size != idx.size:
        raise ValueError("known indices must be distinct")
    if idx.min() != 0 or idx.max() != n - 1:
        raise ValueError("known indices must include 0 and N-1")
    order = np.argsort(idx)
    idx, vals = idx[order], vals[order]
    grid = np.arange(n)
    out = np.stack([np.interp(grid, idx, vals[:, ch]) for ch in range(vals.shape[1])])
    out = out.astype(np.float32)
    # np.interp is exact at knots up to float64 -> float32 round-trip; pin them anyway
    out[:, idx] = vals.T.astype(np.float32)
    return Segment(out, fs)


def _fallback(c: CompressedSegment) -> Segment:
    n, channels = c.n, c.channels
    if n < 2 or channels < 1:
        raise ValueError(f"container irrecoverable: N={n}, C={channels}")
    fs = c.fs if (math.isfinite(c.fs) and c.fs > 0) else 1.0
    known: dict[int, np.ndarray] = {}
    for t, row in zip(c.indices.tolist(), c.verbatim):
        if 0 <= t < n and t not in known and np.all(np.isfinite(row)):
            known[t] = row.astype(np.float64)

    def y_column(col):
        if c.n_low:
            v = c.y[:, col].astype(np.float64)
            if np.all(np.isfinite(v)):
                return v
        return None

    def nearest(t):
        if not known:
            return np.zeros(channels)
        k = min(known, key=lambda i: (abs(i - t), i))
        return known[k]

    if 0 not in known:
        v = y_column(0)
        known[0] = v if v is not None else nearest(0)
    if n - 1 not in known:
        v = y_column(-1)
        known[n - 1] = v if v is not None else nearest(n - 1)
    idx = np.array(sorted(known))
    return fallback_interpolate(idx, np.stack([known[i] for i in idx]), n, fs)


def reconstruct(c: CompressedSegment, return_info: bool = False):
    """Adjoint-rate resampling of y, fitted to N samples, then keyframe overwrite.

    Inconsistent containers are rebuilt by linear interpolation through the
    verbatim samples instead. With ``return_info`` a ``(segment, info)`` pair
    is returned, where ``info`` lists any problems and whether the fallback ran.
    """
    problems = check_consistency(c)
    out = None
    if not problems:
        try:
            dense = polyphase_resample(c.y, c.d, c.u)
            if dense.shape[-1] >= c.n:
                dense = dense[:, : c.n]
            else:
                dense = np.pad(dense, [(0, 0), (0, c.n - dense.shape[-1])], mode="edge")
            dense = dense.astype(np.float32)
            dense[:, c.indices] = c.verbatim.T
            if np.all(np.isfinite(dense)):
                out = Segment(dense, c.fs)
            else:
                problems.append("non-finite reconstruction")
        except (ValueError, FloatingPointError) as exc:
            problems.append(f"resampling failed: {exc}")
    if out is None:
        log.warning("falling back to linear interpolation: %s", "; ".join(problems))
        out = _fallback(c)
    if return_info:
        return out, {"fallback": bool(problems), "problems": problems}
    return out


def serialize(c: CompressedSegment) -> bytes:
    channels, n_low = c.y.shape
    for name, value, limit in (("C", channels, 0xFFFF), ("u", c.u, 0xFFFF), ("d", c.d, 0xFFFF),
                               ("N", c.n, 0xFFFFFFFF)):
        if not 0 <= value <= limit:
            raise ValueError(f"{name}={value} does not fit the container field")
    header = HEADER.pack(MAGIC, VERSION, c.n, channels, c.fs, c.u, c.d, c.indices.size, n_low)
    return b"".join((
        header,
        c.indices.astype("<u4").tobytes(),
        c.verbatim.astype("<f4").tobytes(),
        c.y.astype("<f4").tobytes(),
    ))


def deserialize(buf: bytes) -> CompressedSegment:
    """Parse a container. Only structural problems raise; semantic
    inconsistencies are left for :func:`reconstruct` to handle."""
    buf = bytes(buf)
    if len(buf) < HEADER.size:
        raise FormatError(f"truncated header: {len(buf)} of {HEADER.size} bytes", len(buf))
    magic, version, n, channels, fs, u, d, count, n_low = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if n < 2:
        raise FormatError(f"segment length N={n} < 2", 6)
    if channels < 1:
        raise FormatError("channel count is zero", 10)
    expected = HEADER.size + 4 * count + 4 * count * channels + 4 * n_low * channels
    if len(buf) < expected:
        raise FormatError(f"truncated payload: {len(buf)} of {expected} bytes", len(buf))
    if len(buf) > expected:
        raise FormatError(f"{len(buf) - expected} trailing bytes", expected)
    pos = HEADER.size
    idx = np.frombuffer(buf, "<u4", count, pos).astype(np.int64)
    pos += 4 * count
    verb = np.frombuffer(buf, "<f4", count * channels, pos).reshape(count, channels)
    pos += 4 * count * channels
    y = np.frombuffer(buf, "<f4", n_low * channels, pos).reshape(channels, n_low)
    return CompressedSegment(y=y, indices=idx, verbatim=verb, u=u, d=d, n=n, fs=fs)


def container_size(n_low: int, protected_count: int, channels: int) -> int:
    return HEADER.size + 4 * protected_count + 4 * protected_count * channels + 4 * n_low * channels


def save(path, c: CompressedSegment) -> None:
    Path(path).write_bytes(serialize(c))


def load(path) -> CompressedSegment:
    return deserialize(Path(path).read_bytes())


def encode_raw(segment: Segment) -> bytes:
    c, n = segment.data.shape
    return RAW_HEADER.pack(n, c, segment.fs) + segment.data.astype("<f4").tobytes()


def decode_raw(buf: bytes) -> Segment:
    buf = bytes(buf)
    if len(buf) < RAW_HEADER.size:
        raise FormatError(f"truncated raw header: {len(buf)} of {RAW_HEADER.size} bytes", len(buf))
    n, c, fs = RAW_HEADER.unpack_from(buf, 0)
    expected = RAW_HEADER.size + 4 * n * c
    if len(buf) != expected:
        raise FormatError(f"raw payload is {len(buf)} bytes, header implies {expected}",
                          min(len(buf), expected))
    data = np.frombuffer(buf, "<f4", n * c, RAW_HEADER.size).reshape(c, n)
    try:
        return Segment(data, fs)
    except ValueError as exc:
        raise FormatError(f"invalid raw segment: {exc}", 0) from None


def write_raw(path, segment: Segment) -> None:
    Path(path).write_bytes(encode_raw(segment))


def read_raw(path) -> Segment:
    return decode_raw(Path(path).read_bytes())
