"""Rational-rate polyphase resampling and keep-ratio to (u, d) selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dsp import DEFAULT_BETA, DEFAULT_TAPS_PER_BRANCH, FirKernel, design_lowpass
from .types import RationalRate


def upsample(x, factor: int) -> np.ndarray:
    """Zero-stuff: output[n] = x[n / L] when L divides n, else 0."""
    if factor < 1:
        raise ValueError(f"upsampling factor must be >= 1, got {factor}")
    x = np.asarray(x)
    out = np.zeros(x.shape[:-1] + (x.shape[-1] * factor,), dtype=x.dtype)
    out[..., ::factor] = x
    return out


def downsample(x, factor: int) -> np.ndarray:
    """Keep every ``factor``-th sample starting at index 0."""
    if factor < 1:
        raise ValueError(f"downsampling factor must be >= 1, got {factor}")
    return np.asarray(x)[..., ::factor].copy()


def resampling_kernel(
    u: int, d: int, beta: float = DEFAULT_BETA, taps_per_branch: int = DEFAULT_TAPS_PER_BRANCH
) -> FirKernel:
    """Anti-imaging / anti-aliasing low-pass at the upsampled rate.

    Cutoff min(0.5/u, 0.5/d); taps scaled by u to restore the gain lost to
    zero-stuffing.
    """
    base = design_lowpass(0.5 / max(u, d), beta, taps_per_branch)
    return FirKernel(base.taps * u, base.cutoff, base.beta)


@dataclass(frozen=True, eq=False)
class ResamplePlan:
    rate: RationalRate
    kernel: FirKernel
    input_length: int

    @property
    def output_length(self) -> int:
        return self.rate.output_length(self.input_length)


def plan(n: int, u: int, d: int, beta: float = DEFAULT_BETA,
         taps_per_branch: int = DEFAULT_TAPS_PER_BRANCH) -> ResamplePlan:
    rate = RationalRate(u, d)
    kernel = resampling_kernel(u, d, beta, taps_per_branch)
    if n < 1 or n * max(u, d) < len(kernel):
        raise ValueError(
            f"input length {n} too short for rate {rate}: need N >= {len(kernel)}/{max(u, d)}"
        )
    return ResamplePlan(rate, kernel, n)


def polyphase_resample(x, u: int, d: int, beta: float = DEFAULT_BETA,
                       taps_per_branch: int = DEFAULT_TAPS_PER_BRANCH) -> np.ndarray:
    """Resample along the last axis by u/d without building the zero-stuffed signal.

    Output sample k is aligned with input time k*d/u: the kernel's group delay
    is removed before decimation. Samples outside the input are taken as zero.
    Returns exactly ceil(N*u/d) samples (float64).
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if u == 1 and d == 1:
        RationalRate(u, d)
        if n < 1:
            raise ValueError("cannot resample an empty sequence")
        return x.copy()
    p = plan(n, u, d, beta, taps_per_branch)
    h = p.kernel.taps
    n_taps = h.size
    delay = p.kernel.delay
    n_out = p.output_length

    # branch b holds taps h[b], h[b+u], h[b+2u], ...
    branch_len = -(-n_taps // u)
    branches = np.zeros(branch_len * u)
    branches[:n_taps] = h
    branches = branches.reshape(branch_len, u).T  # (u, branch_len)

    pos = np.arange(n_out, dtype=np.int64) * d + delay
    phase = pos % u
    base = pos // u
    # input index base - i pairs with tap phase + i*u
    src = base[:, None] - np.arange(branch_len)[None, :]
    right = max(0, int(base[-1]) + 1 - n)
    xe = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(branch_len, right)])
    gathered = xe[..., src + branch_len]  # (..., n_out, branch_len)
    return np.einsum("...kb,kb->...k", gathered, branches[phase])


def effective_cutoff(u: int, d: int, tol_db: float = 0.1, beta: float = DEFAULT_BETA,
                     taps_per_branch: int = DEFAULT_TAPS_PER_BRANCH) -> float:
    """Highest input-rate frequency (cycles/sample) the kernel passes within ``tol_db``."""
    if u == d == 1:
        return 0.5
    kernel = resampling_kernel(u, d, beta, taps_per_branch)
    freqs = np.linspace(0.0, kernel.cutoff, 4001)
    gain_db = 20 * np.log10(kernel.response(freqs) / u)
    bad = np.nonzero(np.abs(gain_db) > tol_db)[0]
    edge = freqs[bad[0] - 1] if bad.size else kernel.cutoff
    return float(edge * u)


def _as_fraction(r) -> Fraction:
    """Exact value of a keep ratio; floats are read by their shortest decimal
    form so that 0.15 means 3/20 rather than the nearest binary double."""
    q = Fraction(repr(float(r))) if isinstance(r, float) else Fraction(r)
    if not 0 < q <= 1:
        raise ValueError(f"keep ratio must lie in (0, 1], got {r}")
    return q


def farey_neighbors(r, d_max: int) -> tuple[Fraction, Fraction]:
    """Adjacent members of the order-``d_max`` Farey sequence bracketing r.

    Walks the continued-fraction expansion of r; when the next convergent's
    denominator would exceed d_max, the largest admissible semiconvergent and
    the last convergent are the two neighbors. Both are r when r is itself in
    the sequence.
    """
    if d_max < 1:
        raise ValueError(f"d_max must be >= 1, got {d_max}")
    r = Fraction(repr(r)) if isinstance(r, float) else Fraction(r)
    if r.denominator <= d_max:
        return r, r
    p0, q0, p1, q1 = 0, 1, 1, 0
    num, den = r.numerator, r.denominator
    while True:
        a = num // den
        q2 = q0 + a * q1
        if q2 > d_max:
            break
        p0, q0, p1, q1 = p1, q1, p0 + a * p1, q2
        num, den = den, num - a * den
    k = (d_max - q0) // q1
    semi = Fraction(p0 + k * p1, q0 + k * q1)
    conv = Fraction(p1, q1)
    return (semi, conv) if semi < conv else (conv, semi)


def _candidates(r: Fraction, d_max: int) -> list[Fraction]:
    lo, hi = farey_neighbors(r, d_max)
    cands = [q for q in dict.fromkeys((lo, hi)) if q.numerator >= 1]
    # only happens for r < 1/d_max, where 0/1 is the lower neighbor
    return cands or [Fraction(1, d_max)]


def rational_approx(r, d_max: int) -> RationalRate:
    """Closest u/d to r with 1 <= d <= d_max and u >= 1; ties go to smaller d."""
    q = _as_fraction(r)
    best = min(_candidates(q, d_max), key=lambda c: (abs(c - q), c.denominator, c.numerator))
    return RationalRate(best.numerator, best.denominator)


def refine_farey(r, n: int, protected_count: int, d_max: int) -> RationalRate:
    """Pick the Farey neighbor of r whose kept count ceil(n*u/d) + |P| lands
    closest to r*n. Ties go to the smaller kept count, then the smaller rate.
    """
    q = _as_fraction(r)
    if n < 1:
        raise ValueError(f"segment length must be >= 1, got {n}")
    if protected_count < 0:
        raise ValueError(f"protected_count must be >= 0, got {protected_count}")
    target = q * n

    def key(c: Fraction):
        kept = -(-n * c.numerator // c.denominator) + protected_count
        return abs(kept - target), kept, c

    best = min(_candidates(q, d_max), key=key)
    return RationalRate(best.numerator, best.denominator)


def kept_points(rate: RationalRate, n: int, protected_count: int) -> int:
    return rate.output_length(n) + protected_count


def gcd_ok(u: int, d: int) -> bool:
    return u >= 1 and d >= 1 and math.gcd(u, d) == 1
