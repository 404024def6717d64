"""Reconstruction fidelity and continual-learning (plasticity / stability) metrics.

Conventions for degenerate inputs:

* Pearson r is 0 when either input has zero variance.
* SNR is capped at +100 dB (exact match) and floored at -100 dB.
* PSD cosine is 1 when both spectra are identically zero, 0 when only one is.
* Macro-F1 averages over classes present in the truth or the predictions of
  that evaluation; absent classes are skipped rather than scored 0.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .dsp import welch_psd
from .types import PredictionLog, Segment

SNR_CAP_DB = 100.0


class IncompleteLogError(ValueError):
    pass


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape or x.size < 2:
        raise ValueError("pearson_r needs two equal-length sequences of at least 2 samples")
    xc, yc = x - x.mean(), y - y.mean()
    denom = np.sqrt(np.dot(xc, xc) * np.dot(yc, yc))
    if denom == 0:
        return 0.0
    return float(np.clip(np.dot(xc, yc) / denom, -1.0, 1.0))


def snr_db(x, y) -> float:
    """10 log10(signal power / error power) of reconstruction ``y`` against ``x``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError("snr_db needs equal-length sequences")
    signal = float(np.dot(x, x))
    err = float(np.dot(x - y, x - y))
    if err == 0:
        return SNR_CAP_DB
    if signal == 0:
        return -SNR_CAP_DB
    return float(np.clip(10 * np.log10(signal / err), -SNR_CAP_DB, SNR_CAP_DB))


def psd_cosine(x, y, fs: float) -> float:
    _, px = welch_psd(x, fs)
    _, py = welch_psd(y, fs)
    nx, ny = np.linalg.norm(px), np.linalg.norm(py)
    if nx == 0 and ny == 0:
        return 1.0
    if nx == 0 or ny == 0:
        return 0.0
    return float(np.clip(np.dot(px, py) / (nx * ny), 0.0, 1.0))


@dataclass
class FidelityReport:
    pearson: list
    snr_db: list
    psd_cos: list
    margin: int
    realized_ratio: float | None = None

    @property
    def mean_pearson(self) -> float:
        return float(np.mean(self.pearson))

    @property
    def mean_snr_db(self) -> float:
        return float(np.mean(self.snr_db))

    @property
    def mean_psd_cos(self) -> float:
        return float(np.mean(self.psd_cos))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(
            mean_pearson=self.mean_pearson,
            mean_snr_db=self.mean_snr_db,
            mean_psd_cos=self.mean_psd_cos,
            conventions={
                "pearson_zero_variance": 0.0,
                "snr_cap_db": SNR_CAP_DB,
                "psd_cos_both_zero": 1.0,
                "welch": "hann, nperseg=min(256,N), 50% overlap",
            },
        )
        return d


def fidelity(original: Segment, recon: Segment, margin: int = 0,
             realized_ratio: float | None = None) -> FidelityReport:
    """Per-channel Pearson r, SNR and Welch-PSD cosine, skipping ``margin``
    samples at each end."""
    if original.data.shape != recon.data.shape:
        raise ValueError(f"shape mismatch {original.data.shape} vs {recon.data.shape}")
    n = original.n
    if 2 * margin >= n:
        raise ValueError(f"margin {margin} leaves no interior in {n} samples")
    sl = slice(margin, n - margin)
    a = original.data[:, sl].astype(np.float64)
    b = recon.data[:, sl].astype(np.float64)
    return FidelityReport(
        pearson=[pearson_r(x, y) for x, y in zip(a, b)],
        snr_db=[snr_db(x, y) for x, y in zip(a, b)],
        psd_cos=[psd_cosine(x, y, original.fs) for x, y in zip(a, b)],
        margin=margin,
        realized_ratio=realized_ratio,
    )


def accuracy(predicted, truth) -> float:
    p = np.asarray(predicted).ravel()
    t = np.asarray(truth).ravel()
    if p.size == 0 or p.shape != t.shape:
        raise ValueError("accuracy needs non-empty, equal-length label arrays")
    return float(np.mean(p == t))


def macro_f1(predicted, truth) -> float:
    p = np.asarray(predicted).ravel()
    t = np.asarray(truth).ravel()
    if p.size == 0 or p.shape != t.shape:
        raise ValueError("macro_f1 needs non-empty, equal-length label arrays")
    scores = []
    for c in np.union1d(p, t):
        tp = np.count_nonzero((p == c) & (t == c))
        fp = np.count_nonzero((p == c) & (t != c))
        fn = np.count_nonzero((p != c) & (t == c))
        scores.append(2 * tp / (2 * tp + fp + fn))
    return float(np.mean(scores))


def _record(log: PredictionLog, t: int, s: int):
    rec = log.get(t, s)
    if rec is None:
        raise IncompleteLogError(f"no predictions for step {t}, subject {s}")
    return rec


def plasticity(log: PredictionLog) -> tuple[float, float]:
    """(ACC, MF1) in percent: current-subject performance averaged over steps."""
    accs, f1s = [], []
    for t in range(1, log.T + 1):
        pred, true = _record(log, t, t)
        accs.append(accuracy(pred, true))
        f1s.append(macro_f1(pred, true))
    return 100 * float(np.mean(accs)), 100 * float(np.mean(f1s))


def stability(log: PredictionLog) -> tuple[float, float]:
    """(AAA, AAF1) in percent: performance on not-yet-adapted subjects s > t."""
    if log.T < 2:
        raise IncompleteLogError("stability needs at least two adaptation steps")
    step_acc, step_f1 = [], []
    for t in range(1, log.T):
        accs, f1s = [], []
        for s in range(t + 1, log.T + 1):
            pred, true = _record(log, t, s)
            accs.append(accuracy(pred, true))
            f1s.append(macro_f1(pred, true))
        step_acc.append(np.mean(accs))
        step_f1.append(np.mean(f1s))
    return 100 * float(np.mean(step_acc)), 100 * float(np.mean(step_f1))


def uicl_summary(log: PredictionLog) -> dict:
    acc, mf1 = plasticity(log)
    out = {"ACC": round(acc, 1), "MF1": round(mf1, 1)}
    if log.T >= 2:
        aaa, aaf1 = stability(log)
        out.update(AAA=round(aaa, 1), AAF1=round(aaf1, 1))
    return out


def read_log_csv(text: str) -> PredictionLog:
    """Parse a CSV with columns step, subject, predicted, true (header required)."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty prediction log")
    grouped: dict = {}
    for row in rows:
        key = (int(row["step"]), int(row["subject"]))
        grouped.setdefault(key, ([], []))
        grouped[key][0].append(int(row["predicted"]))
        grouped[key][1].append(int(row["true"]))
    log = PredictionLog(T=max(max(k) for k in grouped))
    for (t, s), (pred, true) in sorted(grouped.items()):
        log.add(t, s, pred, true)
    return log
