"""Budgeted replay buffer with prototype / confidence exemplar selection.

Two independent partitions, each with its own budget in stored scalars:

* true-labeled entries are kept by closeness to their class prototype;
* pseudo-labeled entries must pass a confidence gate and are kept by mean
  confidence.

Not thread-safe: callers serialize inserts and evictions; sampling may run
alongside other reads but not alongside mutation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import codec
from .types import PSEUDO, TRUE, BufferEntry, Segment

INDEX_NAME = "index.tsv"


@dataclass(frozen=True, eq=False)
class Prototype:
    label: int
    mean: np.ndarray
    count: int


@dataclass(frozen=True)
class Admission:
    accepted: bool
    reason: str = ""
    evicted: tuple = ()

    def __bool__(self):
        return self.accepted


@dataclass(frozen=True, eq=False)
class ReplayItem:
    segment: Segment
    label: int
    provenance: str


@dataclass
class Buffer:
    budget_true: int
    budget_pseudo: int
    conf_threshold: float = 0.9
    min_windows: int = 15
    mix_ratio: tuple = (8, 2)
    true_partition: list = field(default_factory=list)
    pseudo_partition: list = field(default_factory=list)
    _next_seq: int = 0

    def __post_init__(self):
        if self.budget_true < 0 or self.budget_pseudo < 0:
            raise ValueError("budgets must be non-negative")
        if self.min_windows < 1:
            raise ValueError(f"min_windows must be >= 1, got {self.min_windows}")
        t, p = self.mix_ratio
        if t < 0 or p < 0 or t + p == 0:
            raise ValueError(f"mix ratio must be non-negative and not all zero, got {self.mix_ratio}")

    @property
    def entries(self) -> list:
        return self.true_partition + self.pseudo_partition

    def cost(self, provenance: str) -> int:
        part = self.true_partition if provenance == TRUE else self.pseudo_partition
        return sum(e.cost for e in part)

    def _check_feature(self, entry: BufferEntry) -> None:
        for other in self.entries:
            if other.feature.size != entry.feature.size:
                raise ValueError(
                    f"feature length {entry.feature.size} differs from buffer's {other.feature.size}"
                )
            return

    def _stamp(self, entry: BufferEntry) -> None:
        if entry.seq < 0:
            entry.seq = self._next_seq
        self._next_seq = max(self._next_seq, entry.seq) + 1

    def insert_true(self, entry: BufferEntry) -> list:
        """Store a true-labeled entry; returns whatever eviction removed."""
        if entry.provenance != TRUE:
            raise ValueError("insert_true expects a true-labeled entry")
        self._check_feature(entry)
        self._stamp(entry)
        self.true_partition.append(entry)
        return evict_true(self)

    def admit_pseudo(self, entry: BufferEntry) -> Admission:
        if entry.provenance != PSEUDO:
            raise ValueError("admit_pseudo expects a pseudo-labeled entry")
        conf = entry.window_confidences
        if conf.size == 0 or not np.all(np.isfinite(conf)) or np.any((conf < 0) | (conf > 1)):
            return Admission(False, "malformed")
        passing = int(np.count_nonzero(conf > self.conf_threshold))
        if passing < self.min_windows:
            return Admission(
                False,
                f"only {passing} of {conf.size} windows exceed {self.conf_threshold}"
                f" (need {self.min_windows})",
            )
        self._check_feature(entry)
        self._stamp(entry)
        self.pseudo_partition.append(entry)
        return Admission(True, "", tuple(evict_pseudo(self)))

    def insert(self, entry: BufferEntry):
        """Route by provenance. Returns evicted entries (true) or an Admission (pseudo)."""
        if entry.provenance == TRUE:
            return self.insert_true(entry)
        return self.admit_pseudo(entry)

    def prototypes(self) -> dict:
        return class_prototypes(self.true_partition)

    def sample(self, batch_size: int, seed: int) -> list:
        return sample_replay_batch(self, batch_size, seed)

    def stats(self) -> dict:
        return {
            "true_entries": len(self.true_partition),
            "pseudo_entries": len(self.pseudo_partition),
            "true_cost": self.cost(TRUE),
            "pseudo_cost": self.cost(PSEUDO),
            "budget_true": self.budget_true,
            "budget_pseudo": self.budget_pseudo,
        }


def compute_prototype(entries) -> Prototype | None:
    """Mean feature of ``entries`` (all one class); None for an empty set."""
    entries = list(entries)
    if not entries:
        return None
    feats = np.stack([e.feature for e in entries])
    return Prototype(entries[0].label, feats.mean(axis=0), len(entries))


def class_prototypes(entries) -> dict:
    by_class: dict = {}
    for e in entries:
        by_class.setdefault(e.label, []).append(e)
    return {label: compute_prototype(members) for label, members in by_class.items()}


def prototype_distances(entries) -> dict:
    """entry.seq -> Euclidean distance to its class prototype."""
    protos = class_prototypes(entries)
    return {e.seq: float(np.linalg.norm(e.feature - protos[e.label].mean)) for e in entries}


def evict_true(buffer: Buffer) -> list:
    """Drop the entries farthest from their class prototype until the true
    partition fits. Distances are measured once, against pre-eviction
    prototypes; ties evict the costlier, then the newer entry first.
    """
    part = buffer.true_partition
    total = sum(e.cost for e in part)
    if total <= buffer.budget_true:
        return []
    dist = prototype_distances(part)
    order = sorted(part, key=lambda e: (dist[e.seq], e.cost, e.seq), reverse=True)
    evicted = []
    for e in order:
        if total <= buffer.budget_true:
            break
        evicted.append(e)
        total -= e.cost
    gone = {e.seq for e in evicted}
    buffer.true_partition = [e for e in part if e.seq not in gone]
    return evicted


def evict_pseudo(buffer: Buffer) -> list:
    """Keep the most confident prefix that fits the pseudo budget.

    Ranking is by mean window confidence, ties to the cheaper then the older
    entry. The prefix ends at the first entry that would overflow.
    """
    part = buffer.pseudo_partition
    if sum(e.cost for e in part) <= buffer.budget_pseudo:
        return []
    ranked = sorted(part, key=lambda e: (-e.mean_confidence, e.cost, e.seq))
    kept, used = [], 0
    for e in ranked:
        if used + e.cost > buffer.budget_pseudo:
            break
        kept.append(e)
        used += e.cost
    keep = {e.seq for e in kept}
    buffer.pseudo_partition = [e for e in part if e.seq in keep]
    return [e for e in ranked if e.seq not in keep]


def split_batch(batch_size: int, mix_ratio, available_true: int, available_pseudo: int):
    """(n_true, n_pseudo) for a batch; shortfall on one side is backfilled
    from the other."""
    t, p = mix_ratio
    want_p = math.floor(batch_size * p / (t + p) + 0.5)
    want_t = batch_size - want_p
    take_t = min(want_t, available_true)
    take_p = min(want_p, available_pseudo)
    spare = batch_size - take_t - take_p
    extra = min(spare, available_true - take_t)
    take_t += extra
    take_p += min(spare - extra, available_pseudo - take_p)
    return take_t, take_p


def sample_replay_batch(buffer: Buffer, batch_size: int, seed: int) -> list:
    """Draw without replacement from each partition and decode the payloads."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    rng = np.random.default_rng(seed)
    n_true, n_pseudo = split_batch(
        batch_size, buffer.mix_ratio, len(buffer.true_partition), len(buffer.pseudo_partition)
    )
    picks = [buffer.true_partition[i] for i in rng.choice(len(buffer.true_partition), n_true, replace=False)]
    picks += [buffer.pseudo_partition[i]
              for i in rng.choice(len(buffer.pseudo_partition), n_pseudo, replace=False)]
    return [ReplayItem(codec.reconstruct(e.payload), e.label, e.provenance) for e in picks]


def save(buffer: Buffer, directory) -> Path:
    """Write one container per entry plus a tab-separated index.

    Index columns: container, label, provenance, mean confidence, feature
    (comma-separated). Budgets and gate settings go in ``#`` header lines.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [
        f"# budget_true={buffer.budget_true}",
        f"# budget_pseudo={buffer.budget_pseudo}",
        f"# conf_threshold={buffer.conf_threshold!r}",
        f"# min_windows={buffer.min_windows}",
        f"# mix_ratio={buffer.mix_ratio[0]}:{buffer.mix_ratio[1]}",
    ]
    for e in buffer.entries:
        name = f"entry_{e.seq:08d}.adcr"
        codec.save(directory / name, e.payload)
        feat = ",".join(repr(float(v)) for v in e.feature)
        lines.append(f"{name}\t{e.label}\t{e.provenance}\t{e.mean_confidence!r}\t{feat}")
    (directory / INDEX_NAME).write_text("\n".join(lines) + "\n")
    return directory / INDEX_NAME


def load(directory) -> Buffer:
    """Inverse of :func:`save`. Per-window confidences collapse to their mean."""
    directory = Path(directory)
    settings, rows = {}, []
    for line in (directory / INDEX_NAME).read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            settings[key] = value
            continue
        rows.append(line.split("\t"))
    t, p = settings.get("mix_ratio", "8:2").split(":")
    buf = Buffer(
        budget_true=int(settings["budget_true"]),
        budget_pseudo=int(settings["budget_pseudo"]),
        conf_threshold=float(settings.get("conf_threshold", 0.9)),
        min_windows=int(settings.get("min_windows", 15)),
        mix_ratio=(int(t), int(p)),
    )
    for name, label, provenance, conf, feat in rows:
        entry = BufferEntry(
            payload=codec.load(directory / name),
            label=int(label),
            provenance=provenance,
            window_confidences=[float(conf)],
            feature=[float(v) for v in feat.split(",")] if feat else [],
            seq=int(name.split("_")[1].split(".")[0]),
        )
        (buf.true_partition if provenance == TRUE else buf.pseudo_partition).append(entry)
        buf._next_seq = max(buf._next_seq, entry.seq + 1)
    return buf
