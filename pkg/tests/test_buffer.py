import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import kept_after_true_eviction
from salient_replay import buffer as rb
from salient_replay.buffer import (
    Buffer,
    class_prototypes,
    compute_prototype,
    evict_pseudo,
    evict_true,
    sample_replay_batch,
    split_batch,
)
from salient_replay.types import PSEUDO, TRUE, BufferEntry, CompressedSegment


def payload(cost, fill=0.0):
    """Identity-rate container storing exactly ``cost`` scalars (one channel)."""
    n = cost - 2
    y = np.full((1, n), fill, dtype=np.float32)
    return CompressedSegment(y=y, indices=[0, n - 1], verbatim=y[:, [0, n - 1]].T,
                             u=1, d=1, n=n, fs=100.0)


def true_entry(feature, label=0, cost=10, seq=-1):
    return BufferEntry(payload(cost), label, TRUE, [], feature, seq)


def pseudo_entry(confs, cost=10, feature=(0.0,), label=0, seq=-1):
    return BufferEntry(payload(cost), label, PSEUDO, confs, feature, seq)


def test_prototype_examples():
    assert compute_prototype([]) is None
    one = compute_prototype([true_entry([3.0, 4.0])])
    np.testing.assert_array_equal(one.mean, [3.0, 4.0])
    two = compute_prototype([true_entry([0, 0]), true_entry([2, 2])])
    np.testing.assert_array_equal(two.mean, [1, 1])
    assert two.count == 2


def test_prototype_matches_brute_force():
    feats = np.random.default_rng(0).standard_normal((5, 7))
    proto = compute_prototype([true_entry(f) for f in feats])
    want = [sum(f[j] for f in feats) / 5 for j in range(7)]
    np.testing.assert_allclose(proto.mean, want, atol=1e-7)


def test_class_prototypes_per_label():
    protos = class_prototypes([true_entry([0.0], 1), true_entry([2.0], 1), true_entry([5.0], 2)])
    assert protos[1].mean.tolist() == [1.0] and protos[2].mean.tolist() == [5.0]


def test_gate_all_pass():
    buf = Buffer(1000, 1000)
    assert buf.admit_pseudo(pseudo_entry([0.95] * 20))


def test_gate_fourteen_is_not_enough():
    buf = Buffer(1000, 1000)
    verdict = buf.admit_pseudo(pseudo_entry([0.99] * 14 + [0.5] * 6))
    assert not verdict and "14" in verdict.reason
    assert buf.pseudo_partition == []


def test_gate_boundaries():
    buf = Buffer(1000, 1000)
    assert buf.admit_pseudo(pseudo_entry([0.91] * 15))
    # confidence must strictly exceed the threshold
    assert not buf.admit_pseudo(pseudo_entry([0.9] * 20))


@pytest.mark.parametrize("confs", [[], [float("nan")] * 20, [1.5] * 20, [-0.1] * 20])
def test_gate_malformed(confs):
    verdict = Buffer(1000, 1000).admit_pseudo(pseudo_entry(confs))
    assert not verdict and verdict.reason == "malformed"


@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.floats(0, 1), st.floats(0, 1),
       st.integers(1, 30), st.integers(1, 30))
def test_gate_monotone(confs, t1, t2, n1, n2):
    lo_t, hi_t = sorted((t1, t2))
    lo_n, hi_n = sorted((n1, n2))
    strict = Buffer(10 ** 6, 10 ** 6, conf_threshold=hi_t, min_windows=hi_n).admit_pseudo(pseudo_entry(confs))
    loose = Buffer(10 ** 6, 10 ** 6, conf_threshold=lo_t, min_windows=lo_n).admit_pseudo(pseudo_entry(confs))
    assert loose or not strict


def test_wrong_provenance_routes():
    buf = Buffer(100, 100)
    with pytest.raises(ValueError):
        buf.insert_true(pseudo_entry([0.95] * 20))
    with pytest.raises(ValueError):
        buf.admit_pseudo(true_entry([0.0]))


def test_evict_true_under_budget():
    buf = Buffer(100, 100)
    assert buf.insert_true(true_entry([0.0])) == []


def test_evict_true_drops_farthest():
    # prototype at 0: distances 0.1, 0.5, 0.9 after centering
    buf = Buffer(20, 0)
    feats = [[-0.5 + 0.1], [-0.5 + 0.5], [-0.5 + 0.9]]
    offs = np.mean(feats)
    for f in feats:
        buf.true_partition.append(true_entry([f[0] - offs], seq=len(buf.true_partition)))
    evicted = evict_true(buf)
    assert [e.seq for e in evicted] == [2]
    assert buf.cost(TRUE) <= 20


def test_evict_true_ties_prefer_costlier_then_newer():
    buf = Buffer(30, 0)
    buf.true_partition = [
        true_entry([-1.0], cost=10, seq=0),
        true_entry([1.0], cost=20, seq=1),
        true_entry([1.0], cost=10, seq=2),
    ]
    # proto = 1/3: distances 4/3, 2/3, 2/3
    assert [e.seq for e in evict_true(buf)] == [0]
    buf = Buffer(15, 0)
    buf.true_partition = [true_entry([1.0], cost=10, seq=0), true_entry([-1.0], cost=10, seq=1)]
    assert [e.seq for e in evict_true(buf)] == [1]


@given(st.data())
@settings(max_examples=60, deadline=None)
def test_evict_true_matches_exhaustive(data):
    n = data.draw(st.integers(1, 8))
    items = []
    for seq in range(n):
        label = data.draw(st.integers(0, 2))
        feat = data.draw(st.lists(st.integers(-3, 3), min_size=2, max_size=2))
        c = data.draw(st.integers(4, 12))
        items.append((seq, label, feat, c, seq))
    budget = data.draw(st.integers(0, sum(it[3] for it in items)))
    buf = Buffer(budget, 0)
    buf.true_partition = [true_entry(f, lab, c, seq) for _, lab, f, c, seq in items]
    evict_true(buf)
    assert {e.seq for e in buf.true_partition} == kept_after_true_eviction(items, budget)


def test_evict_pseudo_keeps_most_confident():
    buf = Buffer(0, 20)
    buf.pseudo_partition = [pseudo_entry([c], seq=i) for i, c in enumerate([0.99, 0.92, 0.95])]
    evicted = evict_pseudo(buf)
    assert [e.seq for e in evicted] == [1]
    assert sorted(e.seq for e in buf.pseudo_partition) == [0, 2]


def test_evict_pseudo_ties_prefer_cheaper():
    buf = Buffer(0, 20)
    buf.pseudo_partition = [pseudo_entry([0.95], cost=c, seq=i) for i, c in enumerate([15, 8, 12])]
    evict_pseudo(buf)
    assert sorted(e.seq for e in buf.pseudo_partition) == [1, 2]


def test_evict_pseudo_prefix_stops_at_first_overflow():
    buf = Buffer(0, 25)
    buf.pseudo_partition = [pseudo_entry([0.99], cost=20, seq=0), pseudo_entry([0.98], cost=10, seq=1),
                            pseudo_entry([0.97], cost=5, seq=2)]
    evict_pseudo(buf)
    assert [e.seq for e in buf.pseudo_partition] == [0]


def test_partitions_independent():
    buf = Buffer(20, 10)
    buf.insert_true(true_entry([0.0], cost=10))
    buf.insert_true(true_entry([1.0], cost=10))
    verdict = buf.admit_pseudo(pseudo_entry([0.99] * 20, cost=10))
    assert verdict and verdict.evicted == ()
    assert len(buf.true_partition) == 2


@given(st.lists(st.tuples(st.booleans(), st.integers(4, 40), st.integers(0, 3),
                          st.floats(0, 1), st.floats(-5, 5)), max_size=120),
       st.integers(0, 200), st.integers(0, 200))
@settings(max_examples=60, deadline=None)
def test_budget_safety(ops, bt, bp):
    buf = Buffer(bt, bp, min_windows=1)
    for is_true, c, label, conf, f in ops:
        if is_true:
            buf.insert(true_entry([f], label, c))
        else:
            buf.insert(pseudo_entry([conf], c, [f], label))
        assert buf.cost(TRUE) <= bt and buf.cost(PSEUDO) <= bp


def test_feature_length_mismatch():
    buf = Buffer(100, 100)
    buf.insert_true(true_entry([0.0, 1.0]))
    with pytest.raises(ValueError):
        buf.insert_true(true_entry([0.0]))


@pytest.mark.parametrize("kw", [{"budget_true": -1}, {"min_windows": 0}, {"mix_ratio": (0, 0)},
                                {"mix_ratio": (-1, 2)}])
def test_buffer_validation(kw):
    args = {"budget_true": 10, "budget_pseudo": 10, **kw}
    with pytest.raises(ValueError):
        Buffer(**args)


def test_split_batch_examples():
    assert split_batch(10, (8, 2), 100, 100) == (8, 2)
    assert split_batch(10, (8, 2), 100, 0) == (10, 0)
    assert split_batch(10, (8, 2), 3, 100) == (3, 7)
    assert split_batch(10, (8, 2), 3, 2) == (3, 2)
    assert split_batch(5, (8, 2), 100, 100) == (4, 1)


@given(st.integers(1, 200), st.integers(0, 10), st.integers(0, 10), st.integers(0, 300),
       st.integers(0, 300))
def test_split_batch_properties(b, t, p, at, ap):
    if t + p == 0:
        return
    nt, np_ = split_batch(b, (t, p), at, ap)
    assert 0 <= nt <= at and 0 <= np_ <= ap
    assert nt + np_ == min(b, at + ap)


def full_buffer(n_true=20, n_pseudo=20):
    buf = Buffer(10 ** 6, 10 ** 6)
    for i in range(n_true):
        buf.insert_true(BufferEntry(payload(10, fill=i), i % 3, TRUE, [], [float(i)]))
    for i in range(n_pseudo):
        buf.admit_pseudo(BufferEntry(payload(10, fill=100 + i), i % 3, PSEUDO, [0.95] * 20, [float(i)]))
    return buf


def test_replay_mix():
    batch = sample_replay_batch(full_buffer(), 10, seed=0)
    assert [it.provenance for it in batch].count(TRUE) == 8
    assert [it.provenance for it in batch].count(PSEUDO) == 2
    assert all(it.segment.n == 8 for it in batch)


def test_replay_backfill_and_empty():
    batch = sample_replay_batch(full_buffer(n_pseudo=0), 10, seed=0)
    assert [it.provenance for it in batch] == [TRUE] * 10
    assert sample_replay_batch(Buffer(10, 10), 10, seed=0) == []


def test_replay_deterministic():
    buf = full_buffer()
    a = [(it.label, float(it.segment.data[0, 0])) for it in buf.sample(10, 42)]
    b = [(it.label, float(it.segment.data[0, 0])) for it in buf.sample(10, 42)]
    c = [(it.label, float(it.segment.data[0, 0])) for it in buf.sample(10, 43)]
    assert a == b and a != c


def test_replay_without_replacement():
    batch = sample_replay_batch(full_buffer(), 40, seed=1)
    fills = [float(it.segment.data[0, 0]) for it in batch]
    assert len(set(fills)) == 40


def test_batch_size_validation():
    with pytest.raises(ValueError):
        sample_replay_batch(full_buffer(), 0, seed=0)


def test_save_load_round_trip(tmp_path):
    buf = full_buffer(5, 4)
    buf.budget_true, buf.budget_pseudo = 500, 400
    rb.save(buf, tmp_path)
    back = rb.load(tmp_path)
    assert back.stats() == buf.stats()
    assert (back.conf_threshold, back.min_windows, back.mix_ratio) == (0.9, 15, (8, 2))
    for a, b in zip(buf.entries, back.entries):
        assert a.payload == b.payload and a.label == b.label and a.provenance == b.provenance
        assert a.seq == b.seq and a.mean_confidence == b.mean_confidence
        np.testing.assert_array_equal(a.feature, b.feature)
    index = (tmp_path / "index.tsv").read_text().splitlines()
    assert sum(not line.startswith("#") for line in index) == 9
