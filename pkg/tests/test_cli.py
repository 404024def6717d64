import json
import struct
import subprocess
import sys

import numpy as np
import pytest

from salient_replay import codec
from salient_replay.buffer import split_batch
from salient_replay.cli import main
from salient_replay.saliency import PRESETS, analyze
from salient_replay.types import Segment


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def spindle_spec(tmp_path, **extra):
    spec = {
        "fs": 100.0, "n": 6000, "channels": 2, "noise": 1.0, "seed": 3,
        "events": [{"center": 30.0, "duration": 1.0, "band": [12.0, 14.0], "amplitude": 4.0}],
        **extra,
    }
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    return path


@pytest.fixture
def raw_file(tmp_path, capsys):
    code, _, _ = run(capsys, "gen-synthetic", spindle_spec(tmp_path), tmp_path / "fx")
    assert code == 0
    return tmp_path / "fx" / "segment_000.raw"


def test_gen_synthetic_outputs(tmp_path, capsys, raw_file):
    seg = codec.read_raw(raw_file)
    assert seg.data.shape == (2, 6000) and seg.fs == 100.0
    events = json.loads((tmp_path / "fx" / "segment_000.events.json").read_text())
    assert events["events"][0]["start"] == 2950 and events["events"][0]["stop"] == 3050


def test_gen_synthetic_deterministic(tmp_path, capsys):
    spec = spindle_spec(tmp_path, count=2)
    run(capsys, "gen-synthetic", spec, tmp_path / "a")
    run(capsys, "gen-synthetic", spec, tmp_path / "b")
    for name in ("segment_000.raw", "segment_001.raw"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "segment_000.raw").read_bytes() != (tmp_path / "a" / "segment_001.raw").read_bytes()


def test_gen_synthetic_zero_noise_no_events(tmp_path, capsys):
    spec = tmp_path / "z.json"
    spec.write_text(json.dumps({"fs": 100.0, "n": 500, "channels": 3, "noise": 0.0}))
    assert run(capsys, "gen-synthetic", spec, tmp_path / "z")[0] == 0
    assert not codec.read_raw(tmp_path / "z" / "segment_000.raw").data.any()


def test_gen_synthetic_burst_is_protected(raw_file):
    seg = codec.read_raw(raw_file)
    ps = analyze(seg, PRESETS["isruc"]).protected
    inside = np.isin(np.arange(2950, 3050), ps.indices)
    assert inside.mean() >= 0.8


def test_gen_synthetic_event_outside(tmp_path, capsys):
    spec = tmp_path / "bad.json"
    spec.write_text(json.dumps({"fs": 100.0, "n": 500, "noise": 1.0,
                                "events": [{"center": 4.9, "duration": 1.0, "band": [11, 16],
                                            "amplitude": 1.0}]}))
    assert run(capsys, "gen-synthetic", spec, tmp_path / "o")[0] == 1


def test_compress_summary(tmp_path, capsys, raw_file):
    code, out, _ = run(capsys, "compress", raw_file, tmp_path / "x.adcr", "--ratio", "0.15")
    assert code == 0
    s = json.loads(out)
    assert (s["u"], s["d"]) == (3, 20)
    assert s["stored_scalars"] == (s["y_length"] + s["protected_count"]) * 2
    assert 0.15 - 1 / 64 <= s["realized_ratio"] <= 0.15 + 0.05 + 2 / 6000
    assert (tmp_path / "x.adcr").stat().st_size == s["container_bytes"]


def test_identity_round_trip(tmp_path, capsys, raw_file):
    assert run(capsys, "compress", raw_file, tmp_path / "x.adcr", "--ratio", "1")[0] == 0
    code, out, _ = run(capsys, "reconstruct", tmp_path / "x.adcr", tmp_path / "y.raw",
                       "--original", raw_file)
    assert code == 0
    rep = json.loads(out)
    assert rep["realized_ratio"] >= 1.0 and not rep["fallback"]
    assert min(rep["fidelity"]["snr_db"]) >= 60


def test_reconstruct_without_original(tmp_path, capsys, raw_file):
    run(capsys, "compress", raw_file, tmp_path / "x.adcr")
    code, out, _ = run(capsys, "reconstruct", tmp_path / "x.adcr", tmp_path / "y.raw")
    assert code == 0 and "fidelity" not in json.loads(out)
    assert codec.read_raw(tmp_path / "y.raw").data.shape == (2, 6000)


def test_reconstruct_csv(tmp_path, capsys, raw_file):
    run(capsys, "compress", raw_file, tmp_path / "x.adcr")
    code, out, _ = run(capsys, "reconstruct", tmp_path / "x.adcr", tmp_path / "y.raw",
                       "--original", raw_file, "--format", "csv", "--margin", "100")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "channel,pearson,snr_db,psd_cos" and len(lines) == 3


def test_tampered_header_uses_fallback(tmp_path, capsys, raw_file):
    run(capsys, "compress", raw_file, tmp_path / "x.adcr", "--ratio", "0.25")
    blob = bytearray((tmp_path / "x.adcr").read_bytes())
    # shrink Ñ by one and drop one y sample per channel so the stream still parses
    n_low = struct.unpack_from("<I", blob, 24)[0]
    count = struct.unpack_from("<I", blob, 20)[0]
    head = 28 + 4 * count + 8 * count
    y = np.frombuffer(bytes(blob[head:]), "<f4").reshape(2, n_low)[:, :-1]
    struct.pack_into("<I", blob, 24, n_low - 1)
    (tmp_path / "t.adcr").write_bytes(bytes(blob[:head]) + y.tobytes())
    code, out, _ = run(capsys, "reconstruct", tmp_path / "t.adcr", tmp_path / "y.raw")
    rep = json.loads(out)
    assert code == 0 and rep["fallback"] is True and rep["problems"]
    assert np.all(np.isfinite(codec.read_raw(tmp_path / "y.raw").data))


def test_format_error_exit_code(tmp_path, capsys):
    (tmp_path / "junk.adcr").write_bytes(b"NOPE" + bytes(40))
    code, _, err = run(capsys, "reconstruct", tmp_path / "junk.adcr", tmp_path / "y.raw")
    assert code == 2 and "byte offset 0" in err
    (tmp_path / "junk.raw").write_bytes(b"\x01")
    assert run(capsys, "compress", tmp_path / "junk.raw", tmp_path / "o.adcr")[0] == 2
    assert run(capsys, "compress", tmp_path / "missing.raw", tmp_path / "o.adcr")[0] == 2


def test_usage_errors(tmp_path, capsys, raw_file):
    code, _, err = run(capsys, "compress", raw_file, tmp_path / "o.adcr", "--preset", "nope")
    assert code == 1 and "isruc" in err and "faced" in err
    assert run(capsys, "compress", raw_file, tmp_path / "o.adcr", "--ratio", "1.5")[0] == 1
    assert run(capsys, "compress", raw_file, tmp_path / "o.adcr", "--dmax", "0")[0] == 1
    assert run(capsys, "sweep", raw_file, "--ratios", "0,0.5")[0] == 1
    with pytest.raises(SystemExit) as info:
        main(["compress"])
    assert info.value.code == 1
    capsys.readouterr()


def test_saliency_config_override(tmp_path, capsys, raw_file):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kappa": 100.0}))
    code, out, _ = run(capsys, "compress", raw_file, tmp_path / "o.adcr",
                       "--saliency-config", cfg)
    assert code == 0 and json.loads(out)["protected_count"] == 2
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(capsys, "compress", raw_file, tmp_path / "o.adcr", "--saliency-config", cfg)[0] == 1


def test_sweep_csv(tmp_path, capsys):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"fs": 100.0, "n": 3000, "channels": 1, "noise": 0.0, "count": 2,
                                "events": [{"center": 10.0, "duration": 16.0, "band": [2, 6],
                                            "amplitude": 1.0}]}))
    run(capsys, "gen-synthetic", spec, tmp_path / "sw")
    files = sorted((tmp_path / "sw").glob("*.raw"))
    code, out, _ = run(capsys, "sweep", *files, "--ratios", "0.1,0.15,0.25,0.5", "--margin", "200")
    assert code == 0
    rows = out.strip().splitlines()
    assert rows[0].startswith("ratio,n_ok,mean_pearson") and len(rows) == 5
    vals = [dict(zip(rows[0].split(","), r.split(","))) for r in rows[1:]]
    for row in vals:
        r = float(row["ratio"])
        assert r - 1 / 64 <= float(row["realized_min"])
        assert float(row["realized_max"]) <= r + 0.05 + 2 / 3000
    snr = [float(row["mean_snr_db"]) for row in vals]
    assert all(b >= a - 0.5 for a, b in zip(snr, snr[1:]))


def test_sweep_records_failures(tmp_path, capsys, raw_file):
    (tmp_path / "bad.raw").write_bytes(b"xx")
    code, out, _ = run(capsys, "sweep", raw_file, tmp_path / "bad.raw", "--ratios", "1.0",
                       "--format", "json")
    rep = json.loads(out)
    assert code == 0 and rep["rows"][0]["n_ok"] == 1 and len(rep["failures"]) == 1
    assert rep["rows"][0]["mean_snr_db"] == 100.0


def write_manifest(tmp_path, raw, rows):
    path = tmp_path / "stream.tsv"
    path.write_text("# stream\n" + "\n".join(
        "\t".join([raw.name, str(label), prov, ",".join(map(str, conf)), ",".join(map(str, feat))])
        for label, prov, conf, feat in rows) + "\n")
    return path


def test_buffer_sim_gate_count(tmp_path, capsys, raw_file):
    rows = [(i % 2, "pseudo", [0.95] * 20 if i % 4 else [0.5] * 20, [i, 0]) for i in range(20)]
    manifest = write_manifest(raw_file.parent, raw_file, rows)
    code, out, _ = run(capsys, "buffer-sim", manifest, "--budget-true", 10 ** 7,
                       "--budget-pseudo", 10 ** 7)
    s = json.loads(out)
    assert code == 0
    assert s["admitted"] == 15 and s["rejected"] == 5
    assert s["evicted_true"] == s["evicted_pseudo"] == 0
    assert s["replay_batch"] == {**s["replay_batch"], "size": 10, "true": 0, "pseudo": 10}


def test_buffer_sim_deterministic_and_budgeted(tmp_path, capsys, raw_file):
    rows = [(i % 3, "true" if i % 3 else "pseudo", [0.97] * 16, [i % 5, i % 7]) for i in range(18)]
    manifest = write_manifest(raw_file.parent, raw_file, rows)
    args = ["buffer-sim", manifest, "--budget-true", 6000, "--budget-pseudo", 3000,
            "--seed", 7, "--ratio", "0.1"]
    run(capsys, *args, "--events", tmp_path / "a.jsonl", "--save-dir", tmp_path / "saved")
    code, out, _ = run(capsys, *args, "--events", tmp_path / "b.jsonl")
    assert code == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    s = json.loads(out)
    assert s["true_cost"] <= 6000 and s["pseudo_cost"] <= 3000
    assert s["evicted_true"] > 0
    want = split_batch(10, (8, 2), s["true_entries"], s["pseudo_entries"])
    assert (s["replay_batch"]["true"], s["replay_batch"]["pseudo"]) == want
    assert (tmp_path / "saved" / "index.tsv").exists()


def test_buffer_sim_skips_malformed_rows(tmp_path, capsys, raw_file):
    manifest = raw_file.parent / "m.tsv"
    manifest.write_text(f"{raw_file.name}\t0\ttrue\t\t1,2\n"
                        f"{raw_file.name}\tx\ttrue\t\t1,2\n"
                        f"{raw_file.name}\t0\tmaybe\t\t1,2\n"
                        f"only\ttwo\n"
                        f"missing.raw\t0\ttrue\t\t1,2\n")
    code, out, _ = run(capsys, "buffer-sim", manifest, "--budget-true", 10 ** 6,
                       "--budget-pseudo", 0)
    s = json.loads(out)
    assert code == 0 and s["inserted_true"] == 1 and s["skipped"] == 4
    assert [e["event"] for e in s["events"]] == ["insert", "skip", "skip", "skip", "skip"]


def test_presets_listing(capsys):
    code, out, _ = run(capsys, "presets")
    names = [p["name"] for p in json.loads(out)["presets"]]
    assert code == 0 and names == ["faced", "isruc", "physionet-mi"]
    code, out, _ = run(capsys, "presets", "--format", "csv")
    assert out.splitlines()[0].startswith("name,") and len(out.splitlines()) == 4


def test_metrics_command(tmp_path, capsys):
    log = tmp_path / "log.csv"
    log.write_text("step,subject,predicted,true\n1,1,1,1\n1,2,1,1\n1,3,1,0\n2,2,0,0\n2,3,0,1\n3,3,1,1\n")
    code, out, _ = run(capsys, "metrics", log)
    s = json.loads(out)
    assert code == 0 and s["T"] == 3 and s["ACC"] == 100.0 and s["AAA"] == 25.0
    bad = tmp_path / "bad.csv"
    bad.write_text("step,subject,predicted,true\n1,1,0,0\n2,2,0,0\n")
    assert run(capsys, "metrics", bad)[0] == 2


def test_out_flag_writes_file(tmp_path, capsys):
    code, out, _ = run(capsys, "presets", "--out", tmp_path / "p.json")
    assert code == 0 and out == ""
    assert "isruc" in (tmp_path / "p.json").read_text()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "salient_replay", "presets", "--format", "csv"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "isruc" in proc.stdout
