"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data or format error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import buffer as buffer_mod
from . import codec, metrics, saliency, synthetic
from .saliency import PRESETS, SaliencyConfig
from .types import PSEUDO, TRUE, BufferEntry

log = logging.getLogger("salient_replay")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass
class RunConfig:
    saliency: SaliencyConfig
    keep_ratio: float = 0.15
    d_max: int = codec.DEFAULT_DMAX
    budget_true: int = 0
    budget_pseudo: int = 0
    conf_threshold: float = 0.9
    min_windows: int = 15
    mix_ratio: tuple = (8, 2)
    batch_size: int = 10
    seed: int = 0

    def validate(self) -> "RunConfig":
        if not 0 < self.keep_ratio <= 1:
            raise UsageError(f"--ratio must lie in (0, 1], got {self.keep_ratio}")
        if self.d_max < 1:
            raise UsageError(f"--dmax must be >= 1, got {self.d_max}")
        if self.budget_true < 0 or self.budget_pseudo < 0:
            raise UsageError("budgets must be non-negative")
        if not 0 <= self.conf_threshold <= 1:
            raise UsageError(f"confidence threshold must be in [0, 1], got {self.conf_threshold}")
        if self.min_windows < 1 or self.batch_size < 1:
            raise UsageError("--min-windows and --batch-size must be >= 1")
        return self


def _saliency_from_args(args) -> SaliencyConfig:
    name = getattr(args, "preset", None) or "isruc"
    try:
        cfg = saliency.get_preset(name)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    path = getattr(args, "saliency_config", None)
    if path:
        try:
            overrides = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read saliency config {path}: {exc}") from None
        known = {f.name for f in fields(SaliencyConfig)}
        unknown = set(overrides) - known
        if unknown:
            raise UsageError(f"unknown saliency fields: {', '.join(sorted(unknown))}")
        if "bands" in overrides:
            overrides["bands"] = tuple(tuple(b) for b in overrides["bands"])
        try:
            cfg = replace(cfg, **overrides)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid saliency config: {exc}") from None
    return cfg


def _parse_mix(text: str) -> tuple:
    try:
        t, p = (int(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"mix ratio must look like 8:2, got {text!r}") from None
    return t, p


def _run_config(args) -> RunConfig:
    try:
        cfg = RunConfig(
            saliency=_saliency_from_args(args),
            keep_ratio=getattr(args, "ratio", 0.15),
            d_max=getattr(args, "dmax", codec.DEFAULT_DMAX),
            budget_true=getattr(args, "budget_true", 0),
            budget_pseudo=getattr(args, "budget_pseudo", 0),
            conf_threshold=getattr(args, "conf_threshold", 0.9),
            min_windows=getattr(args, "min_windows", 15),
            mix_ratio=_parse_mix(getattr(args, "mix", "8:2")),
            batch_size=getattr(args, "batch_size", 10),
            seed=getattr(args, "seed", 0),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg.validate()


def _emit(payload, out: str | None, fmt: str = "json", rows=None) -> None:
    if fmt == "csv":
        rows = rows if rows is not None else [payload]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
    else:
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _read_raw(path):
    try:
        return codec.read_raw(path)
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from None
    except codec.FormatError as exc:
        raise DataError(f"{path}: {exc}") from None


def compression_summary(c, source=None, target=None) -> dict:
    raw = c.n * c.channels
    stored = (c.n_low + c.protected_count) * c.channels
    return {
        "input": str(source) if source else None,
        "output": str(target) if target else None,
        "N": c.n,
        "C": c.channels,
        "fs": c.fs,
        "u": c.u,
        "d": c.d,
        "y_length": c.n_low,
        "protected_count": c.protected_count,
        "stored_scalars": stored,
        "raw_scalars": raw,
        "realized_ratio": stored / raw,
        "container_bytes": codec.container_size(c.n_low, c.protected_count, c.channels),
        "budget_overshoot": bool(c.budget_overshoot),
    }


def cmd_compress(args) -> int:
    cfg = _run_config(args)
    seg = _read_raw(args.input)
    try:
        c = codec.compress(seg, cfg.keep_ratio, cfg.saliency, cfg.d_max)
    except ValueError as exc:
        raise DataError(f"{args.input}: {exc}") from None
    codec.save(args.output, c)
    summary = compression_summary(c, args.input, args.output)
    summary.update(keep_ratio=cfg.keep_ratio, preset=cfg.saliency.name, d_max=cfg.d_max)
    _emit(summary, args.out)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    try:
        c = codec.load(args.input)
    except (OSError, codec.FormatError) as exc:
        raise DataError(f"{args.input}: {exc}") from None
    seg, info = codec.reconstruct(c, return_info=True)
    codec.write_raw(args.output, seg)
    payload = {
        "input": str(args.input),
        "output": str(args.output),
        "fallback": info["fallback"],
        "problems": info["problems"],
        "N": seg.n,
        "C": seg.channels,
        "realized_ratio": c.realized_ratio,
    }
    rows = None
    if args.original:
        orig = _read_raw(args.original)
        if orig.data.shape != seg.data.shape:
            raise DataError(
                f"original shape {orig.data.shape} differs from reconstruction {seg.data.shape}"
            )
        report = metrics.fidelity(orig, seg, margin=args.margin, realized_ratio=c.realized_ratio)
        payload["fidelity"] = report.to_dict()
        rows = [
            {"channel": ch, "pearson": r, "snr_db": s, "psd_cos": p}
            for ch, (r, s, p) in enumerate(zip(report.pearson, report.snr_db, report.psd_cos))
        ]
    if args.format == "csv":
        if rows is None:
            rows = [{k: payload[k] for k in ("N", "C", "fallback", "realized_ratio")}]
        _emit(payload, args.out, "csv", rows)
    else:
        _emit(payload, args.out)
    return EXIT_OK


def _parse_ratios(text: str) -> list:
    try:
        ratios = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--ratios must be comma-separated numbers, got {text!r}") from None
    if not ratios or any(not 0 < r <= 1 for r in ratios):
        raise UsageError(f"ratios must lie in (0, 1], got {text!r}")
    return ratios


def sweep(segments, ratios, config: SaliencyConfig, d_max: int, margin: int = 0):
    """Mean fidelity and realized keep ratio per target ratio.

    ``segments`` yields ``(name, segment_or_exception)``; failures are recorded
    and skipped.
    """
    segments = list(segments)
    rows, failures = [], []
    for r in ratios:
        pear, snr, psd, realized = [], [], [], []
        for name, seg in segments:
            if isinstance(seg, Exception):
                failures.append({"ratio": r, "input": name, "error": str(seg)})
                continue
            try:
                c = codec.compress(seg, r, config, d_max)
                rep = metrics.fidelity(seg, codec.reconstruct(c), margin=margin)
            except ValueError as exc:
                failures.append({"ratio": r, "input": name, "error": str(exc)})
                continue
            pear.append(rep.mean_pearson)
            snr.append(rep.mean_snr_db)
            psd.append(rep.mean_psd_cos)
            realized.append(c.realized_ratio)
        ok = len(realized)
        rows.append({
            "ratio": r,
            "n_ok": ok,
            "mean_pearson": float(np.mean(pear)) if ok else float("nan"),
            "mean_snr_db": float(np.mean(snr)) if ok else float("nan"),
            "mean_psd_cos": float(np.mean(psd)) if ok else float("nan"),
            "realized_mean": float(np.mean(realized)) if ok else float("nan"),
            "realized_min": float(np.min(realized)) if ok else float("nan"),
            "realized_max": float(np.max(realized)) if ok else float("nan"),
        })
    return rows, failures


def cmd_sweep(args) -> int:
    cfg = _run_config(args)
    ratios = _parse_ratios(args.ratios)

    def load_all():
        for path in args.inputs:
            try:
                yield str(path), codec.read_raw(path)
            except (OSError, codec.FormatError) as exc:
                log.warning("%s: %s", path, exc)
                yield str(path), exc

    rows, failures = sweep(load_all(), ratios, cfg.saliency, cfg.d_max, args.margin)
    if args.format == "csv":
        _emit(None, args.out, "csv", rows)
        for f in failures:
            log.warning("sweep failure at r=%s on %s: %s", f["ratio"], f["input"], f["error"])
    else:
        _emit({"rows": rows, "failures": failures, "preset": cfg.saliency.name}, args.out)
    return EXIT_OK


def read_manifest(path):
    """Yield ``(line_no, record or error string)`` for a stream manifest.

    Tab-separated columns: raw segment path (relative to the manifest),
    label, provenance (true|pseudo), window confidences and feature vector
    (both comma-separated). Blank lines and ``#`` comments are ignored.
    """
    path = Path(path)
    base = path.parent
    for no, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 5:
            yield no, f"expected 5 tab-separated columns, got {len(cols)}"
            continue
        seg_path, label, prov, conf, feat = cols
        try:
            record = {
                "path": base / seg_path,
                "label": int(label),
                "provenance": prov.strip(),
                "confidences": [float(v) for v in conf.split(",")] if conf.strip() else [],
                "feature": [float(v) for v in feat.split(",")],
            }
        except ValueError as exc:
            yield no, f"unparseable field: {exc}"
            continue
        if record["provenance"] not in (TRUE, PSEUDO):
            yield no, f"provenance must be true or pseudo, got {prov!r}"
            continue
        yield no, record


def simulate_buffer(manifest, cfg: RunConfig):
    """Run the manifest stream through a budgeted buffer; returns (events, summary, buffer)."""
    buf = buffer_mod.Buffer(
        budget_true=cfg.budget_true,
        budget_pseudo=cfg.budget_pseudo,
        conf_threshold=cfg.conf_threshold,
        min_windows=cfg.min_windows,
        mix_ratio=cfg.mix_ratio,
    )
    events = []
    counts = {"inserted_true": 0, "admitted": 0, "rejected": 0, "evicted_true": 0,
              "evicted_pseudo": 0, "skipped": 0}

    def evicted(entries, partition):
        for e in entries:
            events.append({"event": "evict", "partition": partition, "seq": e.seq,
                           "label": e.label, "cost": e.cost})
            counts[f"evicted_{partition}"] += 1

    for no, rec in read_manifest(manifest):
        if isinstance(rec, str):
            log.warning("manifest line %d skipped: %s", no, rec)
            events.append({"event": "skip", "line": no, "reason": rec})
            counts["skipped"] += 1
            continue
        try:
            seg = codec.read_raw(rec["path"])
            payload = codec.compress(seg, cfg.keep_ratio, cfg.saliency, cfg.d_max)
            entry = BufferEntry(payload, rec["label"], rec["provenance"], rec["confidences"],
                                rec["feature"])
            if entry.provenance == TRUE:
                gone = buf.insert_true(entry)
                events.append({"event": "insert", "partition": TRUE, "line": no, "seq": entry.seq,
                               "label": entry.label, "cost": entry.cost})
                counts["inserted_true"] += 1
                evicted(gone, TRUE)
            else:
                adm = buf.admit_pseudo(entry)
                if adm.accepted:
                    events.append({"event": "admit", "partition": PSEUDO, "line": no,
                                   "seq": entry.seq, "label": entry.label, "cost": entry.cost,
                                   "mean_confidence": entry.mean_confidence})
                    counts["admitted"] += 1
                    evicted(adm.evicted, PSEUDO)
                else:
                    events.append({"event": "reject", "line": no, "reason": adm.reason})
                    counts["rejected"] += 1
        except (OSError, ValueError) as exc:
            log.warning("manifest line %d skipped: %s", no, exc)
            events.append({"event": "skip", "line": no, "reason": str(exc)})
            counts["skipped"] += 1

    batch = []
    if buf.entries:
        batch = buffer_mod.sample_replay_batch(buf, cfg.batch_size, cfg.seed)
    summary = {
        **buf.stats(),
        **counts,
        "replay_batch": {
            "size": len(batch),
            "true": sum(item.provenance == TRUE for item in batch),
            "pseudo": sum(item.provenance == PSEUDO for item in batch),
            "labels": [item.label for item in batch],
        },
        "seed": cfg.seed,
    }
    return events, summary, buf


def cmd_buffer_sim(args) -> int:
    cfg = _run_config(args)
    try:
        events, summary, buf = simulate_buffer(args.manifest, cfg)
    except OSError as exc:
        raise DataError(f"{args.manifest}: {exc}") from None
    text = "".join(json.dumps(e, sort_keys=True) + "\n" for e in events)
    if args.events:
        Path(args.events).write_text(text)
    else:
        summary["events"] = events
    if args.save_dir:
        buffer_mod.save(buf, args.save_dir)
        summary["saved_to"] = str(args.save_dir)
    _emit(summary, args.out)
    return EXIT_OK


def cmd_gen_synthetic(args) -> int:
    try:
        spec_dict = json.loads(Path(args.spec).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read fixture spec {args.spec}: {exc}") from None
    count = int(spec_dict.pop("count", 1))
    try:
        spec = synthetic.SyntheticSpec.from_dict(spec_dict)
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid fixture spec: {exc}") from None
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(count):
        s = replace(spec, seed=spec.seed + i)
        try:
            seg, intervals = synthetic.generate(s)
        except ValueError as exc:
            raise UsageError(f"fixture spec error: {exc}") from None
        stem = outdir / f"segment_{i:03d}"
        codec.write_raw(stem.with_suffix(".raw"), seg)
        synthetic.dump_events(stem.with_suffix(".events.json"), s, intervals)
        written.append({"raw": str(stem.with_suffix(".raw")), "seed": s.seed,
                        "events": [list(iv) for iv in intervals]})
    _emit({"written": written}, args.out)
    return EXIT_OK


def cmd_presets(args) -> int:
    rows = [PRESETS[name].to_dict() for name in sorted(PRESETS)]
    if args.format == "csv":
        flat = [{**r, "bands": ";".join(f"{lo}-{hi}" for lo, hi in r["bands"])} for r in rows]
        _emit(None, args.out, "csv", flat)
    else:
        _emit({"presets": rows}, args.out)
    return EXIT_OK


def cmd_metrics(args) -> int:
    try:
        plog = metrics.read_log_csv(Path(args.log).read_text())
        summary = metrics.uicl_summary(plog)
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"{args.log}: {exc}") from None
    summary["T"] = plog.T
    _emit(summary, args.out, args.format)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="salient-replay", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def compression_opts(sp):
        sp.add_argument("--preset", default="isruc", help=f"one of {', '.join(sorted(PRESETS))}")
        sp.add_argument("--saliency-config", help="JSON file overriding preset fields")
        sp.add_argument("--dmax", type=int, default=codec.DEFAULT_DMAX)

    sp = sub.add_parser("compress", help="raw segment -> .adcr container")
    sp.add_argument("input")
    sp.add_argument("output")
    sp.add_argument("--ratio", type=float, default=0.15)
    compression_opts(sp)
    sp.add_argument("--out", help="write the JSON summary here instead of stdout")
    sp.set_defaults(func=cmd_compress)

    sp = sub.add_parser("reconstruct", help=".adcr container -> raw segment")
    sp.add_argument("input")
    sp.add_argument("output")
    sp.add_argument("--original", help="raw segment to score the reconstruction against")
    sp.add_argument("--margin", type=int, default=0, help="edge samples excluded from fidelity")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("sweep", help="fidelity vs. keep ratio over a set of raw segments")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--ratios", default="0.05,0.1,0.15,0.25,0.5,1.0")
    sp.add_argument("--margin", type=int, default=0)
    compression_opts(sp)
    sp.add_argument("--format", choices=("json", "csv"), default="csv")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("buffer-sim", help="replay a stream manifest through a budgeted buffer")
    sp.add_argument("manifest")
    sp.add_argument("--budget-true", type=int, required=True)
    sp.add_argument("--budget-pseudo", type=int, required=True)
    sp.add_argument("--conf-threshold", type=float, default=0.9)
    sp.add_argument("--min-windows", type=int, default=15)
    sp.add_argument("--mix", default="8:2", help="true:pseudo replay ratio")
    sp.add_argument("--batch-size", type=int, default=10)
    sp.add_argument("--ratio", type=float, default=0.15)
    sp.add_argument("--seed", type=int, default=0)
    compression_opts(sp)
    sp.add_argument("--events", help="write the JSON-lines event log here")
    sp.add_argument("--save-dir", help="persist the final buffer (containers + index.tsv)")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_buffer_sim)

    sp = sub.add_parser("gen-synthetic", help="write synthetic fixtures from a JSON spec")
    sp.add_argument("spec")
    sp.add_argument("outdir")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen_synthetic)

    sp = sub.add_parser("presets", help="list the saliency presets")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_presets)

    sp = sub.add_parser("metrics", help="ACC/MF1/AAA/AAF1 from a prediction log CSV")
    sp.add_argument("log", help="CSV with columns step,subject,predicted,true")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
