"""Reconstruction fidelity against keep ratio on synthetic spindle fixtures.

Writes one CSV row per ratio (mean Pearson r, SNR, PSD cosine and realized
ratio over the fixtures). Usage:

    python scripts/keep_ratio_sweep.py --seeds 10 --ratios 0.05,0.1,0.15,0.25,0.5,1
"""

import argparse
import csv
import sys

from salient_replay.cli import sweep
from salient_replay.saliency import get_preset
from salient_replay.synthetic import generate, spindle_fixture


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--ratios", default="0.05,0.1,0.15,0.25,0.5,1.0")
    ap.add_argument("--preset", default="isruc")
    ap.add_argument("--dmax", type=int, default=64)
    ap.add_argument("--margin", type=int, default=200, help="edge samples excluded from metrics")
    args = ap.parse_args(argv)

    segments = [(f"seed{s}", generate(spindle_fixture(s))[0]) for s in range(args.seeds)]
    ratios = [float(r) for r in args.ratios.split(",")]
    rows, failures = sweep(segments, ratios, get_preset(args.preset), args.dmax, args.margin)
    out = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
    out.writeheader()
    out.writerows(rows)
    for f in failures:
        print(f"failed: {f}", file=sys.stderr)


if __name__ == "__main__":
    main()
