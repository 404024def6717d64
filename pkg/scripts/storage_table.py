"""Realized stored scalars per segment for each preset and keep ratio.

Usage: python scripts/storage_table.py [--seeds 5] [--ratios 0.15,0.10,0.05]
"""

import argparse
import csv
import sys

import numpy as np

from salient_replay import codec
from salient_replay.saliency import PRESETS
from salient_replay.synthetic import Event, SyntheticSpec, generate
from salient_replay.types import cost

SHAPES = {"isruc": (3000, 6), "faced": (7500, 32), "physionet-mi": (640, 64)}
BANDS = {"isruc": (11.0, 16.0), "faced": (8.0, 13.0), "physionet-mi": (8.0, 13.0)}


def fixture(preset, seed):
    cfg = PRESETS[preset]
    n, channels = SHAPES[preset]
    rng = np.random.default_rng(seed)
    ev = Event(center=round(float(rng.uniform(1.0, n / cfg.fs - 1.0)), 2), duration=0.8,
               band=BANDS[preset], amplitude=4.0)
    seg, _ = generate(SyntheticSpec(fs=cfg.fs, n=n, channels=channels, pink=1.0, white=0.25,
                                    events=(ev,), seed=seed))
    return seg


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--ratios", default="0.15,0.10,0.05")
    ap.add_argument("--dmax", type=int, default=64)
    args = ap.parse_args(argv)
    ratios = [float(r) for r in args.ratios.split(",")]

    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["preset", "N", "C", "ratio", "u", "d", "mean_protected", "realized_pct",
                  "bracket_low_pct", "bracket_high_pct"])
    for preset, cfg in PRESETS.items():
        n, channels = SHAPES[preset]
        for r in ratios:
            comp = [codec.compress(fixture(preset, s), r, cfg, args.dmax) for s in range(args.seeds)]
            realized = [cost(c) / (n * channels) for c in comp]
            out.writerow([
                preset, n, channels, r, comp[0].u, comp[0].d,
                f"{np.mean([c.protected_count for c in comp]):.1f}",
                f"{100 * np.mean(realized):.2f}",
                f"{100 * (r - 1 / args.dmax):.2f}",
                f"{100 * (r + cfg.phi + 2 / n):.2f}",
            ])


if __name__ == "__main__":
    main()
