#!/usr/bin/env python3
"""Desk-scale parameter-variation curves on the brightness oracle.

Sweeps the genetic attack's iteration count, mutation probability, crossover
probability, and noise intensity over 5 seeds and writes one CSV per
parameter into --out (default trend_out/).  These are the analogues of the
benchmark's SR-vs-parameter plots, runnable on a laptop.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from igaff.attacks import AttackConfig, aga_attack  # noqa: E402
from igaff.imagecore import Batch  # noqa: E402
from igaff.metrics import aggregate, success_rate  # noqa: E402
from igaff.models import BrightnessOracle, predict_labels  # noqa: E402
from igaff.rng import RngStream  # noqa: E402

GRIDS = {
    "iterations": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
    "p_mutation": [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0],
    "p_crossover": [0.0, 0.25, 0.5, 0.75, 1.0],
    "epsilon": [0.0, 0.05, 0.1, 0.2, 0.35, 0.5],
}


def trend_batch(n=16, side=64) -> Batch:
    rng = np.random.default_rng(99)
    imgs = np.zeros((n, 3, side, side), dtype=np.float32)
    for i in range(n):
        center = (i % 8 + 1 + 0.5) / 10
        imgs[i] = np.clip(np.full((3, side, side), center) + rng.uniform(-0.04, 0.04, (3, side, side)), 0, 1)
    return Batch(imgs)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="trend_out")
    parser.add_argument("--seeds", type=int, default=5)
    args = parser.parse_args()

    batch = trend_batch()
    model = BrightnessOracle(10, batch.image_shape)
    labels = predict_labels(model, batch)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    for param, grid in GRIDS.items():
        rows = []
        for value in grid:
            srs = []
            for seed in range(args.seeds):
                overrides = {param: int(value) if param == "iterations" else float(value)}
                cfg = AttackConfig(algorithm="aga", seed=seed, **overrides)
                out = aga_attack(batch, labels, model, cfg, rng=RngStream(seed))
                acc = 100 * float(np.mean(np.argmax(model.predict(out.batch), axis=1) == labels))
                srs.append(success_rate(100.0, acc))
            stat = aggregate(srs)
            rows.append([value, stat.mean, stat.std])
            print(f"{param}={value}: sr {stat.mean:.1f} +/- {stat.std:.1f}")
        with open(out_dir / f"{param}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([param, "sr_mean", "sr_std"])
            writer.writerows(rows)
    print(f"\ncurves written to {out_dir}/")


if __name__ == "__main__":
    main()
