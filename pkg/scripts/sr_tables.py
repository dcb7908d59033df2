#!/usr/bin/env python3
"""Recompute benchmark success rates from their clean/attacked accuracies.

Feeds published (clean, attacked) accuracy pairs through the SR formula and
prints the recomputed value next to the reported one.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from igaff.metrics import success_rate  # noqa: E402

ROWS = [
    ("Caltech-256", "ResNet-18", "genetic", "no", 80.02, 46.85, 41.45),
    ("Caltech-256", "DenseNet-121", "genetic", "no", 84.47, 51.22, 39.36),
    ("Caltech-256", "SwinV2", "genetic", "no", 90.16, 51.30, 43.10),
    ("Caltech-256", "ViT", "genetic", "no", 89.41, 62.39, 30.22),
    ("Food-101", "ResNet-18", "genetic", "no", 72.99, 32.68, 55.22),
    ("Food-101", "DenseNet-121", "genetic", "no", 78.59, 36.38, 53.71),
    ("Food-101", "SwinV2", "genetic", "no", 82.70, 36.31, 56.09),
    ("Food-101", "ViT", "genetic", "no", 82.14, 41.21, 49.83),
    ("Tiny-ImageNet", "ResNet-18", "genetic", "no", 70.96, 27.83, 60.78),
    ("Tiny-ImageNet", "DenseNet-121", "genetic", "no", 75.20, 29.43, 60.86),
    ("Tiny-ImageNet", "SwinV2", "genetic", "no", 83.55, 33.74, 59.62),
    ("Tiny-ImageNet", "ViT", "genetic", "no", 85.42, 30.77, 63.97),
    ("Caltech-256", "ResNet-18", "iterative", "no", 80.02, 69.86, 12.69),
    ("Caltech-256", "ResNet-18", "genetic", "yes", 78.02, 60.90, 21.95),
    ("Caltech-256", "SwinV2", "iterative", "yes", 89.53, 85.22, 4.81),
]


def main() -> None:
    print(f"{'dataset':<14} {'arch':<13} {'attack':<9} {'defended':<8} {'reported':>8} {'recomputed':>10} {'delta':>7}")
    worst = 0.0
    for dataset, arch, attack, defended, clean, attacked, reported in ROWS:
        got = success_rate(clean, attacked)
        delta = abs(got - reported)
        worst = max(worst, delta)
        print(f"{dataset:<14} {arch:<13} {attack:<9} {defended:<8} {reported:>8.2f} {got:>10.2f} {delta:>7.3f}")
    print(f"\nworst absolute deviation: {worst:.3f} (rounding tolerance 0.06)")


if __name__ == "__main__":
    main()
