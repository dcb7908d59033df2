#!/usr/bin/env python3
"""Regenerate the committed fixtures: synthetic datasets, trained weights,
and the served smoke-test classifier.  Deterministic; safe to re-run.

Usage: python3 scripts/make_fixtures.py
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from igaff.imagecore import Batch, Image  # noqa: E402
from igaff.manifest import DatasetManifest, save_manifest  # noqa: E402
from igaff.models import LinearModel, Mlp1Model, save_model  # noqa: E402
from igaff.tensorio import save_image, write_tensor  # noqa: E402


def quadrant_images(rng: np.random.Generator, n: int, side: int, square: int) -> tuple[np.ndarray, np.ndarray]:
    """Class k = bright square in quadrant k over a dim, lightly noisy field."""
    images = np.zeros((n, 3, side, side), dtype=np.float32)
    labels = rng.integers(0, 4, n)
    half = side // 2
    anchors = [(0, 0), (0, half), (half, 0), (half, half)]
    for i in range(n):
        background = rng.uniform(0.1, 0.35)
        bright = rng.uniform(0.7, 0.95)
        img = np.full((3, side, side), background, dtype=np.float64)
        img += rng.uniform(-0.05, 0.05, img.shape)
        ay, ax = anchors[labels[i]]
        oy = ay + rng.integers(1, half - square)
        ox = ax + rng.integers(1, half - square)
        img[:, oy : oy + square, ox : ox + square] = bright + rng.uniform(-0.03, 0.03, (3, square, square))
        images[i] = np.clip(img, 0.0, 1.0).astype(np.float32)
    return images, labels.astype(np.int64)


def shape_brightness_images(rng: np.random.Generator, n: int, side: int) -> tuple[np.ndarray, np.ndarray]:
    """Classes {square, horizontal bar} x {dim, bright} on a dark field.

    The brightness split leaves the classifier genuinely sensitive to the
    attack's additive noise, which is what the smoke test needs.
    """
    images = np.zeros((n, 3, side, side), dtype=np.float32)
    labels = rng.integers(0, 4, n)
    size = side // 3
    for i in range(n):
        background = rng.uniform(0.05, 0.15)
        img = np.full((3, side, side), background, dtype=np.float64)
        img += rng.uniform(-0.03, 0.03, img.shape)
        shape_kind = labels[i] % 2
        bright = labels[i] // 2
        level = rng.uniform(0.42, 0.52) if bright == 0 else rng.uniform(0.8, 0.92)
        if shape_kind == 0:
            oy = rng.integers(2, side - size - 2)
            ox = rng.integers(2, side - size - 2)
            img[:, oy : oy + size, ox : ox + size] = level
        else:
            t = max(3, size // 2)
            oy = rng.integers(2, side - t - 2)
            img[:, oy : oy + t, 2 : side - 2] = level
        images[i] = np.clip(img, 0.0, 1.0).astype(np.float32)
    return images, labels.astype(np.int64)


def train_mlp(
    rng: np.random.Generator,
    images: np.ndarray,
    labels: np.ndarray,
    hidden: int,
    n_cls: int = 4,
    steps: int = 400,
    lr: float = 0.5,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Full-batch softmax-CE gradient descent; returns float32 weights."""
    n = images.shape[0]
    x = images.reshape(n, -1).astype(np.float64)
    d = x.shape[1]
    onehot = np.eye(n_cls)[labels]
    w1 = rng.normal(0, 0.1, (hidden, d))
    b1 = np.zeros(hidden)
    w2 = rng.normal(0, 0.1, (n_cls, hidden))
    b2 = np.zeros(n_cls)
    for step in range(steps):
        pre = x @ w1.T + b1
        h = np.maximum(pre, 0.0)
        logits = h @ w2.T + b2
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        grad_logits = (probs - onehot) / n
        gw2 = grad_logits.T @ h
        gb2 = grad_logits.sum(axis=0)
        gh = grad_logits @ w2
        gpre = gh * (pre > 0)
        gw1 = gpre.T @ x
        gb1 = gpre.sum(axis=0)
        w1 -= lr * gw1
        b1 -= lr * gb1
        w2 -= lr * gw2
        b2 -= lr * gb2
    return (w.astype(np.float32) for w in (w1, b1, w2, b2))


def write_dataset(images: np.ndarray, labels: np.ndarray, out_dir: Path, prefix: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(images.shape[0]):
        rel = f"{prefix}_{i:03d}.igt"
        save_image(Image(images[i]), out_dir / rel)
        entries.append((rel, int(labels[i])))
    manifest = DatasetManifest(
        root=out_dir,
        entries=entries,
        num_classes=4,
        image_shape=tuple(images.shape[1:]),
        class_names=["top-left", "top-right", "bottom-left", "bottom-right"],
    )
    save_manifest(manifest, out_dir / "manifest.csv")


def main() -> None:
    # --- fixture32: the bundled evaluation set for the attack harness -------
    rng = np.random.default_rng(20240601)
    train_imgs, train_labels = shape_brightness_images(rng, 512, side=16)
    eval_imgs, eval_labels = shape_brightness_images(rng, 32, side=16)
    write_dataset(eval_imgs, eval_labels, ROOT / "fixtures" / "data" / "fixture32", "img")

    w1, b1, w2, b2 = train_mlp(np.random.default_rng(7), train_imgs, train_labels, hidden=32, steps=1500, lr=0.4)
    mlp = Mlp1Model(w1, b1, w2, b2, (3, 16, 16))
    save_model(mlp, ROOT / "fixtures" / "models" / "mlp32")
    acc = float(np.mean(np.argmax(mlp.predict(Batch(eval_imgs)), axis=1) == eval_labels))
    print(f"mlp32 accuracy on fixture32: {100 * acc:.1f}%")

    # --- linear8: tiny weights for wire-protocol equivalence tests ----------
    lin_rng = np.random.default_rng(11)
    linear = LinearModel(
        lin_rng.normal(0, 0.2, (4, 3 * 8 * 8)).astype(np.float32),
        lin_rng.normal(0, 0.1, 4).astype(np.float32),
        (3, 8, 8),
    )
    save_model(linear, ROOT / "fixtures" / "models" / "linear8")

    # --- smoke64 + served smoke classifier (normalized server-side) ---------
    smoke_rng = np.random.default_rng(31415)
    smoke_train, smoke_train_labels = shape_brightness_images(smoke_rng, 768, side=32)
    smoke_eval, smoke_eval_labels = shape_brightness_images(smoke_rng, 64, side=32)
    write_dataset(smoke_eval, smoke_eval_labels, ROOT / "fixtures" / "data" / "smoke64", "img")

    mean = smoke_train.mean(axis=(0, 2, 3), dtype=np.float64)
    std = smoke_train.std(axis=(0, 2, 3), dtype=np.float64)
    normalized = ((smoke_train - mean[None, :, None, None]) / std[None, :, None, None]).astype(np.float32)
    sw1, sb1, sw2, sb2 = train_mlp(
        np.random.default_rng(8), normalized, smoke_train_labels, hidden=64, steps=3000, lr=0.4
    )

    served_dir = ROOT / "modelserver" / "models" / "smoke-mlp"
    served_dir.mkdir(parents=True, exist_ok=True)
    for name, arr in (("w1", sw1), ("b1", sb1), ("w2", sw2), ("b2", sb2)):
        write_tensor(served_dir / f"{name}.igt", arr)
    (served_dir / "model.json").write_text(
        json.dumps(
            {
                "kind": "mlp1",
                "input_shape": [3, 32, 32],
                "num_classes": 4,
                "tensors": {"w1": "w1.igt", "b1": "b1.igt", "w2": "w2.igt", "b2": "b2.igt"},
                "normalize": {"mean": [float(v) for v in mean], "std": [float(v) for v in std]},
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )

    # report the served model's clean accuracy for sanity
    flat = ((smoke_eval - mean[None, :, None, None]) / std[None, :, None, None]).reshape(64, -1).astype(np.float32)
    hidden = np.maximum(flat @ sw1.T + sb1, 0.0)
    preds = np.argmax(hidden @ sw2.T + sb2, axis=1)
    print(f"smoke-mlp accuracy on smoke64: {100 * float(np.mean(preds == smoke_eval_labels)):.1f}%")


if __name__ == "__main__":
    main()
