"""Dataset manifests: a CSV of (path, class_index) with a JSON sidecar.

The CSV holds one ``path,class_index`` row per image, paths relative to the
CSV's directory.  The sidecar (same stem, ``.json``) declares num_classes,
the post-preprocessing image shape, and optional class names.  Images whose
stored height/width differ from the declared shape are resized on load.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imagecore import Batch, Image, resize_bilinear
from .rng import RngStream
from .tensorio import load_image, save_image


@dataclass
class DatasetManifest:
    root: Path
    entries: list[tuple[str, int]]
    num_classes: int
    image_shape: tuple[int, int, int]
    class_names: list[str] | None = None

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        for path, cls in self.entries:
            if not 0 <= cls < self.num_classes:
                raise ValueError(f"class index {cls} for {path} outside [0, {self.num_classes - 1}]")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def labels(self) -> np.ndarray:
        return np.array([cls for _, cls in self.entries], dtype=np.int64)

    def load_image(self, index: int) -> Image:
        path, _ = self.entries[index]
        img = load_image(self.root / path)
        c, h, w = self.image_shape
        if img.channels != c:
            raise ValueError(f"{path}: has {img.channels} channels, manifest declares {c}")
        if (img.height, img.width) != (h, w):
            img = resize_bilinear(img, h, w)
        return img

    def load_batch(self, indices) -> tuple[Batch, np.ndarray]:
        images = [self.load_image(i) for i in indices]
        labels = np.array([self.entries[i][1] for i in indices], dtype=np.int64)
        return Batch.from_images(images), labels

    def batches(self, batch_size: int):
        """Yield (indices, Batch, labels) chunks in manifest order."""
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        for start in range(0, len(self.entries), batch_size):
            indices = list(range(start, min(start + batch_size, len(self.entries))))
            batch, labels = self.load_batch(indices)
            yield indices, batch, labels


def load_manifest(csv_path, check_files: bool = True) -> DatasetManifest:
    csv_path = Path(csv_path)
    sidecar = csv_path.with_suffix(".json")
    if not sidecar.exists():
        raise FileNotFoundError(f"manifest sidecar {sidecar} not found")
    meta = json.loads(sidecar.read_text())
    entries: list[tuple[str, int]] = []
    with open(csv_path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise ValueError(f"{csv_path}: expected 'path,class_index' rows, got {row}")
            entries.append((row[0], int(row[1])))
    manifest = DatasetManifest(
        root=csv_path.parent,
        entries=entries,
        num_classes=int(meta["num_classes"]),
        image_shape=tuple(meta["image_shape"]),
        class_names=meta.get("class_names"),
    )
    if check_files:
        missing = [p for p, _ in entries if not (manifest.root / p).exists()]
        if missing:
            raise FileNotFoundError(f"{csv_path}: {len(missing)} entries unresolvable, first: {missing[0]}")
    return manifest


def save_manifest(manifest: DatasetManifest, csv_path) -> None:
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for path, cls in manifest.entries:
            writer.writerow([path, cls])
    meta = {
        "num_classes": manifest.num_classes,
        "image_shape": list(manifest.image_shape),
        "class_names": manifest.class_names,
    }
    csv_path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def split_manifest(manifest: DatasetManifest, fractions, seed: int) -> list[DatasetManifest]:
    """Shuffle deterministically and split into len(fractions) manifests."""
    fracs = [float(f) for f in fractions]
    if not fracs or abs(sum(fracs) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    order = np.argsort(RngStream(seed).uniform_array(0.0, 1.0, len(manifest)))
    shuffled = [manifest.entries[i] for i in order]
    splits, start = [], 0
    for i, frac in enumerate(fracs):
        end = len(shuffled) if i == len(fracs) - 1 else start + round(frac * len(shuffled))
        splits.append(
            DatasetManifest(
                root=manifest.root,
                entries=shuffled[start:end],
                num_classes=manifest.num_classes,
                image_shape=manifest.image_shape,
                class_names=manifest.class_names,
            )
        )
        start = end
    return splits


def export_images(images: list[Image], names: list[str], out_dir, fmt: str = "igt") -> list[str]:
    """Write images to out_dir as <name>.<fmt>; returns the relative paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rels = []
    for img, name in zip(images, names):
        rel = f"{name}.{fmt}"
        save_image(img, out_dir / rel)
        rels.append(rel)
    return rels
