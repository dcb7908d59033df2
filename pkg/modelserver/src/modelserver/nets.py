"""Served classifiers: forward passes over the shared weight-manifest format.

Supports the four manifest kinds (linear, mlp1, brightness-oracle,
constant-oracle) plus an optional per-channel ``normalize`` block that is
applied server-side; the wire always carries raw [0, 1] tensors.  Arithmetic
is float32 end to end so fixture weights reproduce the engine's logits.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensors import read_igt


class ServedModel:
    def __init__(self, spec: dict, tensors: dict[str, np.ndarray]):
        self.kind = spec["kind"]
        self.num_classes = int(spec["num_classes"])
        self.input_shape = tuple(int(v) for v in spec["input_shape"])
        self.params = spec.get("params", {})
        self.tensors = {k: v.astype(np.float32) for k, v in tensors.items()}
        norm = spec.get("normalize")
        if norm is not None:
            self.norm_mean = np.asarray(norm["mean"], dtype=np.float32).reshape(1, -1, 1, 1)
            self.norm_std = np.asarray(norm["std"], dtype=np.float32).reshape(1, -1, 1, 1)
        else:
            self.norm_mean = None
            self.norm_std = None

    def logits(self, batch: np.ndarray) -> np.ndarray:
        """batch: (B, C, H, W) float32 in [0, 1] -> (B, K) float32."""
        if batch.shape[1:] != self.input_shape:
            raise ValueError(f"batch shape {batch.shape[1:]} does not match model input {self.input_shape}")
        x = batch.astype(np.float32)
        if self.norm_mean is not None:
            x = (x - self.norm_mean) / self.norm_std
        flat = x.reshape(x.shape[0], -1)
        if self.kind == "linear":
            return flat @ self.tensors["weight"].T + self.tensors["bias"]
        if self.kind == "mlp1":
            hidden = np.maximum(flat @ self.tensors["w1"].T + self.tensors["b1"], np.float32(0.0))
            return hidden @ self.tensors["w2"].T + self.tensors["b2"]
        if self.kind == "brightness-oracle":
            sharpness = float(self.params.get("sharpness", 8.0))
            means = batch.reshape(batch.shape[0], -1).mean(axis=1, dtype=np.float64)
            centers = (np.arange(self.num_classes) + 0.5) / self.num_classes
            dist = np.abs(means[:, None] - centers[None, :])
            return (-sharpness * self.num_classes * dist).astype(np.float32)
        if self.kind == "constant-oracle":
            row = self.tensors.get("logits")
            if row is None:
                row = np.zeros(self.num_classes, dtype=np.float32)
            return np.tile(row, (batch.shape[0], 1))
        raise ValueError(f"unsupported model kind {self.kind!r}")


def load_manifest(manifest_path) -> ServedModel:
    manifest_path = Path(manifest_path)
    spec = json.loads(manifest_path.read_text())
    tensors = {
        name: read_igt(manifest_path.parent / rel) for name, rel in spec.get("tensors", {}).items()
    }
    return ServedModel(spec, tensors)


def bundled_models_dir() -> Path:
    return Path(__file__).resolve().parent.parent.parent / "models"


def load_ref(ref: str) -> ServedModel:
    """Resolve ``fixture:<manifest.json>`` or ``pretrained:<bundled name>``."""
    if ref.startswith("fixture:"):
        return load_manifest(ref[len("fixture:") :])
    if ref.startswith("pretrained:"):
        name = ref[len("pretrained:") :]
        manifest = bundled_models_dir() / name / "model.json"
        if not manifest.exists():
            known = sorted(p.name for p in bundled_models_dir().glob("*/") if (p / "model.json").exists())
            raise ValueError(f"unknown pretrained model {name!r}; bundled: {known}")
        return load_manifest(manifest)
    raise ValueError(f"model ref must be fixture:<manifest> or pretrained:<name>, got {ref!r}")
