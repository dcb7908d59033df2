"""Victim-model contract, cross-entropy scoring, and builtin classifiers.

The engine treats every classifier as a black box: ``predict`` maps a Batch
to a (B, num_classes) float32 logits array and nothing else is assumed.
Builtin models keep the primary suite self-contained; they are deliberately
small (linear, one-hidden-layer MLP, and two synthetic oracles) and are
loaded from a JSON manifest plus sibling IGT tensors.

Loss convention: natural-log cross-entropy, mean-reduced over the batch, so
the attack objective does not rescale with batch size.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .imagecore import Batch
from .tensorio import read_tensor, write_tensor

MODEL_KINDS = ("linear", "mlp1", "brightness-oracle", "constant-oracle")


class VictimModel:
    """Opaque classifier interface: only shape metadata and predict()."""

    num_classes: int
    input_shape: tuple[int, int, int]

    def predict(self, batch: Batch) -> np.ndarray:
        raise NotImplementedError

    def _check_batch(self, batch: Batch) -> None:
        if batch.image_shape != tuple(self.input_shape):
            raise ValueError(
                f"batch shape {batch.image_shape} does not match model input {tuple(self.input_shape)}"
            )


def softmax(row: np.ndarray) -> np.ndarray:
    """Stable softmax of one logit row (max-shifted, float64)."""
    row = np.asarray(row, dtype=np.float64)
    if not np.all(np.isfinite(row)):
        raise ValueError("logits must be finite")
    shifted = row - row.max()
    exps = np.exp(shifted)
    return exps / exps.sum()


def cross_entropy(logits: np.ndarray, labels) -> float:
    """Mean negative log-likelihood (nats) of `labels` under the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise ValueError(f"logits must be (B, num_classes), got shape {logits.shape}")
    if labels.shape != (logits.shape[0],):
        raise ValueError(f"labels shape {labels.shape} does not match batch of {logits.shape[0]}")
    n_cls = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= n_cls):
        raise ValueError(f"labels must lie in [0, {n_cls - 1}]")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(logits.shape[0]), labels]
    return float(np.mean(log_norm - picked))


def predict_labels(model: VictimModel, batch: Batch) -> np.ndarray:
    """Argmax class per image (ties resolved to the lowest index)."""
    return np.argmax(model.predict(batch), axis=1)


class LinearModel(VictimModel):
    """logits = W . flatten(x) + b, all float32."""

    kind = "linear"

    def __init__(self, weight: np.ndarray, bias: np.ndarray, input_shape):
        self.weight = np.ascontiguousarray(weight, dtype=np.float32)
        self.bias = np.ascontiguousarray(bias, dtype=np.float32)
        self.input_shape = tuple(input_shape)
        self.num_classes = self.weight.shape[0]
        flat = int(np.prod(self.input_shape))
        if self.weight.shape != (self.num_classes, flat) or self.bias.shape != (self.num_classes,):
            raise ValueError("weight/bias shapes do not match input shape")

    def predict(self, batch: Batch) -> np.ndarray:
        self._check_batch(batch)
        flat = batch.data.reshape(batch.size, -1)
        return flat @ self.weight.T + self.bias


class Mlp1Model(VictimModel):
    """One hidden layer with max(0, .) activation."""

    kind = "mlp1"

    def __init__(self, w1, b1, w2, b2, input_shape):
        self.w1 = np.ascontiguousarray(w1, dtype=np.float32)
        self.b1 = np.ascontiguousarray(b1, dtype=np.float32)
        self.w2 = np.ascontiguousarray(w2, dtype=np.float32)
        self.b2 = np.ascontiguousarray(b2, dtype=np.float32)
        self.input_shape = tuple(input_shape)
        self.num_classes = self.w2.shape[0]
        flat = int(np.prod(self.input_shape))
        hidden = self.w1.shape[0]
        if self.w1.shape != (hidden, flat) or self.b1.shape != (hidden,):
            raise ValueError("hidden layer shapes do not match input shape")
        if self.w2.shape != (self.num_classes, hidden) or self.b2.shape != (self.num_classes,):
            raise ValueError("output layer shapes do not match hidden size")

    def predict(self, batch: Batch) -> np.ndarray:
        self._check_batch(batch)
        flat = batch.data.reshape(batch.size, -1)
        hidden = np.maximum(flat @ self.w1.T + self.b1, np.float32(0.0))
        return hidden @ self.w2.T + self.b2


class BrightnessOracle(VictimModel):
    """Synthetic victim whose decision depends only on mean pixel value.

    Brightness bin k (k = 0..num_classes-1 over [0, 1]) is favoured when the
    image mean falls in it: logits are the negative scaled distance from each
    bin center, so nudging the mean across a bin boundary flips the argmax
    and the loss varies smoothly with brightness.
    """

    kind = "brightness-oracle"

    def __init__(self, num_classes: int, input_shape, sharpness: float = 8.0):
        if num_classes < 2:
            raise ValueError("brightness oracle needs at least 2 classes")
        self.num_classes = num_classes
        self.input_shape = tuple(input_shape)
        self.sharpness = float(sharpness)

    def bin_centers(self) -> np.ndarray:
        return (np.arange(self.num_classes, dtype=np.float64) + 0.5) / self.num_classes

    def predict(self, batch: Batch) -> np.ndarray:
        self._check_batch(batch)
        means = batch.data.reshape(batch.size, -1).mean(axis=1, dtype=np.float64)
        dist = np.abs(means[:, None] - self.bin_centers()[None, :])
        logits = -self.sharpness * self.num_classes * dist
        return logits.astype(np.float32)


class ConstantOracle(VictimModel):
    """Returns the same logits row for every input (score-flat victim)."""

    kind = "constant-oracle"

    def __init__(self, num_classes: int, input_shape, logits=None):
        self.num_classes = num_classes
        self.input_shape = tuple(input_shape)
        if logits is None:
            logits = np.zeros(num_classes)
        self.logits = np.ascontiguousarray(logits, dtype=np.float32)
        if self.logits.shape != (num_classes,):
            raise ValueError("constant logits length must equal num_classes")

    def predict(self, batch: Batch) -> np.ndarray:
        self._check_batch(batch)
        return np.tile(self.logits, (batch.size, 1))


def load_model(manifest_path) -> VictimModel:
    """Build a model from a ``model.json`` manifest and sibling IGT tensors."""
    manifest_path = Path(manifest_path)
    spec = json.loads(manifest_path.read_text())
    kind = spec["kind"]
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    input_shape = tuple(spec["input_shape"])
    num_classes = int(spec["num_classes"])
    tensors = {
        name: read_tensor(manifest_path.parent / rel)
        for name, rel in spec.get("tensors", {}).items()
    }
    params = spec.get("params", {})
    if kind == "linear":
        model: VictimModel = LinearModel(tensors["weight"], tensors["bias"], input_shape)
    elif kind == "mlp1":
        model = Mlp1Model(tensors["w1"], tensors["b1"], tensors["w2"], tensors["b2"], input_shape)
    elif kind == "brightness-oracle":
        model = BrightnessOracle(num_classes, input_shape, sharpness=params.get("sharpness", 8.0))
    else:
        model = ConstantOracle(num_classes, input_shape, tensors.get("logits"))
    if model.num_classes != num_classes:
        raise ValueError(
            f"manifest num_classes {num_classes} does not match tensors ({model.num_classes})"
        )
    return model


def save_model(model: VictimModel, out_dir) -> Path:
    """Write a manifest plus IGT tensors; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tensors: dict[str, np.ndarray] = {}
    params: dict[str, float] = {}
    if isinstance(model, LinearModel):
        tensors = {"weight": model.weight, "bias": model.bias}
    elif isinstance(model, Mlp1Model):
        tensors = {"w1": model.w1, "b1": model.b1, "w2": model.w2, "b2": model.b2}
    elif isinstance(model, BrightnessOracle):
        params = {"sharpness": model.sharpness}
    elif isinstance(model, ConstantOracle):
        tensors = {"logits": model.logits}
    else:
        raise TypeError(f"cannot serialize model type {type(model).__name__}")
    file_map = {}
    for name, arr in tensors.items():
        rel = f"{name}.igt"
        write_tensor(out_dir / rel, arr)
        file_map[name] = rel
    spec = {
        "kind": model.kind,
        "input_shape": list(model.input_shape),
        "num_classes": model.num_classes,
        "tensors": file_map,
    }
    if params:
        spec["params"] = params
    manifest = out_dir / "model.json"
    manifest.write_text(json.dumps(spec, indent=2, sort_keys=True) + "\n")
    return manifest
