"""Experiment orchestration: attack runs, sweeps, targeted batteries,
augmentation export, and clean evaluation.

Runs are reproducible artifacts: repeat r uses seed ``base_seed + r``, each
batch attacks under the substream (seed_r, "batch", batch_index), and report
files contain no wall-clock state, so re-running a spec rewrites every file
bit-for-bit.
"""

from __future__ import annotations

import csv
import itertools
import json
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import AttackConfig, run_attack_config
from .manifest import DatasetManifest, load_manifest, save_manifest
from .metrics import aggregate, f1_scores, success_rate
from .models import VictimModel, cross_entropy, load_model, softmax
from .remote import DEFAULT_TIMEOUT_MS, handshake
from .rng import RngStream
from .tensorio import save_image

MODES = ("attack", "sweep", "targeted", "augment", "eval")
SWEEPABLE = {
    "iters": "iterations",
    "pop": "population",
    "p-mut": "p_mutation",
    "p-cross": "p_crossover",
    "epsilon": "epsilon",
}


@dataclass
class RunSpec:
    mode: str
    attack: AttackConfig
    model_ref: str
    data: str
    out_dir: str | None = None
    repeats: int = 5
    batch_size: int = 32
    lanes: int = 1
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    sweep_params: list[str] = field(default_factory=list)
    sweep_grids: list[list[float]] = field(default_factory=list)
    cross_product: bool = False
    targets: list[int] = field(default_factory=list)
    export_format: str = "igt"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lanes < 1:
            raise ValueError("lanes must be >= 1")


def resolve_model(ref: str, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> VictimModel:
    """Open ``builtin:<model.json>`` or ``remote:<endpoint>`` model refs."""
    if ref.startswith("builtin:"):
        return load_model(ref[len("builtin:") :])
    if ref.startswith("remote:"):
        return handshake(ref[len("remote:") :] or None, timeout_ms=timeout_ms)
    if ref.endswith(".json"):
        return load_model(ref)
    raise ValueError(f"model ref must be builtin:<manifest> or remote:<endpoint>, got {ref!r}")


def _config_echo(cfg: AttackConfig) -> dict:
    return {
        "algorithm": cfg.algorithm,
        "iterations": cfg.iterations,
        "population": cfg.population,
        "p_mutation": cfg.p_mutation,
        "p_crossover": cfg.p_crossover,
        "epsilon": cfg.epsilon,
        "target": cfg.target,
        "targeted_mode": cfg.targeted_mode,
        "seed": cfg.seed,
    }


def _predict_all(model: VictimModel, manifest: DatasetManifest, batch_size: int) -> np.ndarray:
    preds = []
    for _, batch, _ in manifest.batches(batch_size):
        preds.append(np.argmax(model.predict(batch), axis=1))
    return np.concatenate(preds)


def _attack_epoch(
    model: VictimModel,
    manifest: DatasetManifest,
    cfg: AttackConfig,
    seed: int,
    batch_size: int,
    lanes: int,
    keep_batches: bool = False,
):
    """Attack the whole manifest once; returns pooled predictions and, when
    asked, the per-batch outcomes for provenance export."""
    chunks = [
        list(range(start, min(start + batch_size, len(manifest))))
        for start in range(0, len(manifest), batch_size)
    ]

    def attack_one(args):
        bi, indices = args
        try:
            batch, labels = manifest.load_batch(indices)
            rng = RngStream(seed).derive("batch", bi)
            outcome = run_attack_config(batch, labels, model, cfg, rng=rng)
            preds = np.argmax(model.predict(outcome.batch), axis=1)
        except Exception as exc:
            raise RuntimeError(f"batch {bi} (images {indices[0]}..{indices[-1]}) failed: {exc}") from exc
        return preds, (outcome if keep_batches else None)

    if lanes > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=lanes) as pool:
            results = list(pool.map(attack_one, list(enumerate(chunks))))
    else:
        results = [attack_one(item) for item in enumerate(chunks)]
    preds = np.concatenate([p for p, _ in results])
    outcomes = [o for _, o in results]
    return preds, chunks, outcomes


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def run_attack(spec: RunSpec, model: VictimModel | None = None, write: bool = True) -> dict:
    """Clean-vs-attacked accuracy over seeded repeats, aggregated."""
    manifest = load_manifest(spec.data)
    if len(manifest) == 0:
        raise ValueError("dataset manifest is empty")
    model = model if model is not None else resolve_model(spec.model_ref, spec.timeout_ms)
    truth = manifest.labels

    clean_preds = _predict_all(model, manifest, spec.batch_size)
    acc_clean = 100.0 * float(np.mean(clean_preds == truth))

    per_repeat = []
    for r in range(spec.repeats):
        seed_r = spec.attack.seed + r
        cfg_r = replace(spec.attack, seed=seed_r)
        preds, _, _ = _attack_epoch(model, manifest, cfg_r, seed_r, spec.batch_size, spec.lanes)
        acc_att = 100.0 * float(np.mean(preds == truth))
        att_f1 = f1_scores(preds, truth, manifest.num_classes)
        per_repeat.append(
            {
                "repeat": r,
                "seed": seed_r,
                "acc_clean": acc_clean,
                "acc_attacked": acc_att,
                "sr": success_rate(acc_clean, acc_att),
                "macro_f1_attacked": att_f1.macro_f1,
                "weighted_f1_attacked": att_f1.weighted_f1,
            }
        )

    report = {
        "engine_version": __version__,
        "mode": "attack",
        "model": spec.model_ref,
        "data": str(spec.data),
        "batch_size": spec.batch_size,
        "repeats": spec.repeats,
        "base_seed": spec.attack.seed,
        "seeds": [row["seed"] for row in per_repeat],
        "config": _config_echo(spec.attack),
        "per_repeat": per_repeat,
        "aggregate": {
            key: aggregate([row[key] for row in per_repeat]).to_dict()
            for key in ("acc_clean", "acc_attacked", "sr", "macro_f1_attacked", "weighted_f1_attacked")
        },
    }
    if write and spec.out_dir:
        out = Path(spec.out_dir)
        _write_json(out / "report.json", report)
        header = ["repeat", "seed", "acc_clean", "acc_attacked", "sr", "macro_f1_attacked", "weighted_f1_attacked"]
        rows = [[row[h] for h in header] for row in per_repeat]
        for stat in ("mean", "std"):
            rows.append(
                [stat, ""] + [report["aggregate"][k][stat] for k in header[2:]]
            )
        _write_csv(out / "report.csv", header, rows)
    return report


def _format_grid_value(value: float) -> str:
    return format(value, "g")


def run_sweep(spec: RunSpec, model: VictimModel | None = None) -> list[dict]:
    """One attack report per grid point of the swept parameter(s).

    A single swept parameter is the normal case; sweeping several at once
    requires the explicit cross-product flag and walks the full grid.
    """
    if not spec.sweep_params:
        raise ValueError("sweep mode needs a swept parameter and its grid")
    if len(spec.sweep_params) != len(spec.sweep_grids):
        raise ValueError("each swept parameter needs exactly one grid")
    if len(spec.sweep_params) > 1 and not spec.cross_product:
        raise ValueError("multiple swept parameters require the cross-product flag")
    unknown = [p for p in spec.sweep_params if p not in SWEEPABLE]
    if unknown:
        raise ValueError(f"cannot sweep {unknown}; choose from {sorted(SWEEPABLE)}")

    model = model if model is not None else resolve_model(spec.model_ref, spec.timeout_ms)
    fields = [SWEEPABLE[p] for p in spec.sweep_params]
    reports = []
    rows = []
    for combo in itertools.product(*spec.sweep_grids):
        updates = {
            f: (int(v) if f in ("iterations", "population") else float(v))
            for f, v in zip(fields, combo)
        }
        cfg = replace(spec.attack, **updates)
        point = "_".join(
            f"{p}={_format_grid_value(v)}" for p, v in zip(spec.sweep_params, combo)
        )
        sub = replace(
            spec,
            mode="attack",
            attack=cfg,
            out_dir=str(Path(spec.out_dir) / "points" / point) if spec.out_dir else None,
            sweep_params=[],
            sweep_grids=[],
        )
        report = run_attack(sub, model=model, write=bool(spec.out_dir))
        report["sweep_point"] = {p: v for p, v in zip(spec.sweep_params, combo)}
        reports.append(report)
        rows.append(
            [point]
            + [_format_grid_value(v) for v in combo]
            + [report["aggregate"]["sr"]["mean"], report["aggregate"]["sr"]["std"]]
        )
    if spec.out_dir:
        header = ["point"] + list(spec.sweep_params) + ["sr_mean", "sr_std"]
        _write_csv(Path(spec.out_dir) / "sweep.csv", header, rows)
    return reports


def run_targeted(spec: RunSpec, model: VictimModel | None = None) -> dict:
    """Per-target-class attack battery with an untargeted contrast column.

    The targeted success rate is reported against two denominators, labelled
    explicitly: global accuracy and accuracy restricted to the target class
    (undefined when the class has no test support).
    """
    if not spec.targets:
        raise ValueError("targeted mode needs at least one target class")
    manifest = load_manifest(spec.data)
    if len(manifest) == 0:
        raise ValueError("dataset manifest is empty")
    model = model if model is not None else resolve_model(spec.model_ref, spec.timeout_ms)
    bad = [t for t in spec.targets if not 0 <= t < manifest.num_classes]
    if bad:
        raise ValueError(f"target classes {bad} outside [0, {manifest.num_classes - 1}]")
    truth = manifest.labels

    clean_preds = _predict_all(model, manifest, spec.batch_size)
    acc_clean = 100.0 * float(np.mean(clean_preds == truth))

    untargeted = run_attack(replace(spec, mode="attack", attack=replace(spec.attack, target=None)), model=model, write=False)

    target_reports = []
    for c in spec.targets:
        support = int(np.sum(truth == c))
        clean_class_acc = (
            100.0 * float(np.mean(clean_preds[truth == c] == c)) if support else None
        )
        per_repeat = []
        for r in range(spec.repeats):
            seed_r = spec.attack.seed + r
            cfg_r = replace(spec.attack, seed=seed_r, target=c)
            preds, _, outcomes = _attack_epoch(
                model, manifest, cfg_r, seed_r, spec.batch_size, spec.lanes, keep_batches=True
            )
            acc_att = 100.0 * float(np.mean(preds == truth))
            row = {
                "repeat": r,
                "seed": seed_r,
                "acc_attacked": acc_att,
                "sr_global": success_rate(acc_clean, acc_att),
                "mean_target_prob": _mean_class_probability(model, outcomes, c),
            }
            if support and clean_class_acc:
                class_acc_att = 100.0 * float(np.mean(preds[truth == c] == c))
                row["sr_target_class"] = success_rate(clean_class_acc, class_acc_att)
            else:
                row["sr_target_class"] = None
            per_repeat.append(row)
        entry = {
            "target": c,
            "support": support,
            "no_support": support == 0,
            "acc_clean": acc_clean,
            "acc_clean_target_class": clean_class_acc,
            "per_repeat": per_repeat,
            "sr_global": aggregate([row["sr_global"] for row in per_repeat]).to_dict(),
            "mean_target_prob": aggregate([row["mean_target_prob"] for row in per_repeat]).to_dict(),
        }
        class_srs = [row["sr_target_class"] for row in per_repeat if row["sr_target_class"] is not None]
        entry["sr_target_class"] = aggregate(class_srs).to_dict() if class_srs else None
        target_reports.append(entry)

    report = {
        "engine_version": __version__,
        "mode": "targeted",
        "model": spec.model_ref,
        "data": str(spec.data),
        "config": _config_echo(spec.attack),
        "repeats": spec.repeats,
        "targets": target_reports,
        "untargeted_sr": untargeted["aggregate"]["sr"],
    }
    if spec.out_dir:
        out = Path(spec.out_dir)
        _write_json(out / "report.json", report)
        header = ["target", "support", "sr_global_mean", "sr_target_class_mean", "untargeted_sr_mean"]
        rows = [
            [
                e["target"],
                e["support"],
                e["sr_global"]["mean"],
                e["sr_target_class"]["mean"] if e["sr_target_class"] else "",
                report["untargeted_sr"]["mean"],
            ]
            for e in target_reports
        ]
        _write_csv(out / "report.csv", header, rows)
    return report


def _mean_class_probability(model, outcomes, c) -> float:
    """Mean softmax probability of class c over the attacked batches."""
    probs = []
    for outcome in outcomes:
        logits = model.predict(outcome.batch)
        probs.extend(softmax(row)[c] for row in logits)
    return float(np.mean(probs))


def run_augment(spec: RunSpec, model: VictimModel | None = None) -> dict:
    """Export one adversarial copy per input image plus a doubled manifest."""
    if not spec.out_dir:
        raise ValueError("augment mode needs an output directory")
    out = Path(spec.out_dir)
    if out.exists():
        raise FileExistsError(f"augment output directory {out} already exists")
    manifest = load_manifest(spec.data)
    if len(manifest) == 0:
        raise ValueError("dataset manifest is empty")
    model = model if model is not None else resolve_model(spec.model_ref, spec.timeout_ms)

    out.mkdir(parents=True)
    (out / "adv").mkdir()
    (out / "provenance").mkdir()

    seed = spec.attack.seed
    preds, chunks, outcomes = _attack_epoch(
        model, manifest, spec.attack, seed, spec.batch_size, spec.lanes, keep_batches=True
    )

    entries = []
    for path, cls in manifest.entries:
        dest = out / path
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(manifest.root / path, dest)
        entries.append((path, cls))

    for bi, (indices, outcome) in enumerate(zip(chunks, outcomes)):
        final = outcome.records[-1]
        for pos, idx in enumerate(indices):
            src_path, cls = manifest.entries[idx]
            stem = Path(src_path).stem
            rel = f"adv/{stem}_adv.{spec.export_format}"
            save_image(outcome.batch.image(pos), out / rel)
            entries.append((rel, cls))
            _write_json(
                out / "provenance" / f"{stem}_adv.json",
                {
                    "source": src_path,
                    "adversarial": rel,
                    "class_index": cls,
                    "batch_index": bi,
                    "position_in_batch": pos,
                    "final_loss": final.loss,
                    "final_score": final.score,
                    "provenance": outcome.provenance,
                },
            )

    doubled = DatasetManifest(
        root=out,
        entries=entries,
        num_classes=manifest.num_classes,
        image_shape=manifest.image_shape,
        class_names=manifest.class_names,
    )
    save_manifest(doubled, out / "manifest.csv")
    report = {
        "engine_version": __version__,
        "mode": "augment",
        "model": spec.model_ref,
        "data": str(spec.data),
        "config": _config_echo(spec.attack),
        "input_images": len(manifest),
        "manifest_entries": len(entries),
        "manifest": str(out / "manifest.csv"),
    }
    _write_json(out / "report.json", report)
    return report


def run_eval(spec: RunSpec, model: VictimModel | None = None) -> dict:
    """Clean accuracy and F1 for a model over a manifest."""
    manifest = load_manifest(spec.data)
    if len(manifest) == 0:
        raise ValueError("dataset manifest is empty")
    model = model if model is not None else resolve_model(spec.model_ref, spec.timeout_ms)
    preds = _predict_all(model, manifest, spec.batch_size)
    ev = f1_scores(preds, manifest.labels, manifest.num_classes)
    report = {
        "engine_version": __version__,
        "mode": "eval",
        "model": spec.model_ref,
        "data": str(spec.data),
        "num_images": len(manifest),
        "metrics": ev.to_dict(),
    }
    if spec.out_dir:
        _write_json(Path(spec.out_dir) / "report.json", report)
    return report


def run(spec: RunSpec):
    handlers = {
        "attack": run_attack,
        "sweep": run_sweep,
        "targeted": run_targeted,
        "augment": run_augment,
        "eval": run_eval,
    }
    return handlers[spec.mode](spec)
