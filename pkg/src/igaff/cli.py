"""Command-line entry point.

Subcommands: attack, sweep, targeted, augment, eval, probe.  Model refs are
``builtin:<model.json>`` or ``remote:<host:port|stdio:cmd>``; with
``remote:`` and no address the IGAFF_MODEL_ENDPOINT variable is used.
"""

from __future__ import annotations

import argparse
import json
import sys

from .attacks import AttackConfig
from .harness import MODES, RunSpec, run
from .remote import DEFAULT_TIMEOUT_MS, handshake


def _add_common(parser: argparse.ArgumentParser, needs_data: bool = True) -> None:
    parser.add_argument("--model", required=True, help="builtin:<model.json> or remote:<endpoint>")
    if needs_data:
        parser.add_argument("--data", required=True, help="dataset manifest CSV")
    parser.add_argument("--out", default=None, help="output directory for reports")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--lanes", type=int, default=1, help="parallel worker lanes over batches")
    parser.add_argument("--timeout-ms", type=int, default=DEFAULT_TIMEOUT_MS)


def _add_attack_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--algo", choices=("ata", "aga"), default="aga")
    parser.add_argument("--iters", type=int, default=7, help="black-box iterations n_i")
    parser.add_argument("--pop", type=int, default=3, help="population size n_p (genetic only)")
    parser.add_argument("--p-mut", type=float, default=0.3)
    parser.add_argument("--p-cross", type=float, default=0.3)
    parser.add_argument("--epsilon", type=float, default=0.1)
    parser.add_argument("--target", type=int, default=None, help="target class for targeted attacks")
    parser.add_argument("--targeted-mode", choices=("paper-intent", "literal"), default="paper-intent")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--track-global-best", action="store_true")


def _build_config(args) -> AttackConfig:
    return AttackConfig(
        algorithm=args.algo,
        iterations=args.iters,
        population=args.pop,
        p_mutation=args.p_mut,
        p_crossover=args.p_cross,
        epsilon=args.epsilon,
        target=args.target,
        targeted_mode=args.targeted_mode,
        seed=args.seed,
        track_global_best=args.track_global_best,
    )


def _build_spec(mode: str, args) -> RunSpec:
    return RunSpec(
        mode=mode,
        attack=_build_config(args),
        model_ref=args.model,
        data=args.data,
        out_dir=args.out,
        repeats=args.repeats,
        batch_size=args.batch_size,
        lanes=args.lanes,
        timeout_ms=args.timeout_ms,
        sweep_params=getattr(args, "param", None) or [],
        sweep_grids=[_parse_grid(g) for g in (getattr(args, "grid", None) or [])],
        cross_product=getattr(args, "cross_product", False),
        targets=getattr(args, "targets", None) or [],
        export_format=getattr(args, "format", "igt"),
    )


def _parse_grid(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise SystemExit(f"grids must be comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="igaff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_attack = sub.add_parser("attack", help="seeded attack run with aggregated success rate")
    _add_common(p_attack)
    _add_attack_flags(p_attack)

    p_sweep = sub.add_parser("sweep", help="vary one attack parameter over a grid")
    _add_common(p_sweep)
    _add_attack_flags(p_sweep)
    p_sweep.add_argument("--param", action="append", required=True, choices=("iters", "pop", "p-mut", "p-cross", "epsilon"))
    p_sweep.add_argument("--grid", action="append", required=True, help="comma-separated values")
    p_sweep.add_argument("--cross-product", action="store_true", help="allow multi-parameter grids")

    p_targeted = sub.add_parser("targeted", help="attack battery over target classes")
    _add_common(p_targeted)
    _add_attack_flags(p_targeted)
    p_targeted.add_argument("--targets", type=int, nargs="+", required=True)

    p_augment = sub.add_parser("augment", help="export adversarial copies, doubling the dataset")
    _add_common(p_augment)
    _add_attack_flags(p_augment)
    p_augment.add_argument("--format", choices=("igt", "ppm"), default="igt")

    p_eval = sub.add_parser("eval", help="clean accuracy and F1 report")
    _add_common(p_eval)
    _add_attack_flags(p_eval)

    p_probe = sub.add_parser("probe", help="handshake an endpoint and print its meta")
    p_probe.add_argument("endpoint", nargs="?", default=None)
    p_probe.add_argument("--timeout-ms", type=int, default=DEFAULT_TIMEOUT_MS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ValueError, OSError, TimeoutError) as exc:
        print(f"igaff: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "probe":
        model = handshake(args.endpoint, timeout_ms=args.timeout_ms)
        try:
            print(json.dumps({"num_classes": model.num_classes, "input": list(model.input_shape)}))
        finally:
            model.close()
        return 0
    spec = _build_spec(args.command, args)
    result = run(spec)
    summary = result[-1] if isinstance(result, list) else result
    if spec.mode == "attack":
        agg = summary["aggregate"]["sr"]
        print(f"sr: {agg['mean']:.4f} +/- {agg['std']:.4f} over {agg['n_repeats']} repeats")
    elif spec.mode == "sweep":
        print(f"sweep finished: {len(result)} grid points")
    elif spec.mode == "targeted":
        for entry in summary["targets"]:
            sr = entry["sr_global"]["mean"]
            print(f"target {entry['target']}: sr_global {sr:.4f}")
    elif spec.mode == "augment":
        print(f"augmented manifest: {summary['manifest']} ({summary['manifest_entries']} entries)")
    elif spec.mode == "eval":
        m = summary["metrics"]
        print(f"accuracy {m['accuracy']:.4f} macro_f1 {m['macro_f1']:.4f} weighted_f1 {m['weighted_f1']:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
