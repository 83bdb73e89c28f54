"""Command-line interface.

Verbs: train, eval, sweep-noise, ablate, verify-props, export-embeddings,
make-synthetic. Exit codes: 0 success, 1 usage error, 2 runtime failure.
Every command writes only inside its --out directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace
from typing import Any

from .data import concat_datasets, make_synthetic_spurious, save_tabular
from .evaluation import (
    MetricsReport,
    ablation_run,
    aggregate_metrics,
    encode_dataset,
    evaluate_model,
    export_embeddings,
    noise_sweep,
    prepare_data,
    run_experiment,
)
from .losses import verify_propositions
from .model import load_checkpoint, save_checkpoint
from .nn import load_mlp, save_mlp
from .presets import PRESET_NAMES, get_preset
from .training import FarconConfig, train_aux_classifier

__all__ = ["dispatch", "main", "emit_metrics"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so usage errors map to exit 1."""

    def error(self, message):
        raise UsageError(message)


def emit_metrics(report: dict[str, Any] | MetricsReport, path: str) -> None:
    """Pretty-printed JSON with sorted keys; no timestamps, so identical runs
    produce byte-identical files."""
    payload = report.to_dict() if isinstance(report, MetricsReport) else report
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _set_by_path(tree: dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = tree
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            node[key] = {}
        node = node[key]
    node[keys[-1]] = value


def _parse_override(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise UsageError(f"override must look like key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _load_config(args) -> FarconConfig:
    if getattr(args, "preset", None) and getattr(args, "config", None):
        raise UsageError("pass either --config or --preset, not both")
    if getattr(args, "preset", None):
        try:
            base = get_preset(args.preset).to_dict()
        except ValueError as exc:
            raise UsageError(str(exc))
    elif getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise UsageError(f"config file not found: {args.config}")
        try:
            with open(args.config, encoding="utf-8") as fh:
                base = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}")
    else:
        raise UsageError("one of --config or --preset is required")
    for item in getattr(args, "set", None) or []:
        key, value = _parse_override(item)
        _set_by_path(base, key, value)
    if getattr(args, "seed", None) is not None:
        base["seed"] = args.seed
    try:
        return FarconConfig.from_dict(base)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid config: {exc}")


def _ensure_out(args) -> str:
    out = args.out
    os.makedirs(out, exist_ok=True)
    return out


def _snapshot_config(config: FarconConfig, out: str) -> None:
    config.to_json(os.path.join(out, "config.json"))


def _write_log(out: str, lines: list[str]) -> None:
    with open(os.path.join(out, "log.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_float_list(raw: str, flag: str) -> list[float]:
    try:
        return [float(v) for v in raw.split(",") if v != ""]
    except ValueError:
        raise UsageError(f"{flag} must be a comma-separated number list, got {raw!r}")


def _parse_int_list(raw: str, flag: str) -> list[int]:
    try:
        return [int(v) for v in raw.split(",") if v != ""]
    except ValueError:
        raise UsageError(f"{flag} must be a comma-separated integer list, got {raw!r}")


# -- verb handlers ----------------------------------------------------------------


def _cmd_train(args) -> int:
    config = _load_config(args)
    out = _ensure_out(args)
    _snapshot_config(config, out)
    result = run_experiment(config, epsilon=args.epsilon)
    save_checkpoint(result.model, os.path.join(out, "checkpoint.json"))
    if result.aux is not None:
        save_mlp(result.aux, os.path.join(out, "aux.json"))
    emit_metrics(result.metrics, os.path.join(out, "metrics.json"))
    with open(os.path.join(out, "history.json"), "w", encoding="utf-8") as fh:
        json.dump([asdict(b) for b in result.history], fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_log(
        out,
        [
            f"seed {config.seed} fingerprint {config.fingerprint()}",
            f"epochs run {len(result.history)} of {config.epochs}",
            f"y_accuracy {result.metrics.y_accuracy:.4f}",
            f"s_probe_accuracy {result.metrics.s_probe_accuracy:.4f}",
            f"mrg {result.metrics.mrg:.4f}",
        ],
    )
    print(f"y_accuracy={result.metrics.y_accuracy:.2f} s_probe={result.metrics.s_probe_accuracy:.2f} mrg={result.metrics.mrg:.2f}")
    return 0


def _cmd_eval(args) -> int:
    config = _load_config(args)
    out = _ensure_out(args)
    model = load_checkpoint(args.checkpoint)
    data = prepare_data(config, epsilon=0.0)
    aux = None
    aux_acc = None
    if config.y_input_mode == "label":
        if args.aux:
            aux = load_mlp(args.aux)
        else:
            aux, aux_acc = train_aux_classifier(config, data.train_corrupted, data.valid)
    metrics = evaluate_model(model, config, data, aux, aux_acc)
    emit_metrics(metrics, os.path.join(out, "metrics.json"))
    print(f"y_accuracy={metrics.y_accuracy:.2f} s_probe={metrics.s_probe_accuracy:.2f} mrg={metrics.mrg:.2f}")
    return 0


def _cmd_sweep_noise(args) -> int:
    config = _load_config(args)
    out = _ensure_out(args)
    _snapshot_config(config, out)
    epsilons = _parse_float_list(args.epsilons, "--epsilons")
    seeds = _parse_int_list(args.seeds, "--seeds")
    rows = noise_sweep(config, epsilons, seeds)
    payload = {
        "results": [
            {"epsilon": r["epsilon"], "seed": r["seed"], "metrics": r["metrics"].to_dict()}
            for r in rows
        ]
    }
    emit_metrics(payload, os.path.join(out, "metrics.json"))
    for r in rows:
        print(
            f"epsilon={r['epsilon']:.2f} seed={r['seed']} "
            f"y={r['metrics'].y_accuracy:.2f} mrg={r['metrics'].mrg:.2f}"
        )
    return 0


def _cmd_ablate(args) -> int:
    config = _load_config(args)
    out = _ensure_out(args)
    _snapshot_config(config, out)
    seeds = _parse_int_list(args.seeds, "--seeds")
    per_combo: dict[str, list] = {}
    for seed in seeds:
        combo_metrics = ablation_run(replace(config, seed=seed))
        for name, metrics in combo_metrics.items():
            per_combo.setdefault(name, []).append(metrics)
    payload = {name: aggregate_metrics(reports) for name, reports in per_combo.items()}
    emit_metrics(payload, os.path.join(out, "metrics.json"))
    for name, agg in payload.items():
        print(
            f"{name}: s_probe={agg['mean']['s_probe_accuracy']:.2f} "
            f"mrg={agg['mean']['mrg']:.2f} y={agg['mean']['y_accuracy']:.2f}"
        )
    return 0


def _cmd_verify_props(args) -> int:
    report = verify_propositions()
    lines = [
        f"grid points: {report.grid_points}",
        f"prop-1 min gap (equal variances): {report.prop1_min_gap:.3e}",
        f"prop-2 min gap (equal means): {report.prop2_min_gap:.3e} at ratio {report.prop2_argmin_ratio:.6f}",
        f"prop-2 gap at ratio 100: {report.prop2_gap_at_ratio_100:.6f}",
        f"passed: {report.passed}",
    ]
    print("\n".join(lines))
    if args.out:
        out = _ensure_out(args)
        payload = {
            "grid_points": report.grid_points,
            "prop1_min_gap": report.prop1_min_gap,
            "prop2_min_gap": report.prop2_min_gap,
            "prop2_argmin_ratio": report.prop2_argmin_ratio,
            "prop2_gap_at_ratio_100": report.prop2_gap_at_ratio_100,
            "large_ratio_gaps": {str(k): v for k, v in report.large_ratio_gaps.items()},
            "passed": report.passed,
        }
        emit_metrics(payload, os.path.join(out, "propositions.json"))
    if not report.passed:
        raise RuntimeError("proposition verification failed")
    return 0


def _cmd_export_embeddings(args) -> int:
    config = _load_config(args)
    out = _ensure_out(args)
    model = load_checkpoint(args.checkpoint)
    data = prepare_data(config, epsilon=0.0)
    everything = concat_datasets([data.train, data.valid, data.test])
    if config.y_input_mode == "constant":
        y_source = "constant"
        aux = None
    elif args.aux:
        y_source = "aux_classifier"
        aux = load_mlp(args.aux)
    else:
        y_source = "true_y"
        aux = None
    embeddings = encode_dataset(model, everything, y_source=y_source, aux=aux, latent=args.latent)
    path = os.path.join(out, args.filename)
    export_embeddings(embeddings, everything.Y, everything.S[:, 0], path)
    print(f"wrote {len(embeddings)} rows to {path}")
    return 0


def _cmd_make_synthetic(args) -> int:
    out = _ensure_out(args)
    train, test = make_synthetic_spurious(
        n=args.n, corr_train=args.corr_train, corr_test=args.corr_test, seed=args.seed or 0
    )
    save_tabular(train, os.path.join(out, "train.csv"), os.path.join(out, "schema.json"))
    save_tabular(test, os.path.join(out, "test.csv"), os.path.join(out, "schema.json"))
    print(f"wrote train.csv ({train.n} rows), test.csv ({test.n} rows), schema.json to {out}")
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="farconvae", description=__doc__)
    sub = parser.add_subparsers(dest="verb")

    def add_config_flags(p, need_out=True):
        p.add_argument("--config", help="path to a config JSON file")
        p.add_argument("--preset", help=f"built-in config: {', '.join(PRESET_NAMES)}")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field (dotted paths allowed)")
        p.add_argument("--seed", type=int, help="shorthand for --set seed=N")
        if need_out:
            p.add_argument("--out", required=True, help="output directory")

    p_train = sub.add_parser("train", help="train a model and write metrics")
    add_config_flags(p_train)
    p_train.add_argument("--epsilon", type=float, default=0.0, help="train-time sensitive corruption rate")

    p_eval = sub.add_parser("eval", help="evaluate a saved checkpoint")
    add_config_flags(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--aux", help="aux classifier checkpoint (retrained if omitted)")

    p_sweep = sub.add_parser("sweep-noise", help="retrain across corruption rates")
    add_config_flags(p_sweep)
    p_sweep.add_argument("--epsilons", required=True, help="comma-separated rates, e.g. 0,0.1,0.3")
    p_sweep.add_argument("--seeds", required=True, help="comma-separated seeds")

    p_ablate = sub.add_parser("ablate", help="train the four dc/sr toggle combinations")
    add_config_flags(p_ablate)
    p_ablate.add_argument("--seeds", default="0", help="comma-separated seeds")

    p_props = sub.add_parser("verify-props", help="check the kernel-gap propositions numerically")
    p_props.add_argument("--out", help="optional directory for propositions.json")

    p_export = sub.add_parser("export-embeddings", help="encode a dataset and write embeddings CSV")
    add_config_flags(p_export)
    p_export.add_argument("--checkpoint", required=True)
    p_export.add_argument("--aux", help="aux checkpoint; true labels are used if omitted")
    p_export.add_argument("--latent", choices=("zx", "zs"), default="zx")
    p_export.add_argument("--filename", default="embeddings.csv")

    p_synth = sub.add_parser("make-synthetic", help="write synthetic train/test CSVs")
    p_synth.add_argument("--n", type=int, default=4000)
    p_synth.add_argument("--corr-train", type=float, default=0.9)
    p_synth.add_argument("--corr-test", type=float, default=0.1)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True)

    return parser


_HANDLERS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep-noise": _cmd_sweep_noise,
    "ablate": _cmd_ablate,
    "verify-props": _cmd_verify_props,
    "export-embeddings": _cmd_export_embeddings,
    "make-synthetic": _cmd_make_synthetic,
}


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.verb:
            raise UsageError("a verb is required")
        return _HANDLERS[args.verb](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_help(sys.stderr)
        return 1
    except Exception as exc:  # runtime failures map to exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))
