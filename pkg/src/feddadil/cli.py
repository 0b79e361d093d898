"""Experiment command line: generate, run, sweep, distill.

Configuration comes from an optional JSON file plus flag overrides;
every command is deterministic under ``(config, seed)`` and embeds the
config hash in its outputs.  Exit codes: 0 on success, 2 on
configuration errors, 1 on runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

from .datasets import default_benchmark, default_domain_specs, generate_benchmark, load_features, save_features
from .experiments import ExperimentConfig, distillation_sweep, parallelism_sweep, run_experiment
from .datasets import Benchmark

_SWEEP_AXES = {
    "E": "epochs",
    "K": "n_atoms",
    "n": "atom_size",
    "n_b": "batch_size",
}


def _config_from_args(args) -> ExperimentConfig:
    values = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = set(loaded) - known
        if unknown:
            raise _ConfigError([f"unknown config keys: {sorted(unknown)}"])
        values.update(loaded)
    for f in dataclasses.fields(ExperimentConfig):
        override = getattr(args, f.name, None)
        if override is not None:
            values[f.name] = override
    config = ExperimentConfig(**values)
    errors = config.validate()
    if errors:
        raise _ConfigError(errors)
    return config


class _ConfigError(Exception):
    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its fields")
    for f in dataclasses.fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool" or isinstance(f.default, bool):
            parser.add_argument(flag, type=_parse_bool, default=None, metavar="BOOL")
        elif isinstance(f.default, int):
            parser.add_argument(flag, type=int, default=None)
        elif isinstance(f.default, float):
            parser.add_argument(flag, type=float, default=None)
        else:
            parser.add_argument(flag, type=str, default=None)


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _load_benchmark(config: ExperimentConfig) -> Benchmark:
    if config.benchmark == "synthetic":
        return default_benchmark(seed=config.seed)
    manifest_path = Path(config.benchmark)
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    base = manifest_path.parent
    measures = []
    target_index = manifest["target_index"]
    n_classes = manifest["n_classes"]
    for i, name in enumerate(manifest["files"]):
        measure = load_features(base / name, n_classes=n_classes)
        measures.append(measure)
    eval_measure = load_features(base / manifest["target_eval_file"], n_classes=n_classes)
    return Benchmark(
        measures=measures,
        target_index=target_index,
        _target_labels=eval_measure.labels,
    )


def cmd_generate(config: ExperimentConfig) -> int:
    """Write the synthetic benchmark to per-domain CSVs plus a manifest."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    specs = default_domain_specs(seed=config.seed)
    benchmark = generate_benchmark(specs, target_index=len(specs) - 1, seed=config.seed)
    files = []
    for i, measure in enumerate(benchmark.measures):
        name = f"domain_{i}.csv"
        save_features(measure, out / name)
        files.append(name)
    eval_name = f"domain_{benchmark.target_index}_eval.csv"
    save_features(benchmark.target_evaluation_measure(), out / eval_name)
    manifest = {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "n_domains": benchmark.n_domains,
        "n_classes": benchmark.measures[0].n_classes or benchmark._target_labels.shape[1],
        "dim": benchmark.target.dim,
        "target_index": benchmark.target_index,
        "files": files,
        "target_eval_file": eval_name,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(files)} domains + manifest to {out}")
    return 0


def cmd_run(config: ExperimentConfig) -> int:
    """Run the full pipeline and write results JSON plus the transcript."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    benchmark = _load_benchmark(config)
    results, artifacts = run_experiment(benchmark, config)
    transcript = artifacts["transcript"]
    transcript_name = "transcript.jsonl"
    transcript.write_jsonl(out / transcript_name)
    results["transcript_summary"]["file"] = transcript_name
    with open(out / "results.json", "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
        fh.write("\n")
    summary = {
        "dadil_r_acc": results["dadil_r_acc"],
        "dadil_e_acc": results["dadil_e_acc"],
        "fedavg_acc": results["fedavg_acc"],
    }
    print(json.dumps(summary))
    print(f"results written to {out / 'results.json'}")
    return 0


def cmd_sweep(config: ExperimentConfig, axis: str, values) -> int:
    """Rerun the pipeline across one axis; one CSV row per value."""
    if axis not in _SWEEP_AXES:
        raise _ConfigError([f"sweep axis must be one of {sorted(_SWEEP_AXES)}"])
    if not values:
        raise _ConfigError(["sweep needs at least one value"])
    field_name = _SWEEP_AXES[axis]
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    benchmark = _load_benchmark(config)
    rows = []
    for value in values:
        cell = dataclasses.replace(config, **{field_name: int(value)})
        errors = cell.validate()
        if errors:
            raise _ConfigError([f"{axis}={value}: {e}" for e in errors])
        start = time.perf_counter()
        results, _ = run_experiment(benchmark, cell)
        rows.append(
            {
                axis: int(value),
                "dadil_r_acc": results["dadil_r_acc"],
                "dadil_e_acc": results["dadil_e_acc"],
                "fedavg_acc": results["fedavg_acc"],
                "wall_time_s": round(time.perf_counter() - start, 3),
            }
        )
    path = out / f"sweep_{axis}.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def cmd_distill(config: ExperimentConfig, spc_values) -> int:
    """Distillation sweep: summary size, label entropy and accuracy per SPC."""
    if not spc_values:
        raise _ConfigError(["distill needs at least one SPC value"])
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    benchmark = _load_benchmark(config)
    rows = distillation_sweep(benchmark, spc_values, config)
    path = out / "distill.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["spc", "summary_size", "mean_label_entropy", "accuracy"]
        )
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="feddadil",
        description="Federated dictionary-learning experiments on feature benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write the synthetic benchmark to CSV files")
    _add_config_flags(p_gen)

    p_run = sub.add_parser("run", help="train, adapt and evaluate one configuration")
    _add_config_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="rerun across one axis (E, K, n or n_b)")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=sorted(_SWEEP_AXES))
    p_sweep.add_argument("--values", required=True, nargs="+", type=int)

    p_dist = sub.add_parser("distill", help="distilled-summary sweep over SPC values")
    _add_config_flags(p_dist)
    p_dist.add_argument("--spc", required=True, nargs="+", type=int)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
        if args.command == "generate":
            return cmd_generate(config)
        if args.command == "run":
            return cmd_run(config)
        if args.command == "sweep":
            return cmd_sweep(config, args.axis, args.values)
        if args.command == "distill":
            return cmd_distill(config, args.spc)
        parser.error(f"unknown command {args.command!r}")
    except _ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
