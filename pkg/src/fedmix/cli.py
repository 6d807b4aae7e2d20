"""Command-line front end.

Subcommands: run, similarity, timing, validate-bound, presets. Configs are
JSON files or preset names; outputs are deterministic given the config, so
rerunning a command reproduces its files byte for byte (the manifest's wall
clock aside).

Exit codes: 0 success, 1 invalid config, 2 runtime failure, 3 bound
violation.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .comm import COMM_PRESETS, TimingMode, timed_curve
from .config import (
    AUTO_STREAMS,
    BoundSettings,
    ConfigError,
    ExperimentConfig,
    config_digest,
    config_from_dict,
)
from .orchestrator import (
    read_mean_curve_csv,
    run_experiment,
    run_fedavg_baseline,
    run_local_baseline,
    run_oracle_baseline,
    write_metrics_csv,
    write_summary_json,
)
from .presets import PRESET_NOTES, preset_dict, preset_names
from .similarity import similarity_round
from .aggregation import kmeans_streams, silhouette_score
from .theory import default_validation_grid, validate_bound

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_BOUND_VIOLATION = 3


def _load_config_doc(value: str) -> dict:
    path = Path(value)
    if path.is_file():
        try:
            with open(path, encoding="utf-8") as f:
                return json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"not valid JSON ({exc})") from exc
    if value in preset_names():
        return preset_dict(value)
    raise ConfigError("config", f"{value!r} is neither a file nor a preset name")


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    if getattr(args, "seed_override", None) is not None:
        cfg = cfg.with_seed_override(args.seed_override)
    streams = getattr(args, "streams", None)
    if streams is not None:
        value = streams if streams == AUTO_STREAMS else int(streams)
        cfg = replace(cfg, rule="streamed", num_streams=value)
    return cfg


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    return _apply_overrides(config_from_dict(_load_config_doc(args.config)), args)


def _write_manifest(
    out: Path, command: str, cfg_digest: str, paths: list[Path], started: float
) -> Path:
    manifest = {
        "config_digest": cfg_digest,
        "command": command,
        "output_paths": sorted(p.name for p in paths),
        "wall_clock_seconds": time.perf_counter() - started,
        "tool_version": __version__,
    }
    path = out / "manifest.json"
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def cmd_run(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    cfg = _resolve_config(args)
    out = Path(args.out)
    result = run_experiment(cfg)

    baselines = {}
    for name in getattr(args, "baselines", None) or []:
        runner = {
            "local": run_local_baseline,
            "fedavg": run_fedavg_baseline,
            "oracle": run_oracle_baseline,
        }.get(name)
        if runner is None:
            raise ConfigError("baselines", f"unknown baseline {name!r}")
        baselines[name] = runner(cfg)

    out.mkdir(parents=True, exist_ok=True)
    written = []
    metrics_path = out / "metrics.csv"
    write_metrics_csv(metrics_path, result.metrics)
    written.append(metrics_path)
    summary_path = out / "summary.json"
    write_summary_json(summary_path, cfg, result.metrics)
    written.append(summary_path)
    if result.plan is not None:
        plan_path = out / "streamplan.json"
        with open(plan_path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(result.plan.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        written.append(plan_path)
    for name, res in baselines.items():
        path = out / f"metrics_{name}.csv"
        write_metrics_csv(path, res.metrics)
        written.append(path)
    written.append(_write_manifest(out, "run", config_digest(cfg), written, started))
    print(f"run complete: {len(result.metrics) - 1} rounds, outputs in {out}")
    return EXIT_OK


def cmd_similarity(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    cfg = _resolve_config(args)
    out = Path(args.out)

    from .orchestrator import _prepare_clients  # shared data path with `run`

    train, _ = _prepare_clients(cfg)
    result = similarity_round(
        train, cfg.model, cfg.variance_batches, cfg.seeds.probe, sigma_mode=cfg.sigma_mode
    )
    m = cfg.federation.num_clients
    table = []
    for k in range(2, min(m, 10) + 1):
        plan = kmeans_streams(result.w, k, cfg.seeds.probe)
        table.append({"k": k, "score": silhouette_score(result.w, plan)})

    report = result.to_json_dict()
    report["silhouette_by_k"] = table

    out.mkdir(parents=True, exist_ok=True)
    path = out / "similarity.json"
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    _write_manifest(out, "similarity", config_digest(cfg), [path], started)
    best = max(table, key=lambda row: row["score"]) if table else None
    if best:
        print(f"similarity round done; silhouette peaks at k={best['k']}")
    return EXIT_OK


def _streams_for_timing(cfg: ExperimentConfig, metrics_path: Path) -> int:
    m = cfg.federation.num_clients
    if cfg.rule == "fedavg":
        return 1
    if cfg.rule == "user_centric":
        return m
    if cfg.rule == "local":
        raise ConfigError("rule", "the local baseline has no communication to time")
    if cfg.num_streams != AUTO_STREAMS:
        return int(cfg.num_streams)
    plan_path = metrics_path.parent / "streamplan.json"
    if plan_path.is_file():
        with open(plan_path, encoding="utf-8") as f:
            return int(json.load(f)["m_t"])
    raise ConfigError(
        "num_streams",
        "cannot time an 'auto' stream count without the run's streamplan.json; "
        "pass --streams explicitly",
    )


def cmd_timing(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    cfg = _resolve_config(args)
    metrics_path = Path(args.metrics)
    if not metrics_path.is_file():
        raise ConfigError("metrics", f"metrics file {metrics_path} not found")
    curve_input = read_mean_curve_csv(metrics_path)
    m = cfg.federation.num_clients
    num_streams = _streams_for_timing(cfg, metrics_path)
    include_probe = cfg.rule in ("user_centric", "streamed")

    systems = dict(COMM_PRESETS)
    if cfg.comm is not None:
        systems["custom"] = cfg.comm

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, cm in systems.items():
        curve = timed_curve(
            curve_input, m, num_streams, cm,
            mode=TimingMode.EXPECTED, include_probe_round=include_probe,
        )
        path = out / f"timing_{name}.csv"
        curve.write_csv(path)
        written.append(path)
    _write_manifest(out, "timing", config_digest(cfg), written, started)
    print(f"wrote {len(written)} timing curves ({num_streams} streams) to {out}")
    return EXIT_OK


def cmd_validate_bound(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    doc = _load_config_doc(args.config)
    bound_doc = doc.get("bound", {})
    if "deltas" in bound_doc:
        bound_doc["deltas"] = tuple(bound_doc["deltas"])
    settings = BoundSettings(**bound_doc)

    records = []
    all_valid = True
    for entry in default_validation_grid():
        for delta in settings.deltas:
            check = validate_bound(
                entry["fc"],
                entry["distributions"],
                entry["ns"],
                entry["weights"],
                delta=delta,
                trials=settings.trials,
                seed=settings.seed,
            )
            ok = check.violation_rate <= delta
            all_valid = all_valid and ok
            records.append(
                {
                    "config": entry["name"],
                    "delta": delta,
                    "trials": check.trials,
                    "violation_rate": check.violation_rate,
                    "mean_slack": check.mean_slack,
                    "bound": check.bound,
                    "valid": ok,
                }
            )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "bound_report.json"
    report = {
        "trials": settings.trials,
        "deltas": list(settings.deltas),
        "records": records,
        "all_valid": all_valid,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    _write_manifest(out, "validate-bound", "-", [path], started)
    for rec in records:
        status = "ok" if rec["valid"] else "VIOLATED"
        print(
            f"{rec['config']:<28} delta={rec['delta']:<5} "
            f"violation_rate={rec['violation_rate']:.4f} {status}"
        )
    return EXIT_OK if all_valid else EXIT_BOUND_VIOLATION


def cmd_presets(args: argparse.Namespace) -> int:
    if args.action != "list":
        raise ConfigError("presets", f"unknown action {args.action!r}")
    for name in preset_names():
        print(f"{name:<24} {PRESET_NOTES.get(name, '')}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedmix",
        description="Personalized federated learning simulator",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, metrics: bool = False) -> None:
        p.add_argument("--config", required=True, help="config JSON path or preset name")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed-override", type=int, default=None)
        p.add_argument(
            "--streams", default=None,
            help="force the streamed rule with this stream count (int or 'auto')",
        )
        if metrics:
            p.add_argument("--metrics", required=True, help="metrics.csv from a prior run")

    p_run = sub.add_parser("run", help="run an experiment and emit metrics")
    add_common(p_run)
    p_run.add_argument(
        "--baselines", nargs="*", default=None,
        choices=["local", "fedavg", "oracle"],
        help="extra baseline runs to emit alongside the main rule",
    )
    p_run.set_defaults(func=cmd_run)

    p_sim = sub.add_parser("similarity", help="run only the similarity round")
    add_common(p_sim)
    p_sim.set_defaults(func=cmd_similarity)

    p_time = sub.add_parser("timing", help="time-axis curves for a finished run")
    add_common(p_time, metrics=True)
    p_time.set_defaults(func=cmd_timing)

    p_bound = sub.add_parser("validate-bound", help="Monte Carlo bound validation")
    p_bound.add_argument("--config", required=True)
    p_bound.add_argument("--out", required=True)
    p_bound.set_defaults(func=cmd_validate_bound)

    p_presets = sub.add_parser("presets", help="preset utilities")
    p_presets.add_argument("action", choices=["list"])
    p_presets.set_defaults(func=cmd_presets)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
