"""Command-line front end: ``teamexplore run | compare | report``."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields, replace
from pathlib import Path

from . import report
from .engine import SimConfig, resolve_world, run
from .llm import ConfigError, LlmConfig

METHOD_CHOICES = ("baseline", "llm", "mock-heuristic")
SIM_KEYS = {f.name for f in fields(SimConfig)}


def method_settings(label: str) -> dict:
    """SimConfig fields for a CLI method label."""
    if label == "mock-heuristic":
        return {"method": "llm", "mock": "heuristic"}
    if label == "llm":
        return {"method": "llm", "mock": None}
    return {"method": "baseline", "mock": None}


def load_settings(path: str | Path | None) -> dict:
    """Raw settings from a JSON config file; `env_path` is resolved relative to the file."""
    if path is None:
        return {}
    path = Path(path)
    raw = json.loads(path.read_text())
    unknown = set(raw) - SIM_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    if raw.get("method") in METHOD_CHOICES:
        raw.update(method_settings(raw["method"]))
    if "env_path" in raw:
        raw["env_path"] = str(resolve_world(raw["env_path"], base_dir=path.parent))
    return raw


def build_config(settings: dict, args: argparse.Namespace | None = None) -> SimConfig:
    """SimConfig from file settings with command-line overrides applied.

    A warm-up longer than the run is cut to the run length, so `--steps 0` stays valid.
    """
    s = dict(settings)
    if args is not None:
        for flag, key in (
            ("seed", "seed"),
            ("steps", "total_steps"),
            ("robots", "n_robots"),
            ("out", "out_dir"),
            ("snapshot_every", "snapshot_every"),
        ):
            value = getattr(args, flag, None)
            if value is not None:
                s[key] = str(value) if key == "out_dir" else value
        if getattr(args, "method", None) is not None:
            s.update(method_settings(args.method))
    if isinstance(s.get("llm"), dict):
        s["llm"] = LlmConfig(**s["llm"])
    steps = s.get("total_steps", SimConfig.total_steps)
    s["warmup_steps"] = min(s.get("warmup_steps", SimConfig.warmup_steps), steps)
    return SimConfig(**s)


def load_config(path: str | Path | None, args: argparse.Namespace | None = None) -> SimConfig:
    return build_config(load_settings(path), args)


def _run_one(cfg: SimConfig) -> tuple[str, int]:
    summary = run(cfg)
    return cfg.out_dir, summary.final_explored_cells


def cmd_run(args) -> int:
    cfg = load_config(args.config, args)
    if cfg.out_dir is None:
        cfg = replace(cfg, out_dir="runs/latest")
    summary = run(cfg)
    print(
        f"{cfg.method}{'/' + cfg.mock if cfg.mock else ''} seed={cfg.seed} steps={len(summary.metrics)} "
        f"explored_cells={summary.final_explored_cells} -> {cfg.out_dir}"
    )
    return 0


def cmd_compare(args) -> int:
    if len(args.methods) < 2:
        raise ConfigError("compare needs at least two --methods")
    if len(set(args.seeds)) != len(args.seeds):
        raise ConfigError(f"seeds must be distinct, got {args.seeds}")
    base = load_config(args.config, argparse.Namespace(steps=args.steps, robots=args.robots))
    out = Path(args.out)
    labels = []
    jobs: dict[str, list[SimConfig]] = {}
    for method in args.methods:
        # a repeated method gets its own label so the runs land in separate directories
        label = method if method not in jobs else f"{method}-{len(labels) + 1}"
        labels.append(label)
        jobs[label] = [
            replace(base, seed=s, out_dir=str(out / label / f"seed_{s}"), **method_settings(method))
            for s in args.seeds
        ]
    all_cfgs = [c for cs in jobs.values() for c in cs]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            list(pool.map(_run_one, all_cfgs))
    else:
        for c in all_cfgs:
            _run_one(c)

    dirs = {label: [Path(c.out_dir) for c in cs] for label, cs in jobs.items()}
    cov = {label: report.coverage(ds) for label, ds in dirs.items()}
    ratios = report.write_comparison(out / "comparison.csv", cov, labels[0])
    report.plot_coverage(cov, out / "coverage.png")
    for label in labels[1:]:
        print(f"final explored_cells ratio {label}/{labels[0]}: {ratios[label]:.4f}")
    if args.stats:
        values = {label: report.decision_values(ds, min_step=base.warmup_steps) for label, ds in dirs.items()}
        stats = {label: report.decision_stats(v) for label, v in values.items()}
        report.write_stats(out / "stats.csv", stats)
        report.plot_target_stats(values, out / "target_stats.png")
        for label, s in stats.items():
            print(
                f"{label}: decisions={s['n_decisions']} "
                f"mean_nf={s['mean_n_frontier_neighbors']:.3f} "
                f"mean_no={s['mean_n_occupied_neighbors']:.3f} "
                f"mean_d={s['mean_distance']:.3f}"
            )
    return 0


def cmd_report(args) -> int:
    runs = [Path(d) for d in args.runs]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    finals = [report.read_summary(d)["final_explored_cells"] for d in runs]
    cov = {args.label: report.coverage(runs)}
    report.write_comparison(out / "report.csv", cov, args.label)
    report.plot_coverage(cov, out / "coverage.png")
    mean = sum(finals) / len(finals)
    print(f"{len(runs)} runs, final explored_cells mean {mean:.2f} ({', '.join(map(str, finals))})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="teamexplore", description="Decentralized multi-robot exploration simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one simulation")
    r.add_argument("--config", type=Path)
    r.add_argument("--seed", type=int)
    r.add_argument("--method", choices=METHOD_CHOICES)
    r.add_argument("--steps", type=int)
    r.add_argument("--robots", type=int)
    r.add_argument("--out", type=Path)
    r.add_argument("--snapshot-every", type=int)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run several methods over several seeds and aggregate")
    c.add_argument("--config", type=Path)
    c.add_argument("--methods", nargs="+", choices=METHOD_CHOICES, default=["baseline", "mock-heuristic"])
    c.add_argument("--seeds", nargs="+", type=int, default=[1, 2, 3, 4, 5])
    c.add_argument("--steps", type=int)
    c.add_argument("--robots", type=int)
    c.add_argument("--out", type=Path, required=True)
    c.add_argument("--stats", action="store_true", help="add target-cell statistics per method")
    c.add_argument("--jobs", type=int, default=1)
    c.set_defaults(func=cmd_compare)

    rp = sub.add_parser("report", help="average explored_cells over finished run directories")
    rp.add_argument("runs", nargs="+")
    rp.add_argument("--out", type=Path, required=True)
    rp.add_argument("--label", default="runs")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"teamexplore {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"teamexplore {args.command}: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
