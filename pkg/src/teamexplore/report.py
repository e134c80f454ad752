"""Aggregate run directories into comparison tables and figures."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


@dataclass
class Coverage:
    steps: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    runs: int


def read_metrics(run_dir: str | Path) -> dict[str, np.ndarray]:
    path = Path(run_dir) / "metrics.csv"
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {"step": np.array([], dtype=int), "explored_cells": np.array([], dtype=float)}
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def read_decisions(run_dir: str | Path) -> list[dict]:
    with (Path(run_dir) / "decisions.csv").open(newline="") as fh:
        return list(csv.DictReader(fh))


def read_summary(run_dir: str | Path) -> dict:
    return json.loads((Path(run_dir) / "summary.json").read_text())


def coverage(run_dirs: Sequence[str | Path]) -> Coverage:
    """Mean and population stddev of explored_cells per step across runs."""
    series = [read_metrics(d)["explored_cells"] for d in run_dirs]
    lengths = {len(s) for s in series}
    if len(lengths) != 1:
        raise ValueError(f"runs have different step counts: {sorted(lengths)}")
    stacked = np.vstack(series) if series and len(series[0]) else np.zeros((len(series), 0))
    n = stacked.shape[1]
    return Coverage(np.arange(n), stacked.mean(axis=0), stacked.std(axis=0), len(series))


def final_ratio(cov: Mapping[str, Coverage], reference: str) -> dict[str, float]:
    ref = cov[reference].mean
    out = {}
    for name, c in cov.items():
        if len(c.mean) == 0 or ref[-1] == 0:
            out[name] = float("nan")
        else:
            out[name] = float(c.mean[-1] / ref[-1])
    return out


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def write_comparison(path: str | Path, cov: Mapping[str, Coverage], reference: str) -> dict[str, float]:
    """step rows of per-method mean/std, then a final `ratio` row relative to `reference`."""
    names = list(cov)
    ratios = final_ratio(cov, reference)
    n = len(cov[reference].steps)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step"] + [f"{m}_{s}" for m in names for s in ("mean", "std")])
        for i in range(n):
            w.writerow([i] + [x for m in names for x in (_fmt(cov[m].mean[i]), _fmt(cov[m].std[i]))])
        w.writerow(["ratio"] + [x for m in names for x in (_fmt(ratios[m]), "")])
    return ratios


STAT_FIELDS = ("n_frontier_neighbors", "n_occupied_neighbors", "distance")


def decision_values(run_dirs: Sequence[str | Path], min_step: int = 0) -> dict[str, np.ndarray]:
    rows = [r for d in run_dirs for r in read_decisions(d) if int(r["step"]) >= min_step]
    return {f: np.array([float(r[f]) for r in rows]) for f in STAT_FIELDS}


def decision_stats(values: Mapping[str, np.ndarray]) -> dict[str, float]:
    n = len(values["distance"])
    stats = {"n_decisions": n}
    for f in STAT_FIELDS:
        stats[f"mean_{f}"] = float(values[f].mean()) if n else float("nan")
    return stats


def write_stats(path: str | Path, stats: Mapping[str, Mapping[str, float]]) -> None:
    keys = ["n_decisions"] + [f"mean_{f}" for f in STAT_FIELDS]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method"] + keys)
        for method, s in stats.items():
            w.writerow([method, s["n_decisions"]] + [_fmt(s[k]) for k in keys[1:]])


def plot_coverage(cov: Mapping[str, Coverage], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for name, c in cov.items():
        ax.plot(c.steps, c.mean, label=f"{name} (n={c.runs})")
        ax.fill_between(c.steps, c.mean - c.std, c.mean + c.std, alpha=0.2)
    ax.set_xlabel("step")
    ax.set_ylabel("explored cells")
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_target_stats(values: Mapping[str, Mapping[str, np.ndarray]], path: str | Path) -> Path:
    """Histograms of the chosen targets' frontier/obstacle neighbour counts and distances."""
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.2))
    titles = ("frontier neighbours", "obstacle neighbours", "distance to leader [m]")
    for ax, field, title in zip(axes, STAT_FIELDS, titles):
        if field == "distance":
            hi = max((v[field].max() for v in values.values() if len(v[field])), default=1.0)
            bins = np.linspace(0.0, max(hi, 0.5), 16)
        else:
            bins = np.arange(-0.5, 9.5, 1.0)
        for name, v in values.items():
            ax.hist(v[field], bins=bins, alpha=0.5, density=True, label=name)
        ax.set_title(title, fontsize=10)
    axes[0].legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
