"""Experiment orchestration: configs in, metrics/trace/summary out."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import engine
from .config import (
    ExperimentConfig,
    build_bounds,
    build_cd_set,
    build_datasets,
    build_delay,
    build_faults,
    build_model_spec,
    build_run_config,
    build_schedules,
)
from .errors import ConfigError, InputError
from .metrics import METRIC_COLUMNS, attack_success_rate, build_backdoor_testset
from .simulator import inject_faults, time_ratio


@dataclass
class RunArtifacts:
    resolved_config: dict
    metric_rows: list
    trace: list
    summary: dict

    def metrics_csv(self) -> str:
        lines = [",".join(METRIC_COLUMNS)]
        for row in self.metric_rows:
            lines.append(",".join(_fmt(row[c]) for c in METRIC_COLUMNS))
        return "\n".join(lines) + "\n"

    def trace_jsonl(self) -> str:
        return "\n".join(json.dumps(e, separators=(",", ":")) for e in self.trace) + "\n"

    def resolved_config_json(self) -> str:
        return json.dumps(self.resolved_config, indent=2, sort_keys=True) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_experiment(cfg: ExperimentConfig) -> RunArtifacts:
    """Execute one run. Deterministic for a fixed config."""
    datasets, data_classes = build_datasets(cfg)
    n_workers = cfg.workers if cfg.workers is not None else len(datasets)
    if n_workers != len(datasets):
        raise ConfigError(
            f"config names {n_workers} workers but the data source yields {len(datasets)}"
        )
    model = build_model_spec(cfg, datasets[0].n_features, data_classes)
    faults = build_faults(cfg)
    if any(j >= n_workers for j in faults.malicious):
        raise ConfigError("malicious worker id out of range")
    fault_rng = np.random.default_rng([cfg.seed, 99])
    poisoned, poison_mask = inject_faults(datasets, faults, fault_rng)

    run_cfg = build_run_config(cfg, n_workers)
    cd = build_cd_set(cfg, n_workers)
    bounds = build_bounds(cfg)
    sched = build_schedules(cfg, n_workers)
    delay = build_delay(cfg)

    out = engine.run(run_cfg, poisoned, model, cd, bounds, sched, delay, faults)

    summary = dict(out.summary)
    summary["poisoned_counts"] = {str(j): int(len(ix)) for j, ix in poison_mask.items()}
    if faults.backdoor is not None and faults.malicious:
        testset = build_backdoor_testset(datasets, faults.backdoor)
        final_model = out.state.w if cfg.mode == "centralized" else out.state.z
        summary["attack_success_rate"] = attack_success_rate(
            final_model, model, testset, faults.backdoor.target
        )
    resolved = cfg.model_dump(mode="json")
    return RunArtifacts(resolved, out.metric_rows, out.trace, summary)


def parse_metrics_csv(text: str) -> list[dict]:
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines:
        raise InputError("metrics file is empty")
    header = lines[0].split(",")
    if tuple(header) != METRIC_COLUMNS:
        raise InputError(
            f"metrics columns {header} do not match {list(METRIC_COLUMNS)}"
        )
    rows = []
    for ln in lines[1:]:
        vals = ln.split(",")
        row = dict(zip(header, vals))
        rows.append({
            "t": int(row["t"]), "vtime": float(row["vtime"]),
            "gap": float(row["gap"]), "worst_loss": float(row["worst_loss"]),
            "worst_acc": float(row["worst_acc"]), "acc_std": float(row["acc_std"]),
            "planes": int(row["planes"]), "sum_lambda": float(row["sum_lambda"]),
            "mal_weight": float(row["mal_weight"]),
        })
    return rows


def _deterministic_delays(config: dict | None):
    if not config:
        return None
    delay = config.get("delay") or {}
    n = config.get("workers")
    if delay.get("kind") == "constant":
        if n is None:
            return None
        return [float(delay.get("value", 1.0))] * int(n)
    if delay.get("kind") == "per_worker":
        return [float(v) for v in delay.get("values", [])] or None
    return None


def compare_runs(runs: list[dict], eps: float = 1e-3) -> dict:
    """Summarize >= 2 runs and their pairwise completion-time ratios.

    Each entry: {"name", "rows" (parsed metric rows), "config" (optional
    resolved config dict)}. The predicted async/sync ratio is included for
    pairs whose first run has deterministic delays.
    """
    if len(runs) < 2:
        raise InputError("compare needs at least two metric files")
    per_run = []
    for entry in runs:
        rows = entry["rows"]
        if not rows:
            raise InputError(f"run {entry['name']} has no metric rows")
        final = rows[-1]
        t_eps = next((r["t"] for r in rows if r["gap"] <= eps), None)
        per_run.append({
            "name": entry["name"],
            "iterations": final["t"],
            "vtime": final["vtime"],
            "final_gap": final["gap"],
            "final_worst_loss": final["worst_loss"],
            "t_eps": t_eps,
            "peak_planes": max(r["planes"] for r in rows),
            "config": entry.get("config"),
        })
    pairs = []
    for a in per_run:
        for b in per_run:
            if a is b:
                continue
            ratio = a["vtime"] / b["vtime"] if b["vtime"] else float("nan")
            delays = _deterministic_delays(a["config"])
            predicted = None
            if delays and a["config"]:
                s = int(a["config"].get("s_min", 1))
                predicted = time_ratio(a["iterations"], b["iterations"], s, delays)
            pairs.append({
                "a": a["name"], "b": b["name"],
                "time_ratio": ratio,
                "predicted_time_ratio": predicted,
                "worst_loss_ratio": (
                    a["final_worst_loss"] / b["final_worst_loss"]
                    if b["final_worst_loss"] else float("nan")
                ),
            })
    for r in per_run:
        r.pop("config", None)
    return {"eps": eps, "runs": per_run, "pairs": pairs}


def comparison_table(result: dict) -> str:
    """Plain-text table of the per-run summary plus pairwise ratios."""
    cols = ("name", "iterations", "vtime", "final_gap", "final_worst_loss",
            "t_eps", "peak_planes")
    widths = {c: max(len(c), *(len(_cell(r.get(c))) for r in result["runs"]))
              for c in cols}
    lines = ["  ".join(c.ljust(widths[c]) for c in cols)]
    for r in result["runs"]:
        lines.append("  ".join(_cell(r.get(c)).ljust(widths[c]) for c in cols))
    lines.append("")
    lines.append("pairwise (a vs b): time_ratio [predicted] worst_loss_ratio")
    for p in result["pairs"]:
        pred = "-" if p["predicted_time_ratio"] is None else f"{p['predicted_time_ratio']:.6g}"
        lines.append(
            f"{p['a']} vs {p['b']}: {p['time_ratio']:.6g} [{pred}] "
            f"{p['worst_loss_ratio']:.6g}"
        )
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)
