"""Seeded experiments: repeated nibble runs, estimator checks, baseline tables.

Every number in a report body is a function of (config, seed); wall-clock
timings live under the separate ``timing`` key and are never pass/fail.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import analysis
from .baselines import dsatur_color, greedy_color, verify_proper
from .engine import (
    CompletionFailure,
    CompletionPolicy,
    EmptyPalette,
    InvariantViolation,
    complete_coloring,
    default_params,
    run_rounds,
)
from .graph import Graph, GraphFamilySpec, generate, is_triangle_free, read_dimacs
from .rng import StreamRNG, derive_seed
from .schedule import ScheduleParams, build_schedule, feasibility_report

log = logging.getLogger(__name__)

CHECKS = ("assumption", "proper_rounds", "equalization", "palette_survival", "coloring_probability")
ESTIMATOR_CHECKS = ("equalization", "palette_survival", "coloring_probability")
_ESTIMATOR_SALT = 0xE5


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    graph: GraphFamilySpec | None = None
    input_path: str | None = None
    graphs: list[GraphFamilySpec] = field(default_factory=list)
    k: float | None = None
    num_colors: int | None = None
    completion: CompletionPolicy = field(default_factory=CompletionPolicy)
    trials: int = 1
    seed: int = 0
    psi: float | None = None
    beta: float = 1.0
    checks: tuple[str, ...] = ()
    output: str | None = None
    trace: str | None = None
    estimator_trials: int = 1000
    slack: float = 0.05
    tolerance_sigmas: float = 3.0
    keep_colorings: bool = False
    workers: int = 1

    def validate(self, need_graph: bool = True) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if (self.k is None) == (self.num_colors is None):
            raise ConfigError("give exactly one of k and num_colors")
        if self.k is not None and not self.k > 0:
            raise ConfigError("k must be positive")
        if self.num_colors is not None and self.num_colors < 1:
            raise ConfigError("num_colors must be >= 1")
        if need_graph and (self.graph is None) == (self.input_path is None) and not self.graphs:
            raise ConfigError("give exactly one of a graph spec and an input path")
        unknown = set(self.checks) - set(CHECKS)
        if unknown:
            raise ConfigError(f"unknown checks {sorted(unknown)}; known: {CHECKS}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if any(c in ESTIMATOR_CHECKS for c in self.checks) and self.estimator_trials < analysis.MIN_TRIALS:
            raise ConfigError(f"estimator_trials must be >= {analysis.MIN_TRIALS}")

    def to_dict(self) -> dict:
        return {
            "graph": self.graph.to_dict() if self.graph else None,
            "input_path": self.input_path,
            "graphs": [g.to_dict() for g in self.graphs],
            "k": self.k,
            "num_colors": self.num_colors,
            "completion": self.completion.to_dict(),
            "trials": self.trials,
            "seed": self.seed,
            "psi": self.psi,
            "beta": self.beta,
            "checks": list(self.checks),
            "estimator_trials": self.estimator_trials,
            "slack": self.slack,
            "tolerance_sigmas": self.tolerance_sigmas,
            "keep_colorings": self.keep_colorings,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        known = {
            "graph", "input_path", "graphs", "k", "num_colors", "completion", "trials", "seed",
            "psi", "beta", "checks", "output", "trace", "estimator_trials", "slack",
            "tolerance_sigmas", "keep_colorings", "workers",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if data.get("graph") is not None:
                data["graph"] = GraphFamilySpec.from_dict(data["graph"])
            data["graphs"] = [GraphFamilySpec.from_dict(g) for g in data.get("graphs", [])]
            if data.get("completion") is not None:
                data["completion"] = CompletionPolicy(**data["completion"])
            else:
                data.pop("completion", None)
            if "checks" in data:
                data["checks"] = tuple(data["checks"])
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class ExperimentReport:
    config: dict
    graph: dict
    schedule: dict
    feasibility: dict
    trials: list[dict]
    aggregate: dict
    timing: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 0 if self.aggregate["checks_passed"] and self.aggregate["success_rate"] > 0 else 1

    def body(self) -> dict:
        return {
            "config": self.config,
            "graph": self.graph,
            "schedule": self.schedule,
            "feasibility": self.feasibility,
            "trials": self.trials,
            "aggregate": self.aggregate,
        }

    def to_dict(self) -> dict:
        return {**self.body(), "timing": self.timing}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def load_graph(config: ExperimentConfig) -> Graph:
    if config.input_path is not None:
        return read_dimacs(Path(config.input_path).read_text(encoding="utf-8"))
    return generate(config.graph)


def graph_summary(g: Graph) -> dict:
    return {
        "n": g.vertex_count,
        "edges": g.edge_count,
        "max_degree": g.max_degree,
        "triangle_free": is_triangle_free(g),
    }


def experiment_params(g: Graph, config: ExperimentConfig) -> ScheduleParams:
    return default_params(g, k=config.k, num_colors=config.num_colors, psi=config.psi, beta=config.beta)


def run_trial(g: Graph, params: ScheduleParams, config: ExperimentConfig, index: int) -> tuple[dict, list[dict], dict]:
    """One seeded run: rounds, completion, verification.

    Returns (result, trace records, timings).
    """
    seed = derive_seed(config.seed, index)
    policy = config.completion
    observer = analysis.assumption_summary if "assumption" in config.checks else None
    failure = None
    t0 = time.perf_counter()
    try:
        state, traces = run_rounds(
            g, params, seed,
            num_colors=params.colors,
            stop_on_empty=policy.strategy != "greedy_fallback",
            check="proper_rounds" in config.checks,
            observer=observer,
        )
    except EmptyPalette as exc:
        state, traces, failure = exc.state, exc.traces, "empty_palette"
    except InvariantViolation as exc:
        log.error("trial %d: %s", index, exc)
        state, traces, failure = None, [], "invariant_violation"
    rounds_time = time.perf_counter() - t0

    coloring, attempts = None, 0
    t0 = time.perf_counter()
    if failure is None:
        try:
            coloring, attempts = complete_coloring(g, state, policy, StreamRNG(seed))
        except CompletionFailure as exc:
            failure, attempts = "completion", exc.attempts
    completion_time = time.perf_counter() - t0

    success = coloring is not None and verify_proper(g, coloring)
    result = {
        "trial": index,
        "seed": seed,
        "success": success,
        "failure": failure,
        "rounds_run": len(traces),
        "uncolored_after_rounds": None if state is None else int((state.color < 0).sum()),
        "colors_used": coloring.num_colors_used if success else None,
        "invariant_failures": sum(t.checks.get("invariant_failures", 0) for t in traces),
        "completion_attempts": attempts,
    }
    if config.keep_colorings:
        result["colors"] = list(coloring.colors) if success else None
    records = [{"type": "round", "trial": index, **t.to_dict()} for t in traces]
    records.append({
        "type": "final",
        "trial": index,
        "policy": policy.to_dict(),
        "attempts": attempts,
        "success": success,
        "failure": failure,
        "colors_used": result["colors_used"],
    })
    return result, records, {"rounds_s": rounds_time, "completion_s": completion_time}


def _run_trials(g: Graph, params: ScheduleParams, config: ExperimentConfig):
    indices = range(config.trials)
    if config.workers > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(run_trial, [g] * config.trials, [params] * config.trials,
                                 [config] * config.trials, indices))
    return [run_trial(g, params, config, i) for i in indices]


def run_estimators(g: Graph, params: ScheduleParams, config: ExperimentConfig) -> list[dict]:
    wanted = [c for c in ESTIMATOR_CHECKS if c in config.checks]
    if not wanted:
        return []
    if build_schedule(params).t1 < 1 or g.vertex_count == 0:
        return [{"name": name, "skipped": "no round to sample"} for name in wanted]
    stats = analysis.round_zero_statistics(
        g, params, config.estimator_trials, derive_seed(config.seed, _ESTIMATOR_SALT),
        num_colors=params.colors, workers=config.workers,
    )
    reports = {
        "equalization": lambda: analysis.equalization_check(stats, config.tolerance_sigmas),
        "palette_survival": lambda: analysis.palette_survival_report(stats, config.tolerance_sigmas),
        "coloring_probability": lambda: analysis.coloring_probability_report(stats, params, config.slack),
    }
    return [reports[name]().to_dict() for name in wanted]


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    config.validate()
    t_start = time.perf_counter()
    g = load_graph(config)
    params = experiment_params(g, config)
    schedule = build_schedule(params)
    outcomes = _run_trials(g, params, config)
    estimators = run_estimators(g, params, config)

    results = [o[0] for o in outcomes]
    used = [r["colors_used"] for r in results if r["success"]]
    invariant_violation = any(r["failure"] == "invariant_violation" for r in results)
    checks_passed = not invariant_violation and all(e.get("pass", True) for e in estimators)
    aggregate = {
        "success_rate": sum(r["success"] for r in results) / len(results),
        "mean_colors_used": sum(used) / len(used) if used else None,
        "max_colors_used": max(used) if used else None,
        "invariant_failures": sum(r["invariant_failures"] for r in results),
        "estimators": estimators,
        "checks_passed": checks_passed,
    }
    report = ExperimentReport(
        config=config.to_dict(),
        graph=graph_summary(g),
        schedule={"t1": schedule.t1, "num_colors": params.colors, "k": params.delta / params.s0,
                  "delta": params.delta, "psi": params.psi, "beta": params.beta},
        feasibility=feasibility_report(params).to_dict(),
        trials=results,
        aggregate=aggregate,
        timing={
            "total_s": time.perf_counter() - t_start,
            "rounds_s": sum(o[2]["rounds_s"] for o in outcomes),
            "completion_s": sum(o[2]["completion_s"] for o in outcomes),
        },
    )
    if config.trace:
        write_trace(config.trace, schedule.to_dict(), [o[1] for o in outcomes])
    if config.output:
        Path(config.output).write_text(report.to_json(), encoding="utf-8")
    return report


def trace_lines(schedule: dict, per_trial: list[list[dict]]) -> str:
    buf = io.StringIO()
    buf.write(json.dumps({"type": "schedule", **schedule}) + "\n")
    for records in per_trial:
        for rec in records:
            buf.write(json.dumps(rec) + "\n")
    return buf.getvalue()


def write_trace(path: str, schedule: dict, per_trial: list[list[dict]]) -> None:
    Path(path).write_text(trace_lines(schedule, per_trial), encoding="utf-8")


# ---------------------------------------------------------------------------
# baselines table

COMPARE_FIELDS = [
    "family", "n", "delta", "num_colors",
    "colors_nibble", "colors_greedy", "colors_dsatur",
    "success_rate_nibble", "greedy_proper", "dsatur_proper",
    "time_rounds_s", "time_completion_s", "time_greedy_s", "time_dsatur_s",
]


def _compare_row(label: str, g: Graph, config: ExperimentConfig) -> dict:
    params = experiment_params(g, config)
    outcomes = [run_trial(g, params, config, i) for i in range(config.trials)]
    used = [o[0]["colors_used"] for o in outcomes if o[0]["success"]]

    t0 = time.perf_counter()
    greedy = greedy_color(g)
    t_greedy = time.perf_counter() - t0
    t0 = time.perf_counter()
    dsatur = dsatur_color(g)
    t_dsatur = time.perf_counter() - t0
    return {
        "family": label,
        "n": g.vertex_count,
        "delta": g.max_degree,
        "num_colors": params.colors,
        "colors_nibble": max(used) if used else None,
        "colors_greedy": greedy.num_colors_used,
        "colors_dsatur": dsatur.num_colors_used,
        "success_rate_nibble": len(used) / len(outcomes),
        "greedy_proper": verify_proper(g, greedy),
        "dsatur_proper": verify_proper(g, dsatur),
        "time_rounds_s": round(sum(o[2]["rounds_s"] for o in outcomes), 6),
        "time_completion_s": round(sum(o[2]["completion_s"] for o in outcomes), 6),
        "time_greedy_s": round(t_greedy, 6),
        "time_dsatur_s": round(t_dsatur, 6),
    }


def compare_baselines(config: ExperimentConfig) -> list[dict]:
    """One row per graph: nibble (max colors over successful trials), greedy, DSATUR."""
    config.validate()
    rows = []
    if config.input_path is not None:
        rows.append(_compare_row(Path(config.input_path).name, load_graph(config), config))
    for spec in ([config.graph] if config.graph else []) + list(config.graphs):
        rows.append(_compare_row(spec.family, generate(spec), config))
    return rows


def rows_to_csv(rows: list[dict], fields: list[str] | None = None) -> str:
    fields = fields or (list(rows[0]) if rows else [])
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    return buf.getvalue()
