"""Command line entry point: ``nibblecolor {generate,color,estimate,compare,schedule}``.

Every flag mirrors a key of the JSON config accepted by ``--config``; flags
given on the command line override the file. Exit codes: 0 success, 1 a run
or check failed, 2 usage, config or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from .engine import CompletionPolicy
from .graph import FAMILIES, GraphError, GraphFamilySpec, InvalidSpec, ParseError, generate, write_dimacs
from .runner import (
    COMPARE_FIELDS,
    ConfigError,
    ExperimentConfig,
    compare_baselines,
    rows_to_csv,
    run_estimators,
    run_experiment,
    experiment_params,
    load_graph,
)
from .schedule import (
    DegenerateSchedule,
    ScheduleParams,
    build_schedule,
    feasibility_frontier,
    feasibility_report,
)

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2) itself; keep that code but go through main
        raise UsageError(message)


def _add_graph_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("graph")
    g.add_argument("--family", choices=FAMILIES)
    g.add_argument("--n", type=int)
    g.add_argument("--degree", type=int, dest="degree_target")
    g.add_argument("--edge-probability", type=float)
    g.add_argument("--graph-seed", type=int)
    g.add_argument("--input", dest="input_path", help="DIMACS .col file")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--k", type=float)
    p.add_argument("--colors", type=int, dest="num_colors")
    p.add_argument("--policy", choices=CompletionPolicy.STRATEGIES)
    p.add_argument("--max-attempts", type=int)
    p.add_argument("--resample-rounds", type=int)
    p.add_argument("--psi", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--checks", help="comma separated check names")
    p.add_argument("--estimator-trials", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--keep-colorings", action="store_true", default=None, help="include colorings in the report")
    p.add_argument("--trace", help="JSONL trace output path")
    p.add_argument("--out", dest="output", help="report output path (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    _add_graph_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nibblecolor", description="Semi-random coloring of triangle-free graphs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a generated graph as DIMACS")
    _add_graph_flags(p)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, help="alias for --graph-seed")
    p.add_argument("--out", dest="output")

    for name, text in (
        ("color", "run the nibble and completion, report success and colors"),
        ("estimate", "Monte Carlo checks of round-zero probabilities"),
        ("compare", "nibble vs greedy vs DSATUR table"),
    ):
        _add_run_flags(sub.add_parser(name, help=text))

    p = sub.add_parser("schedule", help="print d/s/e sequences and feasibility")
    p.add_argument("--delta", type=float)
    p.add_argument("--k", type=float)
    p.add_argument("--colors", type=int, dest="num_colors")
    p.add_argument("--psi", type=float)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--s-margin", type=float, default=10.0)
    p.add_argument("--e-margin", type=float, default=0.1)
    p.add_argument("--frontier", action="store_true", help="scan delta with k = ln(delta)/constant")
    p.add_argument("--constant", type=float, default=67.0)
    p.add_argument("--log10-max", type=float, default=300.0)
    p.add_argument("--log10-step", type=float, default=0.01)
    p.add_argument("--integer-limit", type=int, default=100_000)
    p.add_argument("--out", dest="output")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    return parser


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def _graph_spec(args: argparse.Namespace, base: dict | None) -> dict | None:
    spec = dict(base or {})
    for flag, key in (("family", "family"), ("n", "n"), ("degree_target", "degree_target"),
                      ("edge_probability", "edge_probability"), ("graph_seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            spec[key] = value
    return spec or None


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data = _load_config_file(args.config)
    graph = _graph_spec(args, data.get("graph"))
    if args.input_path is not None:
        data["input_path"], graph = args.input_path, None
    elif graph is not None:
        data.pop("input_path", None)
    data["graph"] = graph
    # --k and --colors are mutually exclusive; one on the command line replaces the other from the file
    if args.k is not None or args.num_colors is not None:
        data["k"], data["num_colors"] = args.k, args.num_colors
    completion = dict(data.get("completion") or {})
    for flag, key in (("policy", "strategy"), ("max_attempts", "max_attempts"), ("resample_rounds", "resample_rounds")):
        if getattr(args, flag) is not None:
            completion[key] = getattr(args, flag)
    data["completion"] = completion or None
    for key in ("seed", "trials", "psi", "beta", "estimator_trials", "workers", "keep_colorings", "trace", "output"):
        if getattr(args, key) is not None:
            data[key] = getattr(args, key)
    if args.checks is not None:
        data["checks"] = [c for c in args.checks.split(",") if c]
    return ExperimentConfig.from_dict(data)


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_generate(args) -> int:
    data = _load_config_file(args.config)
    base = data.get("graph", data)
    if args.seed is not None and args.graph_seed is None:
        args.graph_seed = args.seed
    spec = _graph_spec(args, base)
    if not spec or "family" not in spec:
        raise UsageError("generate needs --family (or a config with a graph spec)")
    gs = GraphFamilySpec.from_dict(spec)
    g = generate(gs)
    _emit(write_dimacs(g, comment=json.dumps(gs.to_dict())), args.output)
    return EXIT_OK


def cmd_color(args) -> int:
    config = config_from_args(args)
    output, config.output = config.output, None
    report = run_experiment(config)
    if args.format == "csv":
        _emit(rows_to_csv(report.trials), output)
    else:
        _emit(report.to_json(), output)
    return EXIT_OK if report.exit_code == 0 else EXIT_CHECK


def cmd_estimate(args) -> int:
    config = config_from_args(args)
    if not config.checks:
        config.checks = ("equalization", "palette_survival", "coloring_probability")
    config.validate()
    g = load_graph(config)
    params = experiment_params(g, config)
    reports = run_estimators(g, params, config)
    if args.format == "csv":
        _emit(rows_to_csv([{k: v for k, v in r.items() if k != "detail"} for r in reports]), config.output)
    else:
        _emit(json.dumps({"config": config.to_dict(), "estimators": reports}, indent=2) + "\n", config.output)
    return EXIT_OK if all(r.get("pass", True) for r in reports) else EXIT_CHECK


def cmd_compare(args) -> int:
    config = config_from_args(args)
    output, config.output, config.trace = config.output, None, None
    rows = compare_baselines(config)
    if args.format == "csv":
        _emit(rows_to_csv(rows, COMPARE_FIELDS), output)
    else:
        _emit(json.dumps(rows, indent=2) + "\n", output)
    ok = all(r["greedy_proper"] and r["dsatur_proper"] for r in rows)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_schedule(args) -> int:
    if args.frontier:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateSchedule)
            result = feasibility_frontier(
                constant=args.constant, s_margin=args.s_margin, e_margin=args.e_margin, beta=args.beta,
                integer_limit=args.integer_limit, log10_max=args.log10_max, log10_step=args.log10_step,
            )
        if args.format == "csv":
            _emit(rows_to_csv(result["samples"]), args.output)
        else:
            _emit(json.dumps(result, indent=2) + "\n", args.output)
        return EXIT_OK if result["threshold_delta"] is not None else EXIT_CHECK

    if args.delta is None or (args.k is None) == (args.num_colors is None):
        raise UsageError("schedule needs --delta and exactly one of --k / --colors (or --frontier)")
    if args.num_colors is not None:
        params = ScheduleParams.from_colors(args.delta, args.num_colors, psi=args.psi, beta=args.beta)
    else:
        params = ScheduleParams(delta=args.delta, k=args.k, psi=args.psi, beta=args.beta)
    sched = build_schedule(params)
    feas = feasibility_report(params, args.s_margin, args.e_margin)
    if args.format == "csv":
        rows = [{"t": t, "d": d, "s": s, "e": e} for t, (d, s, e) in enumerate(zip(sched.d_seq, sched.s_seq, sched.e_seq))]
        _emit(rows_to_csv(rows, ["t", "d", "s", "e"]), args.output)
    else:
        _emit(json.dumps({"schedule": sched.to_dict(), "feasibility": feas.to_dict()}, indent=2) + "\n", args.output)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "color": cmd_color,
    "estimate": cmd_estimate,
    "compare": cmd_compare,
    "schedule": cmd_schedule,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"nibblecolor: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, InvalidSpec, ParseError, GraphError, OSError, ValueError) as exc:
        print(f"nibblecolor: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
