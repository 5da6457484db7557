"""Command-line entry point: ``hamp plan | exec | bench | report``.

Scenario files are YAML (JSON is valid YAML). A planning scenario looks like::

    robot: {preset: bench-3dof}
    start: [0.0, 0.3, 0.2]
    goals: [[1.2, -0.4, 0.5]]
    mode: hamp
    human: {points: [[0.6, 0.2, 0.7]]}        # deterministic human, or
    grid: {mu: [0.6, 0.2, 0.7], radius: 0.5}  # radial occupancy around mu
    scene: {spheres: [...], boxes: [...]}
    safety: {C: 0.2}
    planner: {max_iterations: 1000}
    weights: {nu: 0.001}
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path as FilePath
from typing import Any, Sequence

import numpy as np

from . import bench
from .costmap import CostWeights
from .execution import ExecutionSettings, execute
from .human import (
    DeterministicHuman,
    HumanTimeline,
    grid_from_dict,
    load_grid,
    load_timeline,
    radial_occupancy,
    workspace_grid,
)
from .kinematics import Path, RobotModel, robot_from_dict, robot_to_dict
from .planner import CostMode, PlannerSettings, PlanningQuery, Scene, plan
from .safety import SafetyParams

log = logging.getLogger("hamp")

PATH_SCHEMA = "hamp.path/1"


def _load(path: str) -> dict[str, Any]:
    import yaml

    with open(path, encoding="utf-8") as fh:
        return yaml.safe_load(fh) or {}


def _out_dir(arg: str | None) -> FilePath:
    out = FilePath(arg or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(obj: Any, path: FilePath) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _robot(cfg: dict[str, Any]) -> RobotModel:
    return robot_from_dict(cfg.get("robot", {"preset": "bench-3dof"}))


def _human(cfg: dict[str, Any], model: RobotModel):
    """Deterministic human, occupancy grid, or None from a scenario dict."""
    if cfg.get("human") is not None:
        return DeterministicHuman.from_dict(cfg["human"])
    g = cfg.get("grid")
    if g is None:
        return None
    if "pi" in g:
        return grid_from_dict(g)
    if "file" in g:
        return load_grid(g["file"])
    lo, hi = model.base - model.reach, model.base + model.reach
    base = workspace_grid(lo, hi, float(g.get("edge", 0.1)))
    return radial_occupancy(base, g["mu"], float(g.get("radius", 0.5)), bool(g.get("inverse_radius", False)))


def cmd_plan(args: argparse.Namespace) -> int:
    cfg = _load(args.scenario)
    model = _robot(cfg)
    mode = CostMode(args.planner or cfg.get("mode", "hamp"))
    settings = PlannerSettings.from_dict(cfg.get("planner"))
    if args.iterations is not None:
        settings = PlannerSettings.from_dict({**settings.to_dict(), "max_iterations": args.iterations})
    safety = SafetyParams.from_dict(cfg.get("safety"))
    weights = CostWeights(**(cfg.get("weights") or {}))
    human = _human(cfg, model) if mode is not CostMode.MIN_PATH else None
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    query = PlanningQuery(np.asarray(cfg["start"], float), np.atleast_2d(np.asarray(cfg["goals"], float)), mode, seed)
    result = plan(query, Scene.from_dict(cfg.get("scene")), model, human, weights, safety, settings)
    print(f"{mode.value}: {result.message} cost={result.cost:.6g} iterations={result.iterations} "
          f"lambda_evals={result.lambda_evaluations}")
    if not result.success:
        return 1
    out = _out_dir(args.out)
    _write_json(
        {
            "schema": PATH_SCHEMA,
            "mode": mode.value,
            "seed": seed,
            "cost": float(result.cost),
            "goal_index": result.goal_index,
            "length": float(result.path.length()),
            "t_nom": result.path.nominal_time(model),
            "robot": robot_to_dict(model),
            "waypoints": result.path.to_list(),
            "history": [[int(i), float(c)] for i, c in result.history],
        },
        out / "path.json",
    )
    log.info("wrote %s", out / "path.json")
    return 0


def cmd_exec(args: argparse.Namespace) -> int:
    data = _load(args.path)
    if data.get("schema") != PATH_SCHEMA:
        raise SystemExit(f"{args.path}: not a path file")
    cfg = _load(args.scenario) if args.scenario else {}
    model = robot_from_dict(data["robot"])
    safety = SafetyParams.from_dict(cfg.get("safety"))
    if args.timeline:
        timeline = load_timeline(args.timeline)
    elif cfg.get("timeline") is not None:
        timeline = HumanTimeline.from_dict(cfg["timeline"])
    elif cfg.get("human") is not None:
        timeline = HumanTimeline.static(DeterministicHuman.from_dict(cfg["human"]))
    else:
        timeline = None
    settings = ExecutionSettings.from_dict(cfg.get("execution"))
    trace, metrics = execute(Path(data["waypoints"]), model, safety, timeline, settings)
    out = _out_dir(args.out)
    trace.to_csv(out / "trace.csv")
    m = metrics.to_dict()
    m["min_distance"] = None if not np.isfinite(m["min_distance"]) else m["min_distance"]
    _write_json(m, out / "metrics.json")
    print(f"{metrics.outcome}: t_nom={metrics.t_nom:.4f} t_exec={metrics.t_exec:.4f} dilation={metrics.dilation:.4f}")
    return 0 if metrics.success else 1


def _finish(report: bench.AggregateReport, records: list[dict[str, Any]], out: FilePath, check: bool) -> int:
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / "summary.txt").write_text(report.table() + "\n", encoding="utf-8")
    with open(out / "plot.csv", "w", encoding="utf-8") as fh:
        fh.write("planner,query,rep,path_length,t_nom,t_exec,success\n")
        for row in bench.plot_rows(records):
            fh.write(",".join("" if v is None else str(v) for v in row) + "\n")
    print(report.table())
    problems = bench.check_report(report)
    for p in problems:
        print(f"threshold violated: {p}")
    return 2 if check and problems else 0


def cmd_bench(args: argparse.Namespace) -> int:
    spec = bench.load_spec(args.spec)
    over: dict[str, Any] = {"master_seed": args.seed, "queries": args.queries, "repetitions": args.repetitions,
                            "workers": args.workers}
    if args.planners:
        over["planners"] = tuple(args.planners)
    spec = bench.with_overrides(spec, **over)
    report, records = bench.run_experiment(spec)
    out = _out_dir(args.out)
    bench.write_records(records, out / "records.ndjson")
    _write_json(spec.to_dict(), out / "spec.json")
    return _finish(report, records, out, args.check)


def cmd_report(args: argparse.Namespace) -> int:
    records = bench.read_records(args.records)
    if args.planners:
        records = [r for r in records if r["planner"] in args.planners]
    spec = None
    if args.spec:
        spec = bench.load_spec(args.spec)
        if args.planners:
            spec = bench.with_overrides(spec, planners=tuple(args.planners))
    report = bench.aggregate(records, spec)
    return _finish(report, records, _out_dir(args.out), args.check)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hamp", description="Human-aware motion planning toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    modes = [m.value for m in CostMode]

    p = sub.add_parser("plan", help="solve a single planning query")
    p.add_argument("scenario", help="YAML/JSON scenario file")
    p.add_argument("--planner", choices=modes, help="cost mode (overrides the scenario)")
    p.add_argument("--seed", type=int, help="planner seed")
    p.add_argument("--iterations", type=int, help="iteration budget")
    p.add_argument("-o", "--out", help="output directory (default: cwd)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("exec", help="simulate a planned path under speed and separation monitoring")
    p.add_argument("path", help="path.json written by 'hamp plan'")
    p.add_argument("--scenario", help="scenario file providing safety, human and execution sections")
    p.add_argument("--timeline", help="human timeline JSON (overrides the scenario)")
    p.add_argument("-o", "--out", help="output directory (default: cwd)")
    p.set_defaults(func=cmd_exec)

    p = sub.add_parser("bench", help="run an experiment spec")
    p.add_argument("spec", help="YAML experiment spec")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--queries", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--planners", nargs="+", choices=modes)
    p.add_argument("-o", "--out", help="output directory (default: cwd)")
    p.add_argument("--check", action="store_true", help="exit nonzero when an acceptance threshold is violated")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="re-aggregate raw run records")
    p.add_argument("records", help="records.ndjson from 'hamp bench'")
    p.add_argument("--spec", help="experiment spec (fixes planner order and kind)")
    p.add_argument("--planners", nargs="+", choices=modes)
    p.add_argument("-o", "--out", help="output directory (default: cwd)")
    p.add_argument("--check", action="store_true", help="exit nonzero when an acceptance threshold is violated")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, RuntimeError) as exc:
        print(f"hamp {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
