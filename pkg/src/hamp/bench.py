"""Benchmark harness: random queries, planner comparison, normalized aggregates.

Experiments
-----------
A
    Static human around a random workspace point ``mu``. The human body is
    the set of voxel centers whose occupancy probability is at least
    ``body_threshold`` (None: the single point ``mu``).
B
    Human at ``mu`` when execution starts, relocated to a draw from the
    occupancy grid around ``mu`` (once at half the nominal time by default,
    or every ``update_period`` seconds). ``realization="bernoulli"`` occupies
    each voxel independently; ``"single"`` puts the human at one voxel chosen
    in proportion to its probability.
C
    Like A, but every query has several equivalent goals.

Every run is fully determined by the master seed; raw records carry no
wall-clock data, so two runs of the same spec serialize byte-identically.
"""

from __future__ import annotations

import json
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Iterable, Sequence

import numpy as np

from .costmap import Costmap, CostWeights, multi_goal_cost, path_cost, path_length
from .execution import ExecutionSettings, execute
from .human import DeterministicHuman, HumanTimeline, OccupancyGrid, radial_occupancy, sample_occupancy, sample_realization, workspace_grid
from .kinematics import RobotModel, forward_points, robot_from_dict
from .planner import CostMode, PlannerSettings, PlanningQuery, PlanResult, Scene, configuration_free, plan
from .safety import SafetyParams

__all__ = [
    "ExperimentSpec",
    "QueryInstance",
    "AggregateReport",
    "DEFAULT_PLANNERS",
    "load_spec",
    "make_query",
    "run_query",
    "run_experiment",
    "normalize",
    "aggregate",
    "check_report",
    "write_records",
    "read_records",
    "plot_rows",
]

RECORD_SCHEMA = "hamp.run/1"
REPORT_SCHEMA = "hamp.report/1"
BASELINE = CostMode.MIN_PATH.value

DEFAULT_PLANNERS = {
    "A": ("min-path", "hamp"),
    "B": ("min-path", "hamp", "hamp-probabilistic"),
    "C": ("min-path", "hamp", "hamp-approximated"),
}

# stable per-planner seed salt; independent of which planners a spec selects
_PLANNER_SALT = {m.value: k for k, m in enumerate(CostMode)}
_QUERY_STREAM, _HUMAN_STREAM, _PLAN_STREAM = 0, 1, 2
_REALIZATIONS = {"bernoulli": sample_occupancy, "single": sample_realization}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str = "A"
    queries: int = 50
    repetitions: int = 3
    C: float = 0.2
    occupancy_radius: float = 0.5
    inverse_radius: bool = False
    voxel_edge: float = 0.1
    mu_box: tuple[tuple[float, float, float], tuple[float, float, float]] | None = None
    goals: int | None = None
    master_seed: int = 0
    planners: tuple[str, ...] | None = None
    update_period: float | None = None
    realization: str = "bernoulli"
    body_threshold: float | None = None
    max_query_attempts: int = 100
    robot: dict[str, Any] = field(default_factory=lambda: {"preset": "bench-3dof", "qdot_max": [5.0, 5.0, 5.0]})
    safety: dict[str, Any] = field(default_factory=dict)
    planner: dict[str, Any] = field(default_factory=lambda: {"max_iterations": 1000, "max_time": None})
    execution: dict[str, Any] = field(default_factory=dict)
    weights: dict[str, Any] = field(default_factory=dict)
    scene: dict[str, Any] = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self) -> None:
        if self.kind not in DEFAULT_PLANNERS:
            raise ValueError(f"experiment kind must be one of {sorted(DEFAULT_PLANNERS)}")
        if self.queries < 1 or self.repetitions < 1:
            raise ValueError("queries and repetitions must be >= 1")
        if self.realization not in _REALIZATIONS:
            raise ValueError(f"realization must be one of {sorted(_REALIZATIONS)}")
        if self.body_threshold is not None and not 0.0 < self.body_threshold <= 1.0:
            raise ValueError("body_threshold must be in (0, 1]")
        if self.goals is not None and self.goals < 1:
            raise ValueError("goals must be >= 1")
        for p in self.resolved_planners:
            CostMode(p)
        if BASELINE not in self.resolved_planners:
            raise ValueError("the min-path baseline is required for normalization")

    @property
    def resolved_planners(self) -> tuple[str, ...]:
        return tuple(self.planners) if self.planners else DEFAULT_PLANNERS[self.kind]

    @property
    def n_goals(self) -> int:
        if self.goals is not None:
            return self.goals
        return 20 if self.kind == "C" else 1

    # derived objects
    def model(self) -> RobotModel:
        return robot_from_dict(self.robot)

    def safety_params(self) -> SafetyParams:
        return SafetyParams.from_dict({**self.safety, "C": self.C})

    def planner_settings(self) -> PlannerSettings:
        return PlannerSettings.from_dict(self.planner)

    def execution_settings(self) -> ExecutionSettings:
        return ExecutionSettings.from_dict(self.execution)

    def cost_weights(self) -> CostWeights:
        return CostWeights(**{k: v for k, v in self.weights.items() if v is not None})

    def scene_obj(self) -> Scene:
        return Scene.from_dict(self.scene)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["planners"] = list(self.resolved_planners)
        if self.mu_box is not None:
            d["mu_box"] = [list(self.mu_box[0]), list(self.mu_box[1])]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentSpec":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
        if d.get("planners") is not None:
            d["planners"] = tuple(d["planners"])
        if d.get("mu_box") is not None:
            lo, hi = d["mu_box"]
            d["mu_box"] = (tuple(map(float, lo)), tuple(map(float, hi)))
        if "kind" in d:
            d["kind"] = str(d["kind"]).upper()
        return cls(**d)


def load_spec(path: str | os.PathLike[str]) -> ExperimentSpec:
    """Read an experiment spec from YAML or JSON; a top-level ``experiment`` key is optional."""
    import yaml

    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    return ExperimentSpec.from_dict(raw.get("experiment", raw))


# --- query generation -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QueryInstance:
    index: int
    start: np.ndarray
    goals: np.ndarray
    mu: np.ndarray
    resamples: int
    grid: OccupancyGrid
    body: DeterministicHuman


def _stream(spec: ExperimentSpec, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([spec.master_seed, *keys]))


def run_seed(spec: ExperimentSpec, query: int, rep: int, planner: str) -> int:
    """Per-run planner seed derived from (master, query, repetition, planner)."""
    ss = np.random.SeedSequence([spec.master_seed, _PLAN_STREAM, query, rep, _PLANNER_SALT[planner]])
    return int(ss.generate_state(1, np.uint32)[0])


def reachable_box(model: RobotModel) -> tuple[np.ndarray, np.ndarray]:
    r = model.reach
    return model.base - r, model.base + r


def _mu_box(spec: ExperimentSpec, model: RobotModel) -> tuple[np.ndarray, np.ndarray]:
    if spec.mu_box is not None:
        return np.asarray(spec.mu_box[0], float), np.asarray(spec.mu_box[1], float)
    if spec.robot.get("preset") == "bench-3dof":
        # the arm's reachable box, floor at the base plane
        h, a, b = spec.robot.get("link_lengths", (0.5, 0.5, 0.5))
        return np.array([-(a + b), -(a + b), 0.0]), np.array([a + b, a + b, h + a + b])
    return reachable_box(model)


def make_query(spec: ExperimentSpec, index: int, model: RobotModel, scene: Scene, safety: SafetyParams) -> QueryInstance:
    """Sample start, goals and human; resample if the human body is near the start or a goal."""
    rng = _stream(spec, _QUERY_STREAM, index)
    lo, hi = _mu_box(spec, model)

    def free_config() -> np.ndarray:
        for _ in range(spec.max_query_attempts):
            q = rng.uniform(model.q_min, model.q_max)
            if configuration_free(scene, model, q):
                return q
        raise RuntimeError("could not sample a collision-free configuration")

    for attempt in range(spec.max_query_attempts):
        start = free_config()
        goals = np.stack([free_config() for _ in range(spec.n_goals)])
        mu = rng.uniform(lo, hi)
        grid = _grid(spec, model, mu)
        body = _body(spec, grid, mu)
        pts = forward_points(model, np.vstack([start[None], goals]))
        gap = np.linalg.norm(pts[:, :, None, :] - body.points[None, None, :, :], axis=-1).min(axis=(1, 2))
        clear = gap > safety.C + spec.voxel_edge
        # a human inside the protective margin at the start, or at every goal, makes the query
        # infeasible for all planners; goals near the human stay in a multi-goal set
        if clear[0] and clear[1:].any():
            return QueryInstance(index, start, goals, mu, attempt, grid, body)
    raise RuntimeError(f"query {index}: no feasible human placement")


def _grid(spec: ExperimentSpec, model: RobotModel, mu: np.ndarray) -> OccupancyGrid:
    lo, hi = reachable_box(model)
    base = workspace_grid(lo, hi, spec.voxel_edge)
    return radial_occupancy(base, mu, spec.occupancy_radius, spec.inverse_radius)


def _body(spec: ExperimentSpec, grid: OccupancyGrid, mu: np.ndarray) -> DeterministicHuman:
    if spec.body_threshold is None:
        return DeterministicHuman(mu[None, :])
    core = grid.pi >= spec.body_threshold
    if not core.any():
        return DeterministicHuman(mu[None, :])
    return DeterministicHuman(grid.centers[core])


def _timeline(spec: ExperimentSpec, q: QueryInstance, rep: int, grid: OccupancyGrid, t_nom: float) -> HumanTimeline:
    static = q.body
    if spec.kind != "B":
        return HumanTimeline.static(static)
    rng = _stream(spec, _HUMAN_STREAM, q.index, rep)
    if spec.update_period is None:
        stamps = [0.5 * t_nom] if t_nom > 0 else []
    else:
        horizon = 100.0 * t_nom + 60.0
        n = int(horizon // spec.update_period)
        stamps = [spec.update_period * (k + 1) for k in range(n)]
    draw = _REALIZATIONS[spec.realization]
    frames = [(0.0, static)]
    for t in stamps:
        if t > 0:
            frames.append((t, draw(grid, rng)))
    return HumanTimeline(tuple(frames))


# --- running -----------------------------------------------------------------------


def _planning_human(mode: str, q: QueryInstance, grid: OccupancyGrid):
    if mode == CostMode.MIN_PATH.value:
        return None
    if mode == CostMode.HAMP_PROBABILISTIC.value:
        return grid
    return q.body


def _recheck(mode: str, result: PlanResult, model, safety, human, weights) -> float:
    """Recompute the cost of the returned path from scratch; returns the absolute gap."""
    if mode == CostMode.MIN_PATH.value:
        again = path_length(result.path.waypoints)
    elif mode == CostMode.HAMP_APPROXIMATED.value:
        again = multi_goal_cost(result.path, Costmap(model, safety, human), weights)
    else:
        again = path_cost(result.path, Costmap(model, safety, human), weights)
    return abs(again - result.cost)


def _monotone(history: Sequence[tuple[int, float]]) -> bool:
    costs = [c for _, c in history]
    return all(b <= a for a, b in zip(costs, costs[1:]))


def _clean(x: float | None) -> float | None:
    if x is None or not math.isfinite(x):
        return None
    return float(x)


def run_query(spec: ExperimentSpec, index: int) -> list[dict[str, Any]]:
    """All repetitions and planners for one query, as raw records."""
    model = spec.model()
    safety = spec.safety_params()
    scene = spec.scene_obj()
    settings = spec.planner_settings()
    exec_settings = spec.execution_settings()
    weights = spec.cost_weights()
    q = make_query(spec, index, model, scene, safety)
    grid = q.grid
    records = []
    for rep in range(spec.repetitions):
        for mode in spec.resolved_planners:
            seed = run_seed(spec, index, rep, mode)
            human = _planning_human(mode, q, grid)
            query = PlanningQuery(q.start, q.goals, mode, seed)
            result = plan(query, scene, model, human, weights, safety, settings)
            rec: dict[str, Any] = {
                "schema": RECORD_SCHEMA,
                "experiment": spec.kind,
                "query": index,
                "rep": rep,
                "planner": mode,
                "seed": seed,
                "mu": [float(v) for v in q.mu],
                "mu_resamples": q.resamples,
                "goals": int(len(q.goals)),
                "plan_success": result.success,
                "iterations": result.iterations,
                "lambda_evals": result.lambda_evaluations,
                "history_monotone": _monotone(result.history),
                "history_len": len(result.history),
            }
            if not result.success:
                rec.update(
                    success=False, outcome="plan-failure", goal_index=None, planned_cost=None, cost_gap=None,
                    path_length=None, waypoints=None, t_nom=None, t_exec=None, delay=None,
                    mean_override=None, min_distance=None,
                )
                records.append(rec)
                continue
            t_nom = result.path.nominal_time(model)
            timeline = _timeline(spec, q, rep, grid, t_nom)
            _, metrics = execute(result.path, model, safety, timeline, exec_settings, record=False)
            rec.update(
                success=metrics.success,
                outcome=metrics.outcome,
                goal_index=result.goal_index,
                planned_cost=float(result.cost),
                cost_gap=float(_recheck(mode, result, model, safety, human, weights)),
                path_length=float(result.path.length()),
                waypoints=len(result.path.waypoints),
                t_nom=float(t_nom),
                t_exec=_clean(metrics.t_exec) if metrics.success else None,
                delay=_clean(metrics.dilation) if metrics.success else None,
                mean_override=_clean(metrics.mean_override),
                min_distance=_clean(metrics.min_distance),
            )
            records.append(rec)
    return records


def run_experiment(spec: ExperimentSpec) -> tuple["AggregateReport", list[dict[str, Any]]]:
    indices = list(range(spec.queries))
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            chunks = list(pool.map(run_query, [spec] * len(indices), indices))
    else:
        chunks = [run_query(spec, i) for i in indices]
    records = sorted((r for c in chunks for r in c), key=_record_key)
    return aggregate(records, spec), records


def _record_key(r: dict[str, Any]) -> tuple:
    return (r["query"], r["rep"], _PLANNER_SALT[r["planner"]])


# --- records ------------------------------------------------------------------------


def dumps_record(rec: dict[str, Any]) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_records(records: Iterable[dict[str, Any]], path: str | os.PathLike[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(dumps_record(r) + "\n")


def read_records(path: str | os.PathLike[str]) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def plot_rows(records: Iterable[dict[str, Any]]) -> list[tuple[str, int, int, float, float, float | None, bool]]:
    """(planner, query, rep, path length, nominal time, actual time, success) for planned runs."""
    return [
        (r["planner"], r["query"], r["rep"], r["path_length"], r["t_nom"], r["t_exec"], r["success"])
        for r in records
        if r["plan_success"]
    ]


# --- aggregation ----------------------------------------------------------------------

METRICS = ("path_length", "t_exec", "delay")


def normalize(
    runs: Sequence[dict[str, Any]], baseline: Sequence[dict[str, Any]], metrics: Sequence[str] = METRICS
) -> list[dict[str, float]] | None:
    """Divide each successful run's metrics by the baseline's per-metric median.

    Only successful runs count on either side. Returns None when the baseline
    has no successful run.
    """
    base_ok = [b for b in baseline if b["success"]]
    if not base_ok:
        return None
    medians = {m: statistics.median(b[m] for b in base_ok) for m in metrics}
    out = []
    for r in runs:
        if not r["success"]:
            continue
        out.append({m: r[m] / medians[m] for m in metrics if medians[m] > 0})
    return out


def _stats(values: Sequence[float]) -> dict[str, float | None]:
    if not values:
        return {"mean": None, "median": None, "std": None, "n": 0}
    return {
        "mean": float(statistics.fmean(values)),
        "median": float(statistics.median(values)),
        "std": float(statistics.pstdev(values)) if len(values) > 1 else 0.0,
        "n": len(values),
    }


@dataclass
class AggregateReport:
    experiment: str
    planners: list[str]
    success_rate: dict[str, float]
    normalized: dict[str, dict[str, dict[str, float | None]]]
    lambda_evals: dict[str, dict[str, float | None]]
    excluded_queries: list[int]
    queries: int
    runs_per_planner: dict[str, int]
    per_query_lambda_evals: dict[str, list[int]]
    per_query_lambda_evals_min: dict[str, list[int]]
    goals: int
    all_monotone: bool
    max_cost_gap: float

    def to_dict(self) -> dict[str, Any]:
        return {"schema": REPORT_SCHEMA, **asdict(self)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False)

    def table(self) -> str:
        head = f"{'planner':<20}{'success':>9}{'len':>8}{'t_exec':>8}{'delay':>8}{'lambda':>12}"
        lines = [f"Experiment {self.experiment}: {self.queries} queries, {len(self.excluded_queries)} excluded", head]
        for p in self.planners:
            n = self.normalized[p]

            def fmt(m: str) -> str:
                v = n[m]["mean"]
                return f"{v:8.3f}" if v is not None else f"{'-':>8}"

            lam = self.lambda_evals[p]["mean"] or 0.0
            lines.append(f"{p:<20}{self.success_rate[p]:9.3f}{fmt('path_length')}{fmt('t_exec')}{fmt('delay')}{lam:12.0f}")
        return "\n".join(lines)


def aggregate(records: Sequence[dict[str, Any]], spec: ExperimentSpec | None = None) -> AggregateReport:
    """Deterministic fold over records sorted by (query, rep, planner)."""
    records = sorted(records, key=_record_key)
    planners = list(spec.resolved_planners) if spec else sorted({r["planner"] for r in records}, key=_PLANNER_SALT.get)
    kind = spec.kind if spec else (records[0]["experiment"] if records else "?")
    by_query: dict[int, dict[str, list[dict[str, Any]]]] = {}
    for r in records:
        by_query.setdefault(r["query"], {}).setdefault(r["planner"], []).append(r)
    normalized: dict[str, dict[str, list[float]]] = {p: {m: [] for m in METRICS} for p in planners}
    excluded = []
    per_query_lambda: dict[str, list[int]] = {p: [] for p in planners}
    per_query_lambda_min: dict[str, list[int]] = {p: [] for p in planners}
    for qi in sorted(by_query):
        group = by_query[qi]
        for p in planners:
            evals = [r["lambda_evals"] for r in group.get(p, [])]
            per_query_lambda[p].append(int(max(evals, default=0)))
            per_query_lambda_min[p].append(int(min(evals, default=0)))
        base = group.get(BASELINE, [])
        if normalize(base, base) is None:
            excluded.append(qi)
            continue
        for p in planners:
            for row in normalize(group.get(p, []), base) or []:
                for m, v in row.items():
                    normalized[p][m].append(v)
    success, runs, lam = {}, {}, {}
    for p in planners:
        mine = [r for r in records if r["planner"] == p]
        runs[p] = len(mine)
        success[p] = sum(r["success"] for r in mine) / len(mine) if mine else 0.0
        lam[p] = _stats([float(r["lambda_evals"]) for r in mine])
    gaps = [r["cost_gap"] for r in records if r.get("cost_gap") is not None]
    return AggregateReport(
        experiment=kind,
        planners=planners,
        success_rate=success,
        normalized={p: {m: _stats(v) for m, v in normalized[p].items()} for p in planners},
        lambda_evals=lam,
        excluded_queries=excluded,
        queries=len(by_query),
        runs_per_planner=runs,
        per_query_lambda_evals=per_query_lambda,
        per_query_lambda_evals_min=per_query_lambda_min,
        goals=max((r["goals"] for r in records), default=0),
        all_monotone=all(r["history_monotone"] for r in records),
        max_cost_gap=float(max(gaps, default=0.0)),
    )


# --- acceptance thresholds ---------------------------------------------------------------

PROBE_DIRECTIONS_3DOF = 26


def check_report(report: AggregateReport, n_probe: int = PROBE_DIRECTIONS_3DOF) -> list[str]:
    """Human-readable list of violated directional thresholds (empty when all hold)."""
    bad = []

    def mean(p: str, m: str) -> float:
        v = report.normalized.get(p, {}).get(m, {}).get("mean")
        return math.nan if v is None else v

    sr = report.success_rate
    if not report.all_monotone:
        bad.append("incumbent cost increased on some query")
    if report.max_cost_gap > 1e-9:
        bad.append(f"reported cost differs from re-evaluation by {report.max_cost_gap:.3g}")
    kind = report.experiment
    if kind == "A":
        if not mean("hamp", "t_exec") <= 0.95:
            bad.append(f"HAMP normalized execution time {mean('hamp', 't_exec'):.3f} > 0.95")
        if not mean("hamp", "path_length") >= 1.05:
            bad.append(f"HAMP normalized path length {mean('hamp', 'path_length'):.3f} < 1.05")
        if not sr.get("hamp", 0.0) >= sr.get(BASELINE, 0.0):
            bad.append("HAMP success rate below MIN-PATH")
    elif kind == "B":
        prob, det, base = sr.get("hamp-probabilistic", 0.0), sr.get("hamp", 0.0), sr.get(BASELINE, 0.0)
        if not prob >= det:
            bad.append(f"HAMP-Probabilistic success {prob:.3f} below HAMP {det:.3f}")
        if not (det >= base and prob >= base):
            bad.append("a human-aware planner succeeds less often than MIN-PATH")
        if not mean("hamp-probabilistic", "t_exec") < 1.0:
            bad.append(f"HAMP-Probabilistic normalized execution time {mean('hamp-probabilistic', 't_exec'):.3f} >= 1.0")
    elif kind == "C":
        full, approx = mean("hamp", "t_exec"), mean("hamp-approximated", "t_exec")
        if not abs(full - approx) <= 0.15:
            bad.append(f"approximated vs full HAMP execution time differ by {abs(full - approx):.3f}")
        if not (full <= 0.8 and approx <= 0.8):
            bad.append(f"normalized execution times {full:.3f} / {approx:.3f} exceed 0.8")
        cap = report.goals * n_probe
        a = report.per_query_lambda_evals.get("hamp-approximated", [])
        f = report.per_query_lambda_evals_min.get("hamp", [])
        if any(x > cap for x in a):
            bad.append(f"approximated lambda evaluations exceed {cap} on some query")
        if any(x >= y for x, y in zip(a, f)):
            bad.append("approximated lambda evaluations not below full HAMP on every query")
    return bad


def with_overrides(spec: ExperimentSpec, **kw: Any) -> ExperimentSpec:
    return replace(spec, **{k: v for k, v in kw.items() if v is not None})
