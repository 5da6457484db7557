"""Discrete-time execution of a joint path under speed-and-separation monitoring.

The path is timed with the infinity-norm model (one joint at full speed per
segment). Each control step the override ``s_ovr`` scales how much nominal time
the robot advances; geometry never changes, only timing.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .human import DeterministicHuman, HumanTimeline
from .kinematics import Path, RobotModel, forward_points, forward_points_and_jacobians
from .safety import SafetyParams, max_allowed_speed, speed_override

__all__ = [
    "ExecutionSettings",
    "Trajectory",
    "ExecutionTrace",
    "ExecutionMetrics",
    "parametrize",
    "min_human_distance",
    "override_at",
    "execute",
]

TRACE_COLUMNS = ("t", "progress", "s_ovr", "min_distance")


@dataclass(frozen=True)
class ExecutionSettings:
    dt: float = 0.01
    stop_threshold: float = 0.01
    stop_duration: float = 3.0
    max_duration: float | None = None  # default: generous multiple of the nominal time
    human_speed_from_timeline: bool = False

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.stop_duration <= 0 or not 0 <= self.stop_threshold < 1:
            raise ValueError("bad safety-stop thresholds")

    @classmethod
    def from_dict(cls, d: dict[str, Any] | None) -> "ExecutionSettings":
        return cls(**(d or {}))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Piecewise-constant joint velocity trajectory; times are nominal (no slowdown)."""

    waypoints: np.ndarray
    times: np.ndarray
    velocities: np.ndarray

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def state(self, tau: float) -> tuple[np.ndarray, np.ndarray]:
        """Configuration and commanded velocity at nominal time ``tau``."""
        if tau >= self.duration:
            return self.waypoints[-1].copy(), np.zeros(self.waypoints.shape[1])
        k = int(np.searchsorted(self.times, tau, side="right")) - 1
        k = min(max(k, 0), len(self.velocities) - 1)
        return self.waypoints[k] + self.velocities[k] * (tau - self.times[k]), self.velocities[k]


def parametrize(path: Path | np.ndarray, model: RobotModel) -> Trajectory:
    """Time each segment at its minimum duration; zero-length segments take no time."""
    w = np.asarray(getattr(path, "waypoints", path), dtype=float)
    delta = np.diff(w, axis=0)
    seg_t = np.max(np.abs(delta) / model.qdot_max, axis=1)
    vel = np.zeros_like(delta)
    live = seg_t > 0
    vel[live] = delta[live] / seg_t[live, None]
    keep = np.concatenate(([True], live))
    w, seg_t, vel = w[keep], seg_t[live], vel[live]
    if len(w) == 1:
        w = np.vstack([w, w])
        seg_t, vel = np.zeros(1), np.zeros((1, w.shape[1]))
    return Trajectory(w, np.concatenate(([0.0], np.cumsum(seg_t))), vel)


def min_human_distance(model: RobotModel, q: Any, human: DeterministicHuman | None) -> float:
    if human is None:
        return math.inf
    pts = forward_points(model, q)
    d = np.linalg.norm(human.points[None, :, :] - pts[:, None, :], axis=-1)
    return float(d.min())


def override_at(
    model: RobotModel,
    safety: SafetyParams,
    q: np.ndarray,
    qdot: np.ndarray,
    human: DeterministicHuman | None,
    v_h: float | None = None,
) -> tuple[float, float]:
    """Speed override and min distance for commanded velocity ``qdot`` at ``q``.

    The closing speed is the worst over every robot/human point pair; the
    speed cap uses the global minimum separation.
    """
    if human is None:
        return 1.0, math.inf
    pts, jac = forward_points_and_jacobians(model, q)
    rdot = jac @ qdot
    diff = human.points[None, :, :] - pts[:, None, :]
    dist = np.linalg.norm(diff, axis=-1)
    sep = float(dist.min())
    if sep == 0.0:
        return 0.0, 0.0
    rel = rdot[:, None, :] - human.velocities[None, :, :]
    v_rh = float(np.max(np.einsum("nmk,nmk->nm", diff, rel) / dist))
    v_max = float(max_allowed_speed(safety, sep, v_h))
    return speed_override(v_max, v_rh), sep


@dataclass
class ExecutionTrace:
    """Per-step records sampled at ``t = k * dt`` before each step is taken."""

    dt: float
    t: list[float] = field(default_factory=list)
    q: list[np.ndarray] = field(default_factory=list)
    progress: list[float] = field(default_factory=list)
    s_ovr: list[float] = field(default_factory=list)
    min_distance: list[float] = field(default_factory=list)
    outcome: str = "completed"

    def rows(self) -> list[dict[str, float]]:
        out = []
        for k in range(len(self.t)):
            row = {"t": self.t[k], "progress": self.progress[k], "s_ovr": self.s_ovr[k], "min_distance": self.min_distance[k]}
            row.update({f"q{i}": float(v) for i, v in enumerate(self.q[k])})
            out.append(row)
        return out

    def to_csv(self, path: str | os.PathLike[str]) -> None:
        rows = self.rows()
        dof = len(self.q[0]) if self.q else 0
        cols = list(TRACE_COLUMNS) + [f"q{i}" for i in range(dof)]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            writer.writerows(rows)


@dataclass(frozen=True)
class ExecutionMetrics:
    t_nom: float
    t_exec: float
    dilation: float
    mean_override: float
    min_distance: float
    success: bool
    outcome: str

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def _human_speed(prev: DeterministicHuman | None, cur: DeterministicHuman | None, dt: float) -> float:
    if prev is None or cur is None or prev is cur or prev.points.shape != cur.points.shape:
        return 0.0
    return float(np.max(np.linalg.norm(cur.points - prev.points, axis=1)) / dt)


def execute(
    path: Path | Trajectory,
    model: RobotModel,
    safety: SafetyParams,
    timeline: HumanTimeline | DeterministicHuman | None = None,
    settings: ExecutionSettings = ExecutionSettings(),
    record: bool = True,
) -> tuple[ExecutionTrace, ExecutionMetrics]:
    """Simulate execution until the path completes or a safety stop fires."""
    traj = path if isinstance(path, Trajectory) else parametrize(path, model)
    if timeline is None or isinstance(timeline, DeterministicHuman):
        timeline = HumanTimeline.static(timeline)
    dt = settings.dt
    t_nom = traj.duration
    limit = settings.max_duration
    if limit is None:
        limit = 100.0 * t_nom + 10.0 * settings.stop_duration
    trace = ExecutionTrace(dt)
    tau = 0.0
    t = 0.0
    k = 0
    stalled = 0.0
    weighted = 0.0
    closest = math.inf
    prev = None
    t_exec = None
    outcome = "completed"
    while True:
        t = k * dt
        human = timeline.at(t)
        v_h = _human_speed(prev, human, dt) if settings.human_speed_from_timeline else safety.v_h
        prev = human
        q, qdot = traj.state(tau)
        ovr, sep = override_at(model, safety, q, qdot, human, v_h)
        closest = min(closest, sep)
        if record:
            trace.t.append(t)
            trace.q.append(q)
            trace.progress.append(tau)
            trace.s_ovr.append(ovr)
            trace.min_distance.append(sep)
        if tau >= t_nom:
            t_exec = t
            break
        remaining = t_nom - tau
        if ovr > 0 and ovr * dt >= remaining:
            frac = remaining / ovr
            weighted += ovr * frac
            t_exec = t + frac
            tau = t_nom
            q_end, _ = traj.state(tau)
            closest = min(closest, min_human_distance(model, q_end, timeline.at(t_exec)))
            break
        tau += ovr * dt
        weighted += ovr * dt
        stalled = stalled + dt if ovr < settings.stop_threshold else 0.0
        k += 1
        if stalled >= settings.stop_duration - 1e-12:
            outcome = "safety-stop"
            break
        if k * dt > limit:
            outcome = "timeout"
            break
    if t_exec is None:
        t_exec = k * dt
    trace.outcome = outcome
    success = outcome == "completed"
    mean_ovr = weighted / t_exec if t_exec > 0 else 1.0
    dilation = t_exec / t_nom if t_nom > 0 else 1.0
    return trace, ExecutionMetrics(t_nom, t_exec, dilation, mean_ovr, closest, success, outcome)
