"""Time-dilation costmap.

The dilation factor of a configuration moving along a joint-space direction
is the expected ratio between the actual and the nominal traversal time once
the separation-monitoring speed cap kicks in. It is computed against either a
set of human points or a voxel occupancy grid; for a grid the expectation is
taken over independent voxel occupancies, the realized factor being the worst
occupied voxel.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .human import DeterministicHuman, HumanState, OccupancyGrid
from .kinematics import RobotModel, forward_points_and_jacobians, segment_min_time
from .safety import SafetyParams, max_allowed_speed, protective_distance

__all__ = [
    "DEFAULT_STOP_PENALTY",
    "CostWeights",
    "LambdaQuery",
    "EvalCounter",
    "Costmap",
    "relative_speed_toward",
    "lambda_deterministic",
    "lambda_probabilistic",
    "expected_max_dilation",
    "outcome_probabilities",
    "probe_directions",
    "segment_costs",
    "path_cost",
    "path_length",
    "nominal_time",
    "multi_goal_cost",
]

DEFAULT_STOP_PENALTY = 1e3


@dataclass(frozen=True)
class CostWeights:
    """``nu`` weighs the path-length regularizer, ``b`` the terminal dilation.

    ``b`` is a joint-space length: the default equals one planner steer step,
    so a goal dilation of ``lam`` costs like a final approach step stretched
    ``lam`` times.
    """

    nu: float = 1e-3
    b: float = 0.3

    def __post_init__(self) -> None:
        if self.nu < 0 or self.b < 0:
            raise ValueError("cost weights must be >= 0")


@dataclass(frozen=True, eq=False)
class LambdaQuery:
    """A configuration together with the unit joint-space direction it moves along."""

    q: np.ndarray
    direction: np.ndarray
    model: RobotModel
    safety: SafetyParams

    def __post_init__(self) -> None:
        u = np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(u)
        if not np.isclose(norm, 1.0, atol=1e-9):
            raise ValueError("direction must be a unit vector")
        object.__setattr__(self, "q", self.model.check_configuration(self.q))
        object.__setattr__(self, "direction", u)

    @classmethod
    def for_segment(cls, model: RobotModel, safety: SafetyParams, qa: Any, qb: Any) -> "LambdaQuery":
        qa = np.asarray(qa, dtype=float)
        qb = np.asarray(qb, dtype=float)
        delta = qb - qa
        norm = np.linalg.norm(delta)
        if norm == 0.0:
            raise ValueError("degenerate segment: endpoints coincide")
        return cls(0.5 * (qa + qb), delta / norm, model, safety)

    @property
    def qdot(self) -> np.ndarray:
        return _scaled_velocity(self.model, self.direction[None, :])[0]


def _scaled_velocity(model: RobotModel, u: np.ndarray) -> np.ndarray:
    """``K u`` with ``K = min_k |qdot_max_k / u_k|`` over nonzero components."""
    ratio = np.abs(u) / model.qdot_max
    return u / ratio.max(axis=-1, keepdims=True)


_COINCIDENT = 1e-18  # squared distance (m^2) below which a pair counts as touching


def _separation_and_closing(pts, jac, qdot, hum, hum_vel, reach=None):
    """Per human point separation, worst closing speed, and contact flag.

    Shapes: pts (B, n, 3), jac (B, n, 3, d), qdot (B, d), hum (m, 3); all
    outputs are (B, m). The distance and the projected relative velocity are
    expanded into matrix products so no (B, n, m, 3) array is formed. Human
    points farther than ``reach`` from every robot point in the batch get a
    closing speed of ``-inf`` without being evaluated.
    """
    b, n, _ = pts.shape
    rdot = np.einsum("bnkd,bd->bnk", jac, qdot)
    dist = (pts.reshape(-1, 3) @ hum.T).reshape(b, n, -1)
    dist *= -2.0
    dist += np.einsum("mk,mk->m", hum, hum)
    dist += np.einsum("bnk,bnk->bn", pts, pts)[:, :, None]
    sep2 = dist.min(axis=1)
    touching = sep2 <= _COINCIDENT
    sep = np.sqrt(np.where(touching, 0.0, sep2))
    vj = np.full(sep.shape, -np.inf)
    cols = slice(None)
    if reach is not None:
        cols = np.flatnonzero(sep.min(axis=0) <= reach)
        if cols.size == 0:
            return sep, vj, touching
        dist = dist[:, :, cols]
        hum = hum[cols]
        hum_vel = None if hum_vel is None else hum_vel[cols]
    np.maximum(dist, _COINCIDENT, out=dist)
    np.sqrt(dist, out=dist)
    rel = (rdot.reshape(-1, 3) @ hum.T).reshape(b, n, -1)
    rel -= np.einsum("bnk,bnk->bn", pts, rdot)[:, :, None]
    if hum_vel is not None:
        rel += (pts.reshape(-1, 3) @ hum_vel.T).reshape(b, n, -1)
        rel -= np.einsum("mk,mk->m", hum, hum_vel)
    rel /= dist
    vj[:, cols] = rel.max(axis=1)
    return sep, vj, touching


def _point_dilations(safety: SafetyParams, sep, vj, touching, stop_penalty: float) -> np.ndarray:
    """Per human point dilation ``(B, m)`` from separation and closing speed."""
    vmax = max_allowed_speed(safety, sep)
    lam = np.ones_like(sep)
    slowed = (vj > vmax) & (vmax > 0.0)
    lam[slowed] = np.minimum(vj[slowed] / vmax[slowed], stop_penalty)
    lam[(vj > 0.0) & (vmax <= 0.0)] = stop_penalty
    lam[touching] = stop_penalty
    return lam


def expected_max_dilation(lams: Any, probs: Any) -> float:
    """Expected worst dilation over independently occupied voxels.

    Voxels are visited from the largest dilation down; voxel ``y`` decides the
    outcome when it is occupied and every worse voxel is empty. If nothing is
    occupied the factor is 1. Voxels with a dilation of exactly 1 sit at the
    bottom of the order and fold into that remainder, so they are dropped.
    """
    lam = np.asarray(lams, dtype=float).reshape(-1)
    pi = np.asarray(probs, dtype=float).reshape(-1)
    keep = (lam != 1.0) & (pi > 0.0)
    lam, pi = lam[keep], pi[keep]
    if lam.size == 0:
        return 1.0
    order = np.lexsort((-pi, -lam))
    lam_s, pi_s = lam[order], pi[order]
    survive = np.cumprod(1.0 - pi_s)
    before = np.concatenate(([1.0], survive[:-1]))
    return float(np.sum(lam_s * pi_s * before) + survive[-1])


def outcome_probabilities(lams: Any, probs: Any) -> tuple[np.ndarray, np.ndarray, float]:
    """Sorted dilations, the probability that each one is realized, and P(no occupancy)."""
    lam = np.asarray(lams, dtype=float).reshape(-1)
    pi = np.asarray(probs, dtype=float).reshape(-1)
    order = np.lexsort((-pi, -lam))
    lam_s, pi_s = lam[order], pi[order]
    survive = np.cumprod(1.0 - pi_s)
    before = np.concatenate(([1.0], survive[:-1]))
    return lam_s, pi_s * before, float(survive[-1]) if survive.size else 1.0


def _expected_max_rows(lam: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """Row-wise ``expected_max_dilation`` for ``lam`` of shape (B, m).

    Only entries above 1 matter, so each row is cut down to its ``K`` largest
    entries (``K`` = most such entries in any row); leftovers at exactly 1 get
    probability 0 so they sit at the bottom and change nothing.
    """
    counts = np.count_nonzero(lam > 1.0, axis=1)
    k = int(counts.max()) if lam.size else 0
    if k == 0:
        return np.ones(lam.shape[0])
    if k < lam.shape[1]:
        top = np.argpartition(-lam, k - 1, axis=1)[:, :k]
    else:
        top = np.broadcast_to(np.arange(lam.shape[1]), lam.shape)
    lam_k = np.take_along_axis(lam, top, axis=1)
    pi_k = np.where(lam_k > 1.0, pi[top], 0.0)
    order = np.lexsort((-pi_k, -lam_k), axis=-1)
    lam_s = np.take_along_axis(lam_k, order, axis=1)
    pi_s = np.take_along_axis(pi_k, order, axis=1)
    survive = np.cumprod(1.0 - pi_s, axis=1)
    before = np.concatenate((np.ones((lam.shape[0], 1)), survive[:, :-1]), axis=1)
    return np.sum(lam_s * pi_s * before, axis=1) + survive[:, -1]


def probe_directions(dof: int) -> np.ndarray:
    """Unit joint-space directions ``{-1, 0, 1}^dof \\ {0}``, normalized (26 for 3 joints)."""
    dirs = np.array([d for d in itertools.product((-1.0, 0.0, 1.0), repeat=dof) if any(d)])
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


@dataclass
class EvalCounter:
    """Number of (configuration, direction) dilation evaluations."""

    count: int = 0

    def reset(self) -> None:
        self.count = 0


@dataclass(frozen=True, eq=False)
class Costmap:
    """Dilation factor against one immutable human snapshot.

    ``human=None`` means no human: the factor is identically 1.
    """

    model: RobotModel
    safety: SafetyParams
    human: HumanState | None = None
    stop_penalty: float = DEFAULT_STOP_PENALTY
    counter: EvalCounter = field(default_factory=EvalCounter)

    def __post_init__(self) -> None:
        if not self.stop_penalty >= 1.0:
            raise ValueError("stop penalty must be >= 1")
        pts, probs, vel = None, None, None
        if isinstance(self.human, DeterministicHuman):
            pts = self.human.points
            if np.any(self.human.velocities != 0.0):
                vel = self.human.velocities
        elif isinstance(self.human, OccupancyGrid):
            pts, probs = self.human.support()
        elif self.human is not None:
            raise TypeError(f"unsupported human state {type(self.human).__name__}")
        object.__setattr__(self, "_points", pts)
        object.__setattr__(self, "_probs", probs)
        object.__setattr__(self, "_velocities", vel)

    @property
    def probabilistic(self) -> bool:
        return isinstance(self.human, OccupancyGrid)

    def point_dilations(self, q: Any, u: Any) -> np.ndarray:
        """Per human point (or voxel) dilation ``(B, m)`` for configurations ``q`` moving along ``u``."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        u = np.atleast_2d(np.asarray(u, dtype=float))
        pts, jac = forward_points_and_jacobians(self.model, q)
        qdot = _scaled_velocity(self.model, u)
        sep, vj, touching = _separation_and_closing(
            pts, jac, qdot, self._points, self._velocities, self._influence(jac, qdot)
        )
        return _point_dilations(self.safety, sep, vj, touching, self.stop_penalty)

    def _influence(self, jac: np.ndarray, qdot: np.ndarray) -> float | None:
        """Distance beyond which no human point can slow the robot, or None if unbounded."""
        if self.safety.v_max_const is not None:
            return None
        speed = float(np.sqrt(np.max(np.sum(np.einsum("bnkd,bd->bnk", jac, qdot) ** 2, axis=-1))))
        if self._velocities is not None:
            speed += float(np.max(np.linalg.norm(self._velocities, axis=1)))
        return float(protective_distance(self.safety, speed)) * (1.0 + 1e-9) + 1e-12

    def dilation(self, q: Any, u: Any) -> np.ndarray:
        """Dilation factor for a batch of configurations ``(B, d)`` and unit directions ``(B, d)``."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        self.counter.count += q.shape[0]
        if self._points is None or len(self._points) == 0:
            return np.ones(q.shape[0])
        lam = self.point_dilations(q, u)
        if self._probs is None:
            return np.maximum(lam.max(axis=1), 1.0)
        return _expected_max_rows(lam, self._probs)

    def terminal_dilation(self, q: Any) -> float:
        """Worst dilation at ``q`` over the fixed probe directions."""
        dirs = probe_directions(self.model.dof)
        qs = np.repeat(np.atleast_2d(np.asarray(q, dtype=float)), len(dirs), axis=0)
        return float(self.dilation(qs, dirs).max())

    @property
    def n_probe_directions(self) -> int:
        return 3**self.model.dof - 1


def relative_speed_toward(query: LambdaQuery, h: Any, hdot: Any = None) -> float:
    """Largest closing speed between any robot point and human point ``h``.

    Robot points coinciding with ``h`` have no defined direction and are left
    out; if every point coincides the result is ``nan``.
    """
    pts, jac = forward_points_and_jacobians(query.model, query.q)
    diff = np.asarray(h, dtype=float) - pts
    dist = np.linalg.norm(diff, axis=1)
    rel = jac @ query.qdot
    if hdot is not None:
        rel = rel - np.asarray(hdot, dtype=float)
    live = dist > 0.0
    if not np.any(live):
        return float("nan")
    return float(np.max(np.einsum("nk,nk->n", diff[live], rel[live]) / dist[live]))


def lambda_deterministic(
    query: LambdaQuery, human: DeterministicHuman, stop_penalty: float = DEFAULT_STOP_PENALTY
) -> float:
    cmap = Costmap(query.model, query.safety, human, stop_penalty)
    return float(cmap.dilation(query.q, query.direction)[0])


def lambda_probabilistic(
    query: LambdaQuery, grid: OccupancyGrid, stop_penalty: float = DEFAULT_STOP_PENALTY
) -> float:
    cmap = Costmap(query.model, query.safety, grid, stop_penalty)
    return float(cmap.dilation(query.q, query.direction)[0])


def path_length(waypoints: Any) -> float:
    w = np.asarray(waypoints, dtype=float)
    return float(np.linalg.norm(np.diff(w, axis=0), axis=1).sum())


def nominal_time(model: RobotModel, waypoints: Any) -> float:
    w = np.asarray(waypoints, dtype=float)
    return float(np.sum(segment_min_time(model, w[:-1], w[1:])))


def segment_costs(costmap: Costmap, waypoints: Any, nu: float) -> np.ndarray:
    """Per-segment ``t_nom * dilation + nu * length``; zero-length segments cost 0."""
    w = np.asarray(waypoints, dtype=float)
    if w.ndim != 2 or len(w) < 2:
        raise ValueError("a path needs at least two waypoints")
    delta = w[1:] - w[:-1]
    length = np.linalg.norm(delta, axis=1)
    t_nom = segment_min_time(costmap.model, w[:-1], w[1:])
    out = np.zeros(len(delta))
    live = length > 0.0
    if np.any(live):
        mid = 0.5 * (w[:-1][live] + w[1:][live])
        lam = costmap.dilation(mid, delta[live] / length[live, None])
        out[live] = t_nom[live] * lam + nu * length[live]
    return out


def path_cost(path: Any, costmap: Costmap, weights: CostWeights) -> float:
    """Regularized expected execution time of a waypoint path."""
    w = getattr(path, "waypoints", path)
    return float(np.sum(segment_costs(costmap, w, weights.nu)))


def multi_goal_cost(path: Any, costmap: Costmap, weights: CostWeights) -> float:
    """Path length plus ``b`` times the worst-direction dilation at the final waypoint."""
    w = np.asarray(getattr(path, "waypoints", path), dtype=float)
    return path_length(w) + weights.b * costmap.terminal_dilation(w[-1])

