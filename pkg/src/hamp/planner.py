"""Informed RRT* over joint space with pluggable path costs.

One tree is grown from the start; every goal is a connection target and the
incumbent is the cheapest goal reached so far. Costs are expressed through a
small protocol (see :class:`LengthCost`, :class:`TimeCost`,
:class:`TerminalDilationCost`) that provides batched edge costs, an admissible
lower bound, and an optional terminal cost per goal.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .costmap import Costmap, CostWeights, nominal_time, path_length, segment_costs
from .human import DeterministicHuman, HumanState, OccupancyGrid
from .kinematics import Path, RobotModel, forward_points
from .safety import SafetyParams

__all__ = [
    "CostMode",
    "Sphere",
    "Box",
    "Scene",
    "PlannerSettings",
    "PlanningQuery",
    "PlanResult",
    "SearchTree",
    "LengthCost",
    "TimeCost",
    "TerminalDilationCost",
    "make_cost",
    "discretize",
    "collision_free_segment",
    "configuration_free",
    "informed_sample",
    "time_informed_sample",
    "plan",
]


class CostMode(str, enum.Enum):
    MIN_PATH = "min-path"
    HAMP = "hamp"
    HAMP_PROBABILISTIC = "hamp-probabilistic"
    HAMP_APPROXIMATED = "hamp-approximated"


# --- scene and collision checking ----------------------------------------------


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0 or len(self.center) != 3:
            raise ValueError("sphere needs a 3D center and a positive radius")


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self) -> None:
        if len(self.lo) != 3 or len(self.hi) != 3 or not all(a < b for a, b in zip(self.lo, self.hi)):
            raise ValueError("box needs lo < hi on every axis")


@dataclass(frozen=True)
class Scene:
    """Static obstacles: spheres and axis-aligned boxes."""

    spheres: tuple[Sphere, ...] = ()
    boxes: tuple[Box, ...] = ()

    @property
    def empty(self) -> bool:
        return not self.spheres and not self.boxes

    def with_spheres(self, extra: Sequence[Sphere]) -> "Scene":
        return Scene(self.spheres + tuple(extra), self.boxes)

    @classmethod
    def from_dict(cls, d: dict[str, Any] | None) -> "Scene":
        d = d or {}
        spheres = tuple(Sphere(tuple(s["center"]), float(s["radius"])) for s in d.get("spheres", []))
        boxes = tuple(Box(tuple(b["lo"]), tuple(b["hi"])) for b in d.get("boxes", []))
        return cls(spheres, boxes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "spheres": [{"center": list(s.center), "radius": s.radius} for s in self.spheres],
            "boxes": [{"lo": list(b.lo), "hi": list(b.hi)} for b in self.boxes],
        }


def _skeleton(model: RobotModel, qs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Link segments between consecutive points of interest: starts, ends of shape (B, n-1, 3)."""
    pts = forward_points(model, qs)
    if model.n_points == 1:
        base = np.broadcast_to(model.base, pts.shape)
        return base, pts
    return pts[:, :-1], pts[:, 1:]


def _hits(scene: Scene, a: np.ndarray, b: np.ndarray, inflate: float) -> np.ndarray:
    """Collision flag per configuration for link segments ``a -> b`` of shape (B, L, 3)."""
    hit = np.zeros(a.shape[0], dtype=bool)
    d = b - a
    if scene.spheres:
        centers = np.array([s.center for s in scene.spheres])
        radii = np.array([s.radius for s in scene.spheres]) + inflate
        rel = centers[None, None] - a[:, :, None]  # (B, L, S, 3)
        dd = np.einsum("blk,blk->bl", d, d)[..., None]
        t = np.clip(np.einsum("blsk,blk->bls", rel, d) / np.where(dd > 0, dd, 1.0), 0.0, 1.0)
        closest = a[:, :, None] + t[..., None] * d[:, :, None]
        dist2 = np.sum((centers[None, None] - closest) ** 2, axis=-1)
        hit |= np.any(dist2 <= radii**2, axis=(1, 2))
    if scene.boxes:
        lo = np.array([bx.lo for bx in scene.boxes]) - inflate
        hi = np.array([bx.hi for bx in scene.boxes]) + inflate
        # slab test on the segment parameter interval [0, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d[:, :, None, :]
            t1 = (lo[None, None] - a[:, :, None]) * inv
            t2 = (hi[None, None] - a[:, :, None]) * inv
        parallel = d[:, :, None, :] == 0.0
        inside = (a[:, :, None] >= lo[None, None]) & (a[:, :, None] <= hi[None, None])
        tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
        tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
        enter = np.maximum(tmin.max(axis=-1), 0.0)
        leave = np.minimum(tmax.min(axis=-1), 1.0)
        hit |= np.any(enter <= leave, axis=(1, 2))
    return hit


def configuration_free(scene: Scene, model: RobotModel, q: Any) -> bool:
    if scene.empty:
        return True
    qs = np.atleast_2d(np.asarray(q, dtype=float))
    a, b = _skeleton(model, qs)
    return not bool(_hits(scene, a, b, model.link_radius)[0])


def collision_free_segment(
    scene: Scene, model: RobotModel, qa: Any, qb: Any, resolution: float = 0.02
) -> bool:
    """True when every configuration sampled every ``resolution`` rad along ``qa -> qb`` is free."""
    if scene.empty:
        return True
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    n = max(int(math.ceil(np.linalg.norm(qb - qa) / resolution)), 1)
    ts = np.linspace(0.0, 1.0, n + 1)[:, None]
    qs = qa + ts * (qb - qa)
    a, b = _skeleton(model, qs)
    return not bool(np.any(_hits(scene, a, b, model.link_radius)))


# --- path discretization -------------------------------------------------------


def _pieces(length: np.ndarray, max_step: float) -> np.ndarray:
    return np.maximum(np.ceil(length / max_step - 1e-12), 1).astype(int)


def _subdivide(qa: np.ndarray, qb: np.ndarray, pieces: int) -> np.ndarray:
    ts = np.arange(pieces + 1, dtype=float)[:, None] / pieces
    pts = qa + ts * (qb - qa)
    pts[-1] = qb
    return pts


def _subdivide_many(qa: np.ndarray, qb: np.ndarray, pieces: np.ndarray):
    """Sub-segment endpoints of many edges at once, bit-identical to ``_subdivide``."""
    owner = np.repeat(np.arange(len(qa)), pieces)
    first = np.concatenate(([0], np.cumsum(pieces)[:-1]))
    k = np.arange(owner.size) - first[owner]
    n = pieces[owner].astype(float)
    a, d = qa[owner], (qb - qa)[owner]
    starts = a + (k / n)[:, None] * d
    ends = a + ((k + 1) / n)[:, None] * d
    last = k + 1 == pieces[owner]
    ends[last] = qb[owner[last]]
    return starts, ends, owner


def discretize(path: Any, max_step: float) -> Path:
    """Insert collinear waypoints so no segment is longer than ``max_step``."""
    if not max_step > 0:
        raise ValueError("max_step must be > 0")
    w = np.asarray(getattr(path, "waypoints", path), dtype=float)
    lengths = np.linalg.norm(np.diff(w, axis=0), axis=1)
    pieces = _pieces(lengths, max_step)
    out = [w[:1]]
    for k, p in enumerate(pieces):
        out.append(_subdivide(w[k], w[k + 1], int(p))[1:])
    return Path(np.concatenate(out))


# --- costs ----------------------------------------------------------------------


class LengthCost:
    """Joint-space path length."""

    lb_factor = 1.0

    def __init__(self) -> None:
        self.costmap: Costmap | None = None

    def edge_costs(self, qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
        return np.linalg.norm(qb - qa, axis=-1)

    def edge_lower_bounds(self, qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
        return np.linalg.norm(qb - qa, axis=-1)

    def terminal(self, goal: np.ndarray, index: int) -> float:
        return 0.0

    def terminal_lower_bound(self, index: int) -> float:
        return 0.0

    def path_cost(self, waypoints: np.ndarray) -> float:
        return path_length(waypoints)


class TimeCost:
    """Regularized expected execution time, dilation sampled every ``resolution`` rad."""

    def __init__(self, costmap: Costmap, weights: CostWeights, resolution: float) -> None:
        self.costmap = costmap
        self.nu = weights.nu
        self.resolution = resolution
        model = costmap.model
        self.lb_factor = 1.0 / (math.sqrt(model.dof) * float(model.qdot_max.max())) + self.nu

    def edge_costs(self, qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
        qa = np.atleast_2d(qa)
        qb = np.atleast_2d(qb)
        pieces = _pieces(np.linalg.norm(qb - qa, axis=1), self.resolution)
        starts, ends, owner = _subdivide_many(qa, qb, pieces)
        delta = ends - starts
        length = np.linalg.norm(delta, axis=1)
        t_nom = np.max(np.abs(delta) / self.costmap.model.qdot_max, axis=1)
        seg = np.zeros(len(delta))
        live = length > 0.0
        if np.any(live):
            mid = 0.5 * (starts[live] + ends[live])
            lam = self.costmap.dilation(mid, delta[live] / length[live, None])
            seg[live] = t_nom[live] * lam + self.nu * length[live]
        return np.bincount(owner, weights=seg, minlength=len(qa))

    def edge_lower_bounds(self, qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
        delta = qb - qa
        return np.max(np.abs(delta) / self.costmap.model.qdot_max, axis=-1) + self.nu * np.linalg.norm(delta, axis=-1)

    def terminal(self, goal: np.ndarray, index: int) -> float:
        return 0.0

    def terminal_lower_bound(self, index: int) -> float:
        return 0.0

    def path_cost(self, waypoints: np.ndarray) -> float:
        return float(np.sum(segment_costs(self.costmap, waypoints, self.nu)))


class TerminalDilationCost(LengthCost):
    """Path length plus ``b`` times the worst-direction dilation at the goal, cached per goal."""

    def __init__(self, costmap: Costmap, weights: CostWeights) -> None:
        super().__init__()
        self.costmap = costmap
        self.b = weights.b
        self._cache: dict[int, float] = {}

    def terminal(self, goal: np.ndarray, index: int) -> float:
        if index not in self._cache:
            self._cache[index] = self.b * self.costmap.terminal_dilation(goal)
        return self._cache[index]

    def terminal_lower_bound(self, index: int) -> float:
        return self._cache.get(index, self.b)

    def path_cost(self, waypoints: np.ndarray) -> float:
        w = np.asarray(waypoints, dtype=float)
        return path_length(w) + self.b * self.costmap.terminal_dilation(w[-1])


def make_cost(
    mode: CostMode,
    model: RobotModel,
    safety: SafetyParams,
    human: HumanState | None,
    weights: CostWeights,
    resolution: float = 0.15,
    stop_penalty: float = 1e3,
):
    mode = CostMode(mode)
    if mode is CostMode.MIN_PATH:
        return LengthCost()
    if mode is CostMode.HAMP and isinstance(human, OccupancyGrid):
        raise ValueError("deterministic HAMP needs a point-set human")
    if mode is CostMode.HAMP_PROBABILISTIC and isinstance(human, DeterministicHuman):
        raise ValueError("probabilistic HAMP needs an occupancy grid")
    cmap = Costmap(model, safety, human, stop_penalty)
    if mode is CostMode.HAMP_APPROXIMATED:
        return TerminalDilationCost(cmap, weights)
    return TimeCost(cmap, weights, resolution)


# --- informed sampling ---------------------------------------------------------


def _rotation_to_world(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Orthonormal matrix whose first column is the unit vector from ``a`` to ``b``."""
    d = len(a)
    e = b - a
    n = np.linalg.norm(e)
    if n == 0:
        return np.eye(d)
    q, _ = np.linalg.qr(np.column_stack([e / n, np.eye(d)]))
    return q * np.sign(q[:, 0] @ e)


def _unit_ball(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True) * rng.random((n, 1)) ** (1.0 / d)


def _first_accepted(cands: np.ndarray, ok: np.ndarray) -> np.ndarray | None:
    hit = np.flatnonzero(ok)
    return cands[hit[0]] if hit.size else None


def informed_sample(
    best_cost: float,
    start: Any,
    goals: Any,
    rng: np.random.Generator,
    q_min: Any,
    q_max: Any,
    lb_factor: float = 1.0,
    goal_offsets: Sequence[float] | None = None,
    rounds: int = 4,
    accept: Callable[[np.ndarray], np.ndarray] | None = None,
    batch: int = 64,
) -> np.ndarray:
    """Sample the joint box restricted to configurations that could beat ``best_cost``.

    A configuration ``x`` qualifies for goal ``g`` when
    ``lb_factor * (|x - start| + |g - x|) + offset_g <= best_cost``: the union of
    one prolate hyperspheroid per goal intersected with the joint box. With
    ``best_cost = inf`` (or empty region) this is uniform sampling of the box.
    ``accept`` optionally tightens the region by rejection (e.g. an exact bound
    that the spheroid only relaxes); it maps (N, d) candidates to a bool mask.
    Candidates are drawn ``batch`` at a time; after ``rounds`` empty batches the
    sampler falls back to the whole box.
    """
    q_min = np.asarray(q_min, dtype=float)
    q_max = np.asarray(q_max, dtype=float)
    start = np.asarray(start, dtype=float)
    goals = np.atleast_2d(np.asarray(goals, dtype=float))
    d = len(start)

    def uniform() -> np.ndarray:
        return rng.uniform(q_min, q_max)

    if not np.isfinite(best_cost):
        return uniform()
    offsets = np.zeros(len(goals)) if goal_offsets is None else np.asarray(goal_offsets, dtype=float)
    budget = (best_cost - offsets) / lb_factor
    c_min = np.linalg.norm(goals - start, axis=1)
    idx = np.flatnonzero(budget >= c_min)
    if idx.size == 0:
        return uniform()
    major = budget[idx] / 2.0
    minor = np.sqrt(np.maximum(budget[idx] ** 2 - c_min[idx] ** 2, 0.0)) / 2.0
    volumes = major * minor ** (d - 1)
    box_volume = float(np.prod(q_max - q_min))
    ball_volume = math.pi ** (d / 2) / math.gamma(d / 2 + 1)

    def coverage(x: np.ndarray) -> np.ndarray:
        sums = np.linalg.norm(x - start, axis=1)[:, None] + np.linalg.norm(x[:, None, :] - goals[idx][None], axis=2)
        return np.sum(sums <= budget[idx][None], axis=1)

    def finish(x: np.ndarray, ok: np.ndarray) -> np.ndarray:
        return ok if accept is None else ok & accept(x)

    if volumes.sum() * ball_volume >= box_volume:
        # spheroids cover most of the box: plain rejection from the box is cheaper
        for _ in range(rounds):
            x = rng.uniform(q_min, q_max, size=(batch, d))
            got = _first_accepted(x, finish(x, coverage(x) > 0))
            if got is not None:
                return got
        return uniform()
    # a zero budget slack collapses the region onto the start-goal segments
    weights = volumes / volumes.sum() if volumes.sum() > 0 else np.full(idx.size, 1.0 / idx.size)
    rots = np.stack([_rotation_to_world(start, goals[k]) for k in idx])
    radii = np.column_stack([major] + [minor] * (d - 1))
    centers = 0.5 * (start + goals[idx])
    for _ in range(rounds):
        pick = rng.choice(idx.size, size=batch, p=weights)
        local = radii[pick] * _unit_ball(rng, batch, d)
        x = np.einsum("bij,bj->bi", rots[pick], local) + centers[pick]
        inside = np.all((x >= q_min) & (x <= q_max), axis=1)
        # accept with 1/coverage so overlapping spheroids are not oversampled
        thin = rng.random(batch) * np.maximum(coverage(x), 1) <= 1.0
        got = _first_accepted(x, finish(x, inside & thin))
        if got is not None:
            return got
    return uniform()


def time_informed_sample(
    best_cost: float,
    start: Any,
    goals: Any,
    rng: np.random.Generator,
    q_min: Any,
    q_max: Any,
    qdot_max: Any,
    accept: Callable[[np.ndarray], np.ndarray],
    goal_offsets: Sequence[float] | None = None,
    rounds: int = 4,
    batch: int = 64,
) -> np.ndarray:
    """Informed sampling for time-like costs.

    A configuration can only beat ``best_cost`` on the way to goal ``g`` if
    ``|x_k - start_k| <= c * qdot_k`` and ``|g_k - x_k| <= c * qdot_k`` on every
    joint, with ``c = best_cost - offset_g``. Those boxes are sampled uniformly
    (overlaps thinned by coverage) and ``accept`` applies the exact bound.
    """
    q_min = np.asarray(q_min, dtype=float)
    q_max = np.asarray(q_max, dtype=float)
    start = np.asarray(start, dtype=float)
    goals = np.atleast_2d(np.asarray(goals, dtype=float))
    qdot = np.asarray(qdot_max, dtype=float)
    d = len(start)
    if not np.isfinite(best_cost):
        return rng.uniform(q_min, q_max)
    offsets = np.zeros(len(goals)) if goal_offsets is None else np.asarray(goal_offsets, dtype=float)
    span = (best_cost - offsets)[:, None] * qdot
    lo = np.maximum(np.maximum(start - span, goals - span), q_min)
    hi = np.minimum(np.minimum(start + span, goals + span), q_max)
    live = np.all(hi >= lo, axis=1)
    if not np.any(live):
        return rng.uniform(q_min, q_max)
    lo, hi = lo[live], hi[live]
    vol = np.prod(hi - lo, axis=1)
    weights = vol / vol.sum() if vol.sum() > 0 else np.full(len(vol), 1.0 / len(vol))
    for _ in range(rounds):
        pick = rng.choice(len(vol), size=batch, p=weights)
        x = lo[pick] + rng.random((batch, d)) * (hi[pick] - lo[pick])
        cover = np.sum(np.all((x[:, None, :] >= lo[None]) & (x[:, None, :] <= hi[None]), axis=2), axis=1)
        thin = rng.random(batch) * np.maximum(cover, 1) <= 1.0
        got = _first_accepted(x, thin & accept(x))
        if got is not None:
            return got
    return rng.uniform(q_min, q_max)


# --- tree ------------------------------------------------------------------------


class SearchTree:
    """Array-backed tree: configurations, parents, cost-to-come, incoming edge cost."""

    def __init__(self, root: np.ndarray, capacity: int = 1024) -> None:
        d = len(root)
        self.q = np.empty((capacity, d))
        self.parent = np.full(capacity, -1, dtype=int)
        self.cost = np.zeros(capacity)
        self.edge = np.zeros(capacity)
        self.children: list[list[int]] = [[]]
        self.q[0] = root
        self.size = 1

    def _grow(self) -> None:
        cap = 2 * len(self.q)
        q = np.empty((cap, self.q.shape[1]))
        q[: self.size] = self.q[: self.size]
        self.q = q
        for name, fill in (("parent", -1), ("cost", 0.0), ("edge", 0.0)):
            old = getattr(self, name)
            new = np.full(cap, fill, dtype=old.dtype)
            new[: self.size] = old[: self.size]
            setattr(self, name, new)

    def add(self, q: np.ndarray, parent: int, edge_cost: float) -> int:
        if self.size == len(self.q):
            self._grow()
        k = self.size
        self.q[k] = q
        self.parent[k] = parent
        self.edge[k] = edge_cost
        self.cost[k] = self.cost[parent] + edge_cost
        self.children.append([])
        self.children[parent].append(k)
        self.size += 1
        return k

    def rewire(self, node: int, new_parent: int, edge_cost: float) -> None:
        self.children[self.parent[node]].remove(node)
        self.children[new_parent].append(node)
        self.parent[node] = new_parent
        self.edge[node] = edge_cost
        stack = [node]
        while stack:
            k = stack.pop()
            self.cost[k] = self.cost[self.parent[k]] + self.edge[k]
            stack.extend(self.children[k])

    def nodes(self) -> np.ndarray:
        return self.q[: self.size]

    def nearest(self, x: np.ndarray) -> int:
        diff = self.q[: self.size] - x
        return int(np.argmin(np.einsum("ij,ij->i", diff, diff)))

    def within(self, x: np.ndarray, radius: float) -> np.ndarray:
        diff = self.q[: self.size] - x
        return np.flatnonzero(np.einsum("ij,ij->i", diff, diff) <= radius * radius)

    def branch(self, node: int) -> list[int]:
        out = [node]
        while self.parent[out[-1]] >= 0:
            out.append(int(self.parent[out[-1]]))
        return out[::-1]

    def is_ancestor(self, a: int, b: int) -> bool:
        """True when ``a`` lies on the branch from the root to ``b``."""
        k = b
        while k >= 0:
            if k == a:
                return True
            k = int(self.parent[k])
        return False

    def check(self) -> float:
        """Largest gap between stored and recomputed cost-to-come; raises on malformed structure."""
        worst = 0.0
        for k in range(1, self.size):
            branch = self.branch(k)
            if branch[0] != 0 or len(set(branch)) != len(branch):
                raise AssertionError(f"node {k} is not connected to the root")
            recomputed = float(np.sum(self.edge[branch[1:]]))
            worst = max(worst, abs(recomputed - self.cost[k]))
        return worst


# --- planner ---------------------------------------------------------------------


@dataclass(frozen=True)
class PlannerSettings:
    """Tuning knobs of the sampling planner."""

    steer_step: float = 0.3
    rewire_gamma: float | None = None
    rewire_max: float = 0.9
    goal_bias: float = 0.05
    cc_resolution: float = 0.02
    cost_resolution: float = 0.15
    max_iterations: int | None = 1500
    max_time: float | None = 5.0
    informed: bool = True
    human_as_obstacle: bool = False
    stop_penalty: float = 1e3

    @classmethod
    def from_dict(cls, d: dict[str, Any] | None) -> "PlannerSettings":
        return cls(**(d or {}))

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass(frozen=True, eq=False)
class PlanningQuery:
    start: np.ndarray
    goals: np.ndarray
    mode: CostMode = CostMode.MIN_PATH
    seed: int = 0

    def __post_init__(self) -> None:
        start = np.array(self.start, dtype=float).reshape(-1)
        goals = np.atleast_2d(np.array(self.goals, dtype=float))
        if goals.size == 0 or goals.shape[1] != start.size:
            raise ValueError("goals must be a nonempty (k, dof) array matching the start")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "goals", goals)
        object.__setattr__(self, "mode", CostMode(self.mode))


@dataclass
class PlanResult:
    success: bool
    path: Path | None
    cost: float
    goal_index: int | None
    iterations: int
    history: list[tuple[int, float]] = field(default_factory=list)
    lambda_evaluations: int = 0
    tree: SearchTree | None = None
    message: str = ""

    @property
    def length(self) -> float:
        return self.path.length() if self.path is not None else float("nan")


class _RRTStar:
    def __init__(self, query, scene, model, cost, settings) -> None:
        self.query = query
        self.scene = scene
        self.model = model
        self.cost = cost
        self.s = settings
        self.rng = np.random.default_rng(query.seed)
        self.tree = SearchTree(query.start)
        self.goal_node: dict[int, int] = {}
        self.best = math.inf
        self.best_goal: int | None = None
        self.history: list[tuple[int, float]] = []
        d = model.dof
        if settings.rewire_gamma is None:
            vol = float(np.prod(model.q_max - model.q_min))
            unit = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
            self.gamma = 2.0 * (1.0 + 1.0 / d) ** (1.0 / d) * (vol / unit) ** (1.0 / d)
        else:
            self.gamma = settings.rewire_gamma

    # helpers
    def _free(self, a: np.ndarray, b: np.ndarray) -> bool:
        return collision_free_segment(self.scene, self.model, a, b, self.s.cc_resolution)

    def _radius(self) -> float:
        n = self.tree.size + 1
        r = self.gamma * (math.log(n) / n) ** (1.0 / self.model.dof)
        return max(min(r, self.s.rewire_max), self.s.steer_step)

    def _sample(self) -> tuple[np.ndarray, int | None]:
        goals = self.query.goals
        if self.rng.random() < self.s.goal_bias:
            k = int(self.rng.integers(len(goals)))
            return goals[k], k
        if self.s.informed and math.isfinite(self.best):
            offsets = np.array([self.cost.terminal_lower_bound(k) for k in range(len(goals))])
            start = self.query.start
            best = self.best

            def could_improve(x: np.ndarray) -> np.ndarray:
                lb = self.cost.edge_lower_bounds(start[None, None, :], x[:, None, :])
                lb = lb + self.cost.edge_lower_bounds(x[:, None, :], goals[None]) + offsets
                return np.any(lb <= best, axis=1)

            if isinstance(self.cost, TimeCost):
                x = time_informed_sample(
                    best, start, goals, self.rng, self.model.q_min, self.model.q_max,
                    self.model.qdot_max, could_improve, offsets,
                )
            else:
                x = informed_sample(
                    best, start, goals, self.rng, self.model.q_min, self.model.q_max,
                    self.cost.lb_factor, offsets, accept=could_improve,
                )
        else:
            x = self.rng.uniform(self.model.q_min, self.model.q_max)
        return x, None

    def _update_incumbent(self, it: int) -> None:
        for k, node in self.goal_node.items():
            c = self.tree.cost[node] + self.cost.terminal(self.query.goals[k], k)
            if c < self.best:
                self.best = c
                self.best_goal = k
        if not self.history or self.history[-1][1] != self.best:
            if math.isfinite(self.best):
                self.history.append((it, self.best))

    def _choose_parent(self, x: np.ndarray, near: np.ndarray, nearest: int, chunk: int = 8):
        """Cheapest collision-free parent among ``near``.

        Candidates are costed lazily in lower-bound order; once the next bound
        cannot beat the best costed candidate the rest are skipped, which
        gives the same parent as costing everything.
        """
        tree = self.tree
        qs = tree.q[near]
        lb = tree.cost[near] + self.cost.edge_lower_bounds(qs, np.broadcast_to(x, qs.shape))
        order = np.argsort(lb, kind="stable")
        total = np.full(len(near), math.inf)
        edges = np.full(len(near), math.inf)
        rejected = np.zeros(len(near), dtype=bool)
        pos = 0
        while True:
            pool = np.where(rejected, math.inf, total)
            j = int(np.argmin(pool))
            if math.isfinite(pool[j]) and (pos >= len(order) or lb[order[pos]] >= pool[j]):
                cand = int(near[j])
                if cand == nearest or self._free(tree.q[cand], x):
                    return cand, float(edges[j])
                rejected[j] = True
                continue
            if pos >= len(order):
                return None, math.inf
            batch = order[pos : pos + chunk]
            pos += len(batch)
            e = self.cost.edge_costs(qs[batch], np.broadcast_to(x, (len(batch), x.size)))
            edges[batch] = e
            total[batch] = tree.cost[near[batch]] + e

    def _insert(self, x: np.ndarray, nearest: int) -> int | None:
        tree = self.tree
        near = tree.within(x, self._radius())
        if nearest not in near:
            near = np.append(near, nearest)
        parent, parent_edge = self._choose_parent(x, near, nearest)
        if parent is None:
            return None
        new = tree.add(x, parent, parent_edge)
        # rewire
        others = near[near != parent]
        if len(others):
            qo = tree.q[others]
            xs = np.broadcast_to(x, qo.shape)
            lb = tree.cost[new] + self.cost.edge_lower_bounds(xs, qo)
            promising = others[lb < tree.cost[others]]
            if len(promising):
                qp = tree.q[promising]
                out = self.cost.edge_costs(np.broadcast_to(x, qp.shape), qp)
                for node, e in zip(promising, out):
                    node = int(node)
                    if tree.cost[new] + e < tree.cost[node] and not tree.is_ancestor(node, new):
                        if self._free(x, tree.q[node]):
                            tree.rewire(node, new, float(e))
        return new

    def run(self) -> PlanResult:
        q = self.query
        free_goals = [k for k, g in enumerate(q.goals) if configuration_free(self.scene, self.model, g)]
        if not configuration_free(self.scene, self.model, q.start) or not free_goals:
            return PlanResult(False, None, math.inf, None, 0, message="start or goals in collision")
        trivial = [k for k in free_goals if np.array_equal(q.goals[k], q.start)]
        if trivial:
            k = trivial[0]
            path = Path(np.stack([q.start, q.goals[k]]))
            return PlanResult(True, path, self.cost.path_cost(path.waypoints), k, 0, [(0, 0.0)], tree=self.tree)
        deadline = None if self.s.max_time is None else time.monotonic() + self.s.max_time
        it = 0
        goal_of = {tuple(q.goals[k]): k for k in free_goals}
        step = self.s.steer_step
        while True:
            if self.s.max_iterations is not None and it >= self.s.max_iterations:
                break
            if deadline is not None and time.monotonic() > deadline:
                break
            it += 1
            x_rand, _ = self._sample()
            nearest = self.tree.nearest(x_rand)
            x_near = self.tree.q[nearest]
            delta = x_rand - x_near
            dist = float(np.linalg.norm(delta))
            if dist == 0.0:
                continue
            x_new = x_rand.copy() if dist <= step else x_near + delta * (step / dist)
            key = tuple(x_new)
            if key in goal_of and goal_of[key] in self.goal_node:
                continue
            if not self._free(x_near, x_new):
                continue
            node = self._insert(x_new, nearest)
            if node is None:
                continue
            if key in goal_of:
                self.goal_node[goal_of[key]] = node
            # opportunistic connection to goals within one step
            for k in free_goals:
                if k in self.goal_node:
                    continue
                g = q.goals[k]
                if np.linalg.norm(g - x_new) <= step and self._free(x_new, g):
                    gnode = self._insert(g, node)
                    if gnode is not None:
                        self.goal_node[k] = gnode
            self._update_incumbent(it)
        if self.best_goal is None:
            return PlanResult(
                False, None, math.inf, None, it, self.history,
                _evaluations(self.cost), self.tree, "no path found within budget",
            )
        branch = self.tree.branch(self.goal_node[self.best_goal])
        coarse = self.tree.q[branch]
        path = discretize(coarse, self.s.cost_resolution) if len(coarse) > 1 else Path(np.stack([coarse[0], coarse[0]]))
        return PlanResult(True, path, self.best, self.best_goal, it, self.history, _evaluations(self.cost), self.tree)


def _evaluations(cost) -> int:
    cmap = getattr(cost, "costmap", None)
    return 0 if cmap is None else cmap.counter.count


def plan(
    query: PlanningQuery,
    scene: Scene,
    model: RobotModel,
    human: HumanState | None,
    weights: CostWeights,
    safety: SafetyParams,
    settings: PlannerSettings = PlannerSettings(),
    cost=None,
) -> PlanResult:
    """Solve one query. The human shapes the cost; it is an obstacle only on request."""
    if cost is None:
        cost = make_cost(query.mode, model, safety, human, weights, settings.cost_resolution, settings.stop_penalty)
    if settings.human_as_obstacle and isinstance(human, DeterministicHuman):
        scene = scene.with_spheres([Sphere(tuple(p), max(safety.C, 1e-6)) for p in human.points])
    if cost.costmap is not None:
        cost.costmap.counter.reset()
    return _RRTStar(query, scene, model, cost, settings).run()


def nominal_execution_time(model: RobotModel, path: Path) -> float:
    return nominal_time(model, path.waypoints)
