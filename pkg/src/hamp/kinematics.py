"""Serial-arm kinematics for revolute chains.

A chain is described as data: every joint has a translation from the previous
frame (at zero configuration) and a rotation axis expressed in that frame.
Points of interest are rigidly attached to a link frame; link 0 is the base.

All functions accept a single configuration ``(dof,)`` or a batch
``(B, dof)``; batched calls are what the planner uses in its inner loop.
"""

from __future__ import annotations

from dataclasses import dataclass
import os
from typing import Any, Sequence

import numpy as np

__all__ = [
    "RobotModel",
    "bench_arm",
    "planar_2r",
    "load_robot",
    "robot_from_dict",
    "robot_to_dict",
    "forward_points",
    "linear_jacobian",
    "forward_points_and_jacobians",
    "joint_origins",
    "segment_min_time",
    "segment_velocity",
    "Path",
]


def _frozen(a: Any) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RobotModel:
    """Revolute serial chain with joint limits and points of interest.

    Attributes:
        offsets: ``(dof, 3)`` translation from the previous frame to joint k.
        axes: ``(dof, 3)`` unit rotation axes in the local joint frame.
        q_min, q_max: joint position limits (rad).
        qdot_max: per-joint speed limits (rad/s).
        poi_links: link index each point of interest is attached to
            (0 = base, k = after joint k).
        poi_offsets: ``(n, 3)`` local offsets of the points of interest.
        base: base position in the world frame.
        link_radius: radius of the capsules used for collision checking.
    """

    offsets: np.ndarray
    axes: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    qdot_max: np.ndarray
    poi_links: tuple[int, ...]
    poi_offsets: np.ndarray
    base: np.ndarray = None  # type: ignore[assignment]
    link_radius: float = 0.0
    name: str = "robot"

    def __post_init__(self) -> None:
        dof = len(self.offsets)
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("offsets", _frozen(self.offsets).reshape(dof, 3))
        axes = np.array(self.axes, dtype=float).reshape(dof, 3)
        norms = np.linalg.norm(axes, axis=1)
        if np.any(norms <= 0):
            raise ValueError("joint axes must be nonzero")
        set_("axes", _frozen(axes / norms[:, None]))
        for key in ("q_min", "q_max", "qdot_max"):
            arr = _frozen(getattr(self, key)).reshape(-1)
            if arr.shape != (dof,):
                raise ValueError(f"{key} must have {dof} entries, got {arr.shape}")
            set_(key, arr)
        if not np.all(self.q_min < self.q_max):
            raise ValueError("q_min must be strictly below q_max")
        if not np.all(self.qdot_max > 0):
            raise ValueError("qdot_max must be strictly positive")
        links = tuple(int(k) for k in self.poi_links)
        if not links:
            raise ValueError("at least one point of interest is required")
        if any(k < 0 or k > dof for k in links):
            raise ValueError(f"point-of-interest link indices must lie in [0, {dof}]")
        set_("poi_links", links)
        set_("poi_offsets", _frozen(self.poi_offsets).reshape(len(links), 3))
        set_("base", _frozen(np.zeros(3) if self.base is None else self.base).reshape(3))
        if self.link_radius < 0:
            raise ValueError("link_radius must be nonnegative")

    @property
    def dof(self) -> int:
        return len(self.offsets)

    @property
    def n_points(self) -> int:
        return len(self.poi_links)

    @property
    def reach(self) -> float:
        """Upper bound on the distance from the base to any point of interest."""
        return float(np.linalg.norm(self.offsets, axis=1).sum() + np.linalg.norm(self.poi_offsets, axis=1).max())

    def check_configuration(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape[-1:] != (self.dof,):
            raise ValueError(f"configuration must have {self.dof} joints, got shape {q.shape}")
        return q

    def within_limits(self, q: np.ndarray) -> bool:
        q = self.check_configuration(q)
        return bool(np.all(q >= self.q_min) and np.all(q <= self.q_max))


def planar_2r(l1: float = 1.0, l2: float = 1.0, qdot_max: Sequence[float] = (1.0, 1.0)) -> RobotModel:
    """Planar two-link arm rotating about z, points at the elbow and the tip."""
    return RobotModel(
        offsets=[[0, 0, 0], [l1, 0, 0]],
        axes=[[0, 0, 1], [0, 0, 1]],
        q_min=[-np.pi, -np.pi],
        q_max=[np.pi, np.pi],
        qdot_max=qdot_max,
        poi_links=(2, 2),
        poi_offsets=[[0, 0, 0], [l2, 0, 0]],
        name="planar-2r",
    )


def bench_arm(
    link_lengths: Sequence[float] = (0.5, 0.5, 0.5),
    qdot_max: Sequence[float] = (1.0, 1.0, 1.0),
    link_radius: float = 0.05,
) -> RobotModel:
    """Spatial 3-DOF arm: base yaw followed by two pitch joints.

    ``link_lengths`` are (shoulder height, upper arm, forearm). Points of
    interest sit on every joint origin plus the tool tip.
    """
    h, a, b = link_lengths
    return RobotModel(
        offsets=[[0, 0, 0], [0, 0, h], [a, 0, 0]],
        axes=[[0, 0, 1], [0, 1, 0], [0, 1, 0]],
        q_min=[-np.pi, -np.pi / 2, -2.6],
        q_max=[np.pi, np.pi / 2, 2.6],
        qdot_max=qdot_max,
        poi_links=(1, 2, 3, 3),
        poi_offsets=[[0, 0, 0], [0, 0, 0], [0, 0, 0], [b, 0, 0]],
        link_radius=link_radius,
        name="bench-3dof",
    )


def robot_from_dict(cfg: dict[str, Any]) -> RobotModel:
    """Build a model from the ``robot`` section of a scenario file.

    Schema::

        joints: [{offset: [x, y, z], axis: [x, y, z], min: rad, max: rad, qdot_max: rad/s}, ...]
        points: [{link: int, offset: [x, y, z]}, ...]   # optional
        base: [x, y, z]                                # optional
        link_radius: m                                 # optional

    Without ``points`` every joint origin plus a tool point at ``tool`` (local
    offset on the last link, default zero) is used.
    """
    if "preset" in cfg:
        preset = cfg["preset"]
        if preset == "bench-3dof":
            kwargs = {k: cfg[k] for k in ("link_lengths", "qdot_max", "link_radius") if k in cfg}
            return bench_arm(**kwargs)
        if preset == "planar-2r":
            return planar_2r()
        raise ValueError(f"unknown robot preset {preset!r}")
    joints = cfg["joints"]
    if not joints:
        raise ValueError("robot needs at least one joint")
    dof = len(joints)
    points = cfg.get("points")
    if points is None:
        tool = cfg.get("tool", [0.0, 0.0, 0.0])
        links = list(range(1, dof + 1)) + [dof]
        offs = [[0.0, 0.0, 0.0]] * dof + [list(tool)]
    else:
        links = [int(p["link"]) for p in points]
        offs = [list(p.get("offset", [0.0, 0.0, 0.0])) for p in points]
    return RobotModel(
        offsets=[j.get("offset", [0.0, 0.0, 0.0]) for j in joints],
        axes=[j["axis"] for j in joints],
        q_min=[j["min"] for j in joints],
        q_max=[j["max"] for j in joints],
        qdot_max=[j["qdot_max"] for j in joints],
        poi_links=tuple(links),
        poi_offsets=offs,
        base=cfg.get("base"),
        link_radius=float(cfg.get("link_radius", 0.0)),
        name=str(cfg.get("name", "robot")),
    )


def robot_to_dict(model: RobotModel) -> dict[str, Any]:
    return {
        "name": model.name,
        "base": model.base.tolist(),
        "link_radius": model.link_radius,
        "joints": [
            {
                "offset": model.offsets[k].tolist(),
                "axis": model.axes[k].tolist(),
                "min": float(model.q_min[k]),
                "max": float(model.q_max[k]),
                "qdot_max": float(model.qdot_max[k]),
            }
            for k in range(model.dof)
        ],
        "points": [
            {"link": link, "offset": model.poi_offsets[i].tolist()} for i, link in enumerate(model.poi_links)
        ],
    }


def load_robot(path: str | os.PathLike[str]) -> RobotModel:
    import yaml

    with open(path, encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    return robot_from_dict(cfg.get("robot", cfg))


def _rotations(axes: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Rodrigues rotation matrices, ``theta`` of shape (B,) -> (B, 3, 3)."""
    x, y, z = axes
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    k2 = k @ k
    s = np.sin(theta)[:, None, None]
    c = np.cos(theta)[:, None, None]
    return np.eye(3) + s * k + (1.0 - c) * k2


def _chain(model: RobotModel, q: np.ndarray):
    """World rotation and origin of every frame: lists of (B,3,3), (B,3)."""
    batch = q.shape[0]
    rot = np.broadcast_to(np.eye(3), (batch, 3, 3))
    pos = np.broadcast_to(model.base, (batch, 3))
    rots = [rot]
    origins = [pos]
    for k in range(model.dof):
        pos = pos + rot @ model.offsets[k]
        rot = rot @ _rotations(model.axes[k], q[:, k])
        rots.append(rot)
        origins.append(pos)
    return rots, origins


def _batched(model: RobotModel, q: Any) -> tuple[np.ndarray, bool]:
    q = model.check_configuration(q)
    single = q.ndim == 1
    return np.atleast_2d(q), single


def forward_points_and_jacobians(model: RobotModel, q: Any) -> tuple[np.ndarray, np.ndarray]:
    """Points of interest ``(B, n, 3)`` and their linear Jacobians ``(B, n, 3, dof)``."""
    qb, single = _batched(model, q)
    rots, origins = _chain(model, qb)
    batch = qb.shape[0]
    pts = np.empty((batch, model.n_points, 3))
    for i, link in enumerate(model.poi_links):
        pts[:, i] = origins[link] + rots[link] @ model.poi_offsets[i]
    # world axis of joint k is R_{k} a_k where R_k is the frame rotation after joint k
    w = np.stack([rots[k + 1] @ model.axes[k] for k in range(model.dof)], axis=1)[:, None]
    lever = pts[:, :, None, :] - np.stack(origins[1:], axis=1)[:, None]
    cols = np.stack(
        (
            w[..., 1] * lever[..., 2] - w[..., 2] * lever[..., 1],
            w[..., 2] * lever[..., 0] - w[..., 0] * lever[..., 2],
            w[..., 0] * lever[..., 1] - w[..., 1] * lever[..., 0],
        ),
        axis=2,
    )
    # joint k moves point i only if the point sits on link k+1 or beyond
    moves = np.arange(model.dof)[None, :] < np.asarray(model.poi_links)[:, None]
    jac = cols * moves[None, :, None, :]
    if single:
        return pts[0], jac[0]
    return pts, jac


def forward_points(model: RobotModel, q: Any) -> np.ndarray:
    """Cartesian position of every point of interest, ``(n, 3)`` or ``(B, n, 3)``."""
    qb, single = _batched(model, q)
    rots, origins = _chain(model, qb)
    pts = np.stack(
        [origins[link] + rots[link] @ model.poi_offsets[i] for i, link in enumerate(model.poi_links)],
        axis=1,
    )
    return pts[0] if single else pts


def joint_origins(model: RobotModel, q: Any) -> np.ndarray:
    """Base position followed by every joint origin, ``(dof + 1, 3)`` or batched."""
    qb, single = _batched(model, q)
    _, origins = _chain(model, qb)
    out = np.stack(origins, axis=1)
    return out[0] if single else out


def linear_jacobian(model: RobotModel, q: Any, i: int) -> np.ndarray:
    """``3 x dof`` Jacobian of point of interest ``i`` (batched: ``B x 3 x dof``)."""
    if not 0 <= int(i) < model.n_points:
        raise ValueError(f"point-of-interest index {i} out of range [0, {model.n_points})")
    _, jac = forward_points_and_jacobians(model, q)
    return jac[..., int(i), :, :]


def segment_min_time(model: RobotModel, qa: Any, qb: Any) -> float | np.ndarray:
    """Traversal time with the slowest joint at full speed: ``||(qb - qa) / qdot_max||_inf``."""
    dq = np.abs(np.asarray(qb, dtype=float) - np.asarray(qa, dtype=float))
    out = np.max(dq / model.qdot_max, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def segment_velocity(model: RobotModel, qa: Any, qb: Any) -> np.ndarray:
    """Joint velocity along ``qa -> qb`` with the limiting joint saturated.

    Raises:
        ValueError: if the segment has zero length.
    """
    delta = np.asarray(qb, dtype=float) - np.asarray(qa, dtype=float)
    length = np.linalg.norm(delta, axis=-1)
    if np.any(length <= 0.0):
        raise ValueError("degenerate segment: endpoints coincide")
    t = np.max(np.abs(delta) / model.qdot_max, axis=-1)
    # K u = delta / t: identical to min_k |qdot_max_k / u_k| scaling of the unit direction
    return delta / np.asarray(t)[..., None]


@dataclass(frozen=True, eq=False)
class Path:
    """Ordered joint-space waypoints ``(w, dof)`` with ``w >= 2``."""

    waypoints: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.waypoints, dtype=float)
        if w.ndim != 2 or len(w) < 2:
            raise ValueError("a path needs at least two waypoints")
        w.setflags(write=False)
        object.__setattr__(self, "waypoints", w)

    def __len__(self) -> int:
        return len(self.waypoints)

    @property
    def start(self) -> np.ndarray:
        return self.waypoints[0]

    @property
    def end(self) -> np.ndarray:
        return self.waypoints[-1]

    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1).sum())

    def nominal_time(self, model: RobotModel) -> float:
        return float(np.sum(segment_min_time(model, self.waypoints[:-1], self.waypoints[1:])))

    def to_list(self) -> list[list[float]]:
        return self.waypoints.tolist()
