"""Human state: point sets, voxel occupancy grids and scripted timelines."""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence, Union

import numpy as np

__all__ = [
    "DeterministicHuman",
    "OccupancyGrid",
    "HumanTimeline",
    "HumanState",
    "NoSupportError",
    "voxelize",
    "radial_occupancy",
    "sample_realization",
    "sample_occupancy",
    "workspace_grid",
    "save_grid",
    "load_grid",
    "save_timeline",
    "load_timeline",
]

GRID_SCHEMA = "hamp.grid/1"
TIMELINE_SCHEMA = "hamp.timeline/1"


class NoSupportError(ValueError):
    """Raised when sampling from a grid whose probabilities are all zero."""


def _readonly(a: Any, shape: tuple[int, ...] | None = None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DeterministicHuman:
    """Human as ``m`` Cartesian points with optional velocities."""

    points: np.ndarray
    velocities: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        pts = _readonly(self.points)
        pts = pts.reshape(-1, 3)
        if len(pts) < 1:
            raise ValueError("a human needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("human points must be finite")
        object.__setattr__(self, "points", _readonly(pts))
        vel = np.zeros_like(pts) if self.velocities is None else np.array(self.velocities, dtype=float).reshape(-1, 3)
        if vel.shape != pts.shape:
            raise ValueError("velocities must match points")
        object.__setattr__(self, "velocities", _readonly(vel))

    @property
    def m(self) -> int:
        return len(self.points)

    def to_dict(self) -> dict[str, Any]:
        return {"points": self.points.tolist(), "velocities": self.velocities.tolist()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DeterministicHuman":
        return cls(d["points"], d.get("velocities"))


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Axis-aligned voxel grid with a per-voxel occupancy probability.

    Voxels are half-open cells ``[lo, lo + edge)`` along each axis; the flat
    index runs x fastest, then y, then z.
    """

    origin: np.ndarray
    edge: float
    shape: tuple[int, int, int]
    pi: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        shape = tuple(int(s) for s in self.shape)
        if len(shape) != 3 or min(shape) < 1:
            raise ValueError("grid dimensions must be three integers >= 1")
        if not self.edge > 0:
            raise ValueError("voxel edge must be > 0")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "origin", _readonly(self.origin, (3,)))
        size = shape[0] * shape[1] * shape[2]
        pi = np.zeros(size) if self.pi is None else np.array(self.pi, dtype=float).reshape(-1)
        if pi.shape != (size,):
            raise ValueError(f"pi must have {size} entries, got {pi.size}")
        if np.any(pi < 0.0) or np.any(pi > 1.0) or not np.all(np.isfinite(pi)):
            raise ValueError("occupancy probabilities must lie in [0, 1]")
        object.__setattr__(self, "pi", _readonly(pi))

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1] * self.shape[2]

    @property
    def centers(self) -> np.ndarray:
        idx = np.arange(self.size)
        ijk = np.stack(np.unravel_index(idx, self.shape, order="F"), axis=1)
        return self.origin + (ijk + 0.5) * self.edge

    def center(self, j: int) -> np.ndarray:
        ijk = np.array(np.unravel_index(int(j), self.shape, order="F"))
        return self.origin + (ijk + 0.5) * self.edge

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Centers and probabilities of the voxels with nonzero occupancy."""
        nz = np.flatnonzero(self.pi > 0.0)
        ijk = np.stack(np.unravel_index(nz, self.shape, order="F"), axis=1)
        return self.origin + (ijk + 0.5) * self.edge, self.pi[nz]

    def with_pi(self, pi: Any) -> "OccupancyGrid":
        return OccupancyGrid(self.origin, self.edge, self.shape, pi)


HumanState = Union[DeterministicHuman, OccupancyGrid]


def workspace_grid(lo: Sequence[float], hi: Sequence[float], edge: float = 0.1) -> OccupancyGrid:
    """Empty grid of ``edge``-sized voxels covering the box ``[lo, hi]``."""
    lo_ = np.asarray(lo, dtype=float)
    hi_ = np.asarray(hi, dtype=float)
    shape = tuple(int(s) for s in np.maximum(np.ceil((hi_ - lo_) / edge - 1e-9), 1))
    return OccupancyGrid(lo_, edge, shape)


def voxelize(grid: OccupancyGrid, x: Any) -> int | None:
    """Flat index of the voxel containing ``x``, or ``None`` outside the grid."""
    rel = (np.asarray(x, dtype=float) - grid.origin) / grid.edge
    ijk = np.floor(rel).astype(int)
    if np.any(ijk < 0) or np.any(ijk >= np.asarray(grid.shape)):
        return None
    return int(np.ravel_multi_index(tuple(ijk), grid.shape, order="F"))


def radial_occupancy(grid: OccupancyGrid, mu: Any, r: float, inverse_radius: bool = False) -> OccupancyGrid:
    """Grid whose probabilities fall off linearly with the distance to ``mu``.

    ``pi = max(0, 1 - d / r)`` with ``r`` the occupancy radius in meters. With
    ``inverse_radius=True`` the factor multiplies the distance instead,
    ``pi = max(0, 1 - r d)``, so the support radius becomes ``1 / r``.
    """
    if not r > 0:
        raise ValueError("occupancy radius must be > 0")
    d = np.linalg.norm(grid.centers - np.asarray(mu, dtype=float), axis=1)
    scaled = d * r if inverse_radius else d / r
    return grid.with_pi(np.clip(1.0 - scaled, 0.0, 1.0))


def sample_realization(grid: OccupancyGrid, seed: int | np.random.Generator) -> DeterministicHuman:
    """Draw one human position: a voxel center chosen with weight ``pi``."""
    total = float(grid.pi.sum())
    if total <= 0.0:
        raise NoSupportError("occupancy grid has no voxel with nonzero probability")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    cdf = np.cumsum(grid.pi)
    j = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    j = min(j, grid.size - 1)
    while grid.pi[j] <= 0.0:  # guard against landing on a zero-width cdf step at the top end
        j -= 1
    return DeterministicHuman(grid.center(j)[None, :])


def sample_occupancy(grid: OccupancyGrid, seed: int | np.random.Generator) -> DeterministicHuman | None:
    """Occupy every voxel independently with probability ``pi``; None when nothing is occupied.

    This is the outcome model behind the expected-maximum dilation, so a
    planner using the grid is scored against realizations of its own model.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    occupied = np.flatnonzero(rng.random(grid.size) < grid.pi)
    if len(occupied) == 0:
        return None
    return DeterministicHuman(grid.centers[occupied])


@dataclass(frozen=True)
class HumanTimeline:
    """Keyframed human motion with hold-last interpolation.

    Before the first keyframe there is no human. An empty timeline means no
    human at all; a keyframe holding None removes the human.
    """

    keyframes: tuple[tuple[float, DeterministicHuman | None], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        frames = tuple((float(t), h) for t, h in self.keyframes)
        times = [t for t, _ in frames]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("timeline timestamps must be strictly increasing")
        object.__setattr__(self, "keyframes", frames)

    @classmethod
    def static(cls, human: DeterministicHuman | None) -> "HumanTimeline":
        return cls(()) if human is None else cls(((0.0, human),))

    @property
    def times(self) -> list[float]:
        return [t for t, _ in self.keyframes]

    def at(self, t: float) -> DeterministicHuman | None:
        k = bisect.bisect_right(self.times, t) - 1
        if k < 0:
            return None
        return self.keyframes[k][1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": TIMELINE_SCHEMA,
            "keyframes": [{"t": t, **(h.to_dict() if h is not None else {"points": None})} for t, h in self.keyframes],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "HumanTimeline":
        if d.get("schema", TIMELINE_SCHEMA) != TIMELINE_SCHEMA:
            raise ValueError(f"unsupported timeline schema {d.get('schema')!r}")
        frames = []
        for k in d["keyframes"]:
            frames.append((k["t"], None if k.get("points") is None else DeterministicHuman.from_dict(k)))
        return cls(tuple(frames))


def grid_to_dict(grid: OccupancyGrid) -> dict[str, Any]:
    return {
        "schema": GRID_SCHEMA,
        "origin": grid.origin.tolist(),
        "edge": grid.edge,
        "shape": list(grid.shape),
        "order": "x-fastest",
        "pi": grid.pi.tolist(),
    }


def grid_from_dict(d: dict[str, Any]) -> OccupancyGrid:
    if d.get("schema", GRID_SCHEMA) != GRID_SCHEMA:
        raise ValueError(f"unsupported grid schema {d.get('schema')!r}")
    return OccupancyGrid(d["origin"], float(d["edge"]), tuple(d["shape"]), d.get("pi"))


def save_grid(grid: OccupancyGrid, path: str | Path) -> None:
    Path(path).write_text(json.dumps(grid_to_dict(grid)), encoding="utf-8")


def load_grid(path: str | Path) -> OccupancyGrid:
    return grid_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_timeline(timeline: HumanTimeline, path: str | Path) -> None:
    Path(path).write_text(json.dumps(timeline.to_dict(), indent=1), encoding="utf-8")


def load_timeline(path: str | Path) -> HumanTimeline:
    return HumanTimeline.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
