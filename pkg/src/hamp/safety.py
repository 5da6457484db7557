"""Speed-and-separation monitoring limits.

The protective distance and the speed cap are scalar formulas; both accept
numpy arrays so the costmap can evaluate many human points at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

__all__ = ["SafetyParams", "protective_distance", "max_allowed_speed", "speed_override"]


@dataclass(frozen=True)
class SafetyParams:
    """Constants of the separation-monitoring rule.

    Attributes:
        a_s: maximum Cartesian deceleration toward the human (m/s^2).
        T_r: robot reaction time (s).
        C: margin covering perception uncertainty (m).
        v_h: human speed toward the robot (m/s).
        v_max_const: when set, replaces the separation formula by a constant
            speed cap (power-and-force-limiting style). Defaults to ``None``.
    """

    a_s: float = 3.0
    T_r: float = 0.15
    C: float = 0.2
    v_h: float = 0.0
    v_max_const: float | None = None

    def __post_init__(self) -> None:
        if not self.a_s > 0:
            raise ValueError("a_s must be > 0")
        if self.T_r < 0 or self.C < 0 or self.v_h < 0:
            raise ValueError("T_r, C and v_h must be >= 0")
        if self.v_max_const is not None and self.v_max_const < 0:
            raise ValueError("v_max_const must be >= 0")

    @classmethod
    def from_dict(cls, cfg: dict[str, Any] | None) -> "SafetyParams":
        cfg = dict(cfg or {})
        known = {"a_s", "T_r", "C", "v_h", "v_max_const"}
        unknown = set(cfg) - known
        if unknown:
            raise ValueError(f"unknown safety keys: {sorted(unknown)}")
        return cls(**cfg)

    def to_dict(self) -> dict[str, Any]:
        return {"a_s": self.a_s, "T_r": self.T_r, "C": self.C, "v_h": self.v_h, "v_max_const": self.v_max_const}


def protective_distance(p: SafetyParams, v_rh: Any) -> Any:
    """Separation the robot needs when closing in at ``v_rh`` (m/s)."""
    v = np.asarray(v_rh, dtype=float)
    out = p.v_h * (p.T_r + v / p.a_s) + v * p.T_r + v * v / (2.0 * p.a_s) + p.C
    return float(out) if out.ndim == 0 else out


def max_allowed_speed(p: SafetyParams, S: Any, v_h: float | None = None) -> Any:
    """Largest closing speed compatible with separation ``S``.

    Inside the margin, or whenever the closed form turns negative, the cap is
    zero (safety stop).
    """
    s = np.asarray(S, dtype=float)
    if p.v_max_const is not None:
        out = np.full_like(s, p.v_max_const)
        return float(out) if out.ndim == 0 else out
    vh = p.v_h if v_h is None else v_h
    at = p.a_s * p.T_r
    arg = vh * vh + at * at - 2.0 * p.a_s * (p.C - s)
    root = np.sqrt(np.maximum(arg, 0.0))
    out = np.where(arg > 0.0, np.maximum(root - at - vh, 0.0), 0.0)
    return float(out) if out.ndim == 0 else out


def speed_override(v_max: float, v_max_rh: float) -> float:
    """Scaling in [0, 1] applied to the nominal speed."""
    if v_max_rh <= 0.0:
        return 1.0
    if v_max <= 0.0:
        return 0.0
    return min(v_max / v_max_rh, 1.0)
