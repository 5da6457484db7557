from __future__ import annotations

import csv

import numpy as np
import pytest

from hamp.costmap import Costmap, CostWeights, path_cost
from hamp.execution import ExecutionSettings, execute, min_human_distance, parametrize
from hamp.human import DeterministicHuman, HumanTimeline
from hamp.kinematics import Path, forward_points
from hamp.safety import SafetyParams

from .conftest import random_configs, swing_arm

DT = ExecutionSettings().dt


def test_unit_segment_duration(planar):
    traj = parametrize(Path([[0.0, 0.0], [1.0, 0.5]]), planar)
    assert traj.duration == 1.0
    np.testing.assert_allclose(traj.velocities[0], [1.0, 0.5])


def test_duration_equals_unit_dilation_cost(arm, rng):
    w = random_configs(arm, rng, 7)
    expected = path_cost(w, Costmap(arm, SafetyParams()), CostWeights(nu=0.0))
    assert parametrize(w, arm).duration == pytest.approx(expected, rel=1e-12)


def test_duration_additive_over_split(arm, rng):
    w = random_configs(arm, rng, 6)
    whole = parametrize(w, arm).duration
    assert whole == pytest.approx(parametrize(w[:4], arm).duration + parametrize(w[3:], arm).duration, rel=1e-12)


def test_zero_length_segments_take_no_time(planar):
    traj = parametrize([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]], planar)
    assert traj.duration == 1.0


def test_no_human_runs_at_nominal_speed(arm, rng, safety):
    w = random_configs(arm, rng, 5)
    trace, m = execute(Path(w), arm, safety, None)
    assert m.success and m.outcome == "completed"
    assert abs(m.t_exec - m.t_nom) <= DT
    assert m.mean_override == pytest.approx(1.0)
    assert all(s == 1.0 for s in trace.s_ovr)


def test_trace_invariants_and_geometry(arm, rng, safety):
    w = random_configs(arm, rng, 4)
    human = DeterministicHuman([forward_points(arm, w[1])[-1] + [0.3, 0.0, 0.0]])
    trace, m = execute(Path(w), arm, safety, human)
    t = np.array(trace.t)
    np.testing.assert_allclose(np.diff(t), DT, atol=1e-12)
    s = np.array(trace.s_ovr)
    assert np.all((s >= 0) & (s <= 1))
    # every executed configuration lies on the planned polyline
    for q in trace.q:
        gaps = []
        for a, b in zip(w[:-1], w[1:]):
            d = b - a
            tt = np.clip((q - a) @ d / (d @ d), 0, 1)
            gaps.append(np.linalg.norm(a + tt * d - q))
        assert min(gaps) < 1e-9
    assert m.t_exec >= m.t_nom - DT


def test_random_scenes_never_beat_nominal(arm, rng, safety):
    for _ in range(20):
        w = random_configs(arm, rng, 3)
        human = DeterministicHuman(rng.uniform([-1, -1, 0], [1, 1, 1.5], size=(2, 3)))
        _, m = execute(Path(w), arm, safety, human, record=False)
        if m.success:
            assert m.t_exec >= m.t_nom - DT
            assert m.dilation >= 1.0 - DT / m.t_nom


def test_human_inside_margin_triggers_safety_stop(safety):
    model = swing_arm(1.0)
    # human sits 0.1 m ahead of the point along its direction of motion, inside C = 0.2
    human = DeterministicHuman([[1.0, 0.1, 0.0]])
    _, m = execute(Path([[0.0], [1.0]]), model, safety, human)
    assert not m.success and m.outcome == "safety-stop"
    assert m.t_exec == pytest.approx(safety_stop_time(), abs=2 * DT)


def safety_stop_time():
    return ExecutionSettings().stop_duration


def test_aligned_half_speed_doubles_time():
    # long arm swinging slowly: the point moves at 1 m/s almost straight toward a far human
    model = swing_arm(0.1, radius=10.0)
    cap = SafetyParams(v_max_const=0.5)
    human = DeterministicHuman([[10.0, 1000.0, 0.0]])
    _, m = execute(Path([[-0.05], [0.05]]), model, cap, human)
    assert m.success
    assert m.t_exec == pytest.approx(2.0 * m.t_nom, rel=0.05)


def test_single_segment_matches_planned_dilation(safety):
    model = swing_arm(2.0)
    human = DeterministicHuman([[1.0, 0.6, 0.0]])
    w = np.array([[-0.05], [0.05]])
    planned = Costmap(model, safety, human).dilation(w.mean(axis=0), [1.0])[0]
    assert planned > 1.5
    _, m = execute(Path(w), model, safety, human, ExecutionSettings(dt=1e-3))
    assert m.dilation == pytest.approx(planned, rel=0.10)


def test_human_appearing_later(safety):
    model = swing_arm(2.0)
    human = DeterministicHuman([[1.0, 0.6, 0.0]])
    w = Path([[-0.3], [0.3]])
    early, _ = execute(w, model, safety, HumanTimeline(((0.0, human),)))
    late, m = execute(w, model, safety, HumanTimeline(((0.3, human),)))
    assert all(s == 1.0 for t, s in zip(late.t, late.s_ovr) if t < 0.3)
    assert early.t[-1] >= late.t[-1]
    assert m.success


def test_min_human_distance(arm, rng):
    q = random_configs(arm, rng, 1)[0]
    tip = forward_points(arm, q)[-1]
    assert min_human_distance(arm, q, DeterministicHuman([tip])) == 0.0
    pts = forward_points(arm, q)
    two = DeterministicHuman([tip + [0.5, 0, 0], tip - [0.5, 0, 0]])
    assert min_human_distance(arm, q, two) <= 0.5
    humans = rng.uniform(-1, 1, size=(5, 3))
    brute = min(np.linalg.norm(h - p) for h in humans for p in pts)
    assert min_human_distance(arm, q, DeterministicHuman(humans)) == pytest.approx(brute, rel=1e-14)
    assert min_human_distance(arm, q, None) == np.inf


def test_trace_csv(tmp_path, arm, rng, safety):
    trace, _ = execute(Path(random_configs(arm, rng, 2)), arm, safety, None)
    out = tmp_path / "trace.csv"
    trace.to_csv(out)
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(trace.t)
    assert list(rows[0]) == ["t", "progress", "s_ovr", "min_distance", "q0", "q1", "q2"]
