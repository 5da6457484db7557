from __future__ import annotations

import numpy as np
import pytest

from hamp.kinematics import (
    Path,
    RobotModel,
    bench_arm,
    forward_points,
    linear_jacobian,
    load_robot,
    robot_from_dict,
    robot_to_dict,
    segment_min_time,
    segment_velocity,
)

from .conftest import random_configs


def _homogeneous_points(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """Reference forward kinematics by explicit 4x4 transform products."""

    def rot(axis, theta):
        x, y, z = axis
        c, s = np.cos(theta), np.sin(theta)
        C = 1 - c
        R = np.array(
            [
                [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
                [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
                [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
            ]
        )
        T = np.eye(4)
        T[:3, :3] = R
        return T

    def trans(v):
        T = np.eye(4)
        T[:3, 3] = v
        return T

    frames = [trans(model.base)]
    for k in range(model.dof):
        frames.append(frames[-1] @ trans(model.offsets[k]) @ rot(model.axes[k], q[k]))
    out = []
    for link, off in zip(model.poi_links, model.poi_offsets):
        out.append((frames[link] @ np.append(off, 1.0))[:3])
    return np.array(out)


def test_planar_zero_configuration(planar):
    pts = forward_points(planar, np.zeros(2))
    np.testing.assert_allclose(pts, [[1, 0, 0], [2, 0, 0]], atol=1e-15)


def test_planar_quarter_turn(planar):
    pts = forward_points(planar, [np.pi / 2, 0.0])
    np.testing.assert_allclose(pts, [[0, 1, 0], [0, 2, 0]], atol=1e-15)


def test_forward_points_match_transform_chain(arm, rng):
    for q in random_configs(arm, rng, 200):
        np.testing.assert_allclose(forward_points(arm, q), _homogeneous_points(arm, q), atol=1e-12)


def test_batched_forward_points_match_single(arm, rng):
    qs = random_configs(arm, rng, 17)
    batch = forward_points(arm, qs)
    for q, pts in zip(qs, batch):
        np.testing.assert_array_equal(forward_points(arm, q), pts)


def test_dimension_mismatch_rejected(arm):
    with pytest.raises(ValueError):
        forward_points(arm, np.zeros(2))


def test_planar_jacobian_at_zero(planar):
    J = linear_jacobian(planar, np.zeros(2), 1)
    np.testing.assert_allclose(J, [[0, 0], [2, 1], [0, 0]], atol=1e-15)


def test_base_point_has_zero_jacobian():
    model = RobotModel(
        offsets=[[0, 0, 0], [1, 0, 0]],
        axes=[[0, 0, 1], [0, 1, 0]],
        q_min=[-1, -1],
        q_max=[1, 1],
        qdot_max=[1, 1],
        poi_links=(0, 2),
        poi_offsets=[[0.3, 0.2, 0.1], [0.5, 0, 0]],
    )
    assert np.all(linear_jacobian(model, [0.4, -0.3], 0) == 0.0)


def test_jacobian_index_checked(arm):
    with pytest.raises(ValueError):
        linear_jacobian(arm, np.zeros(3), arm.n_points)


def _fd_jacobian(model, q, i, h=1e-6):
    J = np.zeros((3, model.dof))
    for k in range(model.dof):
        e = np.zeros(model.dof)
        e[k] = h
        J[:, k] = (forward_points(model, q + e)[i] - forward_points(model, q - e)[i]) / (2 * h)
    return J


def test_jacobian_matches_finite_differences(arm, rng):
    for q in random_configs(arm, rng, 100):
        for i in range(arm.n_points):
            J = linear_jacobian(arm, q, i)
            fd = _fd_jacobian(arm, q, i)
            scale = max(np.abs(J).max(), 1.0)
            assert np.abs(J - fd).max() <= 1e-5 * scale


def test_segment_min_time_examples():
    model = bench_arm(qdot_max=(1, 1, 1))
    assert segment_min_time(model, np.zeros(3), np.zeros(3)) == 0.0
    assert segment_min_time(model, np.zeros(3), [1, 0.5, 0.2]) == 1.0
    fast = bench_arm(qdot_max=(2, 1, 1))
    assert segment_min_time(fast, np.zeros(3), [1, 0.5, 0.2]) == 0.5


def test_segment_min_time_symmetric_and_additive(arm, rng):
    for _ in range(200):
        a, b = random_configs(arm, rng, 2)
        assert segment_min_time(arm, a, b) == pytest.approx(segment_min_time(arm, b, a), abs=0)
        t = rng.uniform(0, 1)
        mid = a + t * (b - a)
        total = segment_min_time(arm, a, mid) + segment_min_time(arm, mid, b)
        assert total == pytest.approx(segment_min_time(arm, a, b), rel=1e-12)


def test_segment_velocity_single_joint():
    model = bench_arm(qdot_max=(1.5, 1, 1))
    np.testing.assert_allclose(segment_velocity(model, np.zeros(3), [0.7, 0, 0]), [1.5, 0, 0])


def test_segment_velocity_saturates_exactly_one_limit(rng):
    model = bench_arm(qdot_max=(1.0, 1.3, 2.1))
    for _ in range(1000):
        a, b = random_configs(model, rng, 2)
        qdot = segment_velocity(model, a, b)
        ratio = np.abs(qdot) / model.qdot_max
        assert ratio.max() == pytest.approx(1.0, abs=1e-12)
        assert np.all(ratio <= 1.0 + 1e-12)
        assert np.sum(np.isclose(ratio, 1.0, atol=1e-12)) == 1
        # direction preserved, traversal time consistent with the inf-norm model
        u = (b - a) / np.linalg.norm(b - a)
        np.testing.assert_allclose(qdot / np.linalg.norm(qdot), u, atol=1e-12)
        assert np.linalg.norm(b - a) / np.linalg.norm(qdot) == pytest.approx(segment_min_time(model, a, b), rel=1e-12)


def test_segment_velocity_degenerate(arm):
    with pytest.raises(ValueError):
        segment_velocity(arm, np.ones(3), np.ones(3))


def test_model_validation():
    base = dict(offsets=[[0, 0, 0]], axes=[[0, 0, 1]], poi_links=(1,), poi_offsets=[[1, 0, 0]])
    with pytest.raises(ValueError):
        RobotModel(q_min=[1], q_max=[0], qdot_max=[1], **base)
    with pytest.raises(ValueError):
        RobotModel(q_min=[0], q_max=[1], qdot_max=[0], **base)
    with pytest.raises(ValueError):
        RobotModel(q_min=[0], q_max=[1], qdot_max=[1], **{**base, "poi_links": (2,)})
    with pytest.raises(ValueError):
        RobotModel(q_min=[0], q_max=[1], qdot_max=[1], **{**base, "poi_links": ()})


def test_model_is_immutable(arm):
    with pytest.raises(ValueError):
        arm.q_min[0] = 3.0


def test_config_round_trip(arm, tmp_path, rng):
    again = robot_from_dict(robot_to_dict(arm))
    q = random_configs(arm, rng, 5)
    np.testing.assert_allclose(forward_points(again, q), forward_points(arm, q))
    import yaml

    path = tmp_path / "robot.yaml"
    path.write_text(yaml.safe_dump({"robot": robot_to_dict(arm)}))
    loaded = load_robot(path)
    np.testing.assert_allclose(loaded.qdot_max, arm.qdot_max)
    assert loaded.poi_links == arm.poi_links


def test_default_points_cover_joint_origins_and_tool():
    cfg = {
        "joints": [
            {"axis": [0, 0, 1], "min": -3, "max": 3, "qdot_max": 1},
            {"offset": [0, 0, 0.4], "axis": [0, 1, 0], "min": -1, "max": 1, "qdot_max": 1},
        ],
        "tool": [0.3, 0, 0],
    }
    model = robot_from_dict(cfg)
    assert model.n_points == model.dof + 1
    np.testing.assert_allclose(forward_points(model, [0, 0])[-1], [0.3, 0, 0.4])


def test_path_basics(arm):
    p = Path([[0, 0, 0], [1, 0, 0], [1, 1, 0]])
    assert p.length() == pytest.approx(2.0)
    assert p.nominal_time(arm) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        Path([[0, 0, 0]])
