from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamp.human import (
    DeterministicHuman,
    HumanTimeline,
    NoSupportError,
    OccupancyGrid,
    load_grid,
    load_timeline,
    radial_occupancy,
    sample_occupancy,
    sample_realization,
    save_grid,
    save_timeline,
    voxelize,
    workspace_grid,
)


@pytest.fixture
def grid():
    return OccupancyGrid(origin=[0, 0, 0], edge=0.1, shape=(4, 3, 2))


def test_voxelize_first_cell(grid):
    assert voxelize(grid, [0.05, 0.05, 0.05]) == 0


def test_voxelize_half_open_faces(grid):
    # lower face belongs to the cell, upper face to the next one
    assert voxelize(grid, [0.1, 0.0, 0.0]) == 1
    assert voxelize(grid, [0.0, 0.1, 0.0]) == 4
    assert voxelize(grid, [0.0, 0.0, 0.1]) == 12
    assert voxelize(grid, [0.4, 0.0, 0.0]) is None


def test_voxelize_outside(grid):
    assert voxelize(grid, [-0.01, 0.05, 0.05]) is None
    assert voxelize(grid, [0.05, 0.05, 0.25]) is None


def test_voxelize_centers_round_trip(grid):
    for j, c in enumerate(grid.centers):
        assert voxelize(grid, c) == j
        np.testing.assert_allclose(grid.center(j), c)


def test_x_fastest_ordering(grid):
    c = grid.centers
    np.testing.assert_allclose(c[1] - c[0], [0.1, 0, 0])
    np.testing.assert_allclose(c[4] - c[0], [0, 0.1, 0])
    np.testing.assert_allclose(c[12] - c[0], [0, 0, 0.1])


def test_radial_occupancy_values():
    g = OccupancyGrid(origin=[-0.05, -0.05, -0.05], edge=0.1, shape=(11, 1, 1))
    mu = g.center(0)
    out = radial_occupancy(g, mu, r=0.5)
    # centers along x at 0, 0.1, ..., 1.0
    np.testing.assert_allclose(out.pi[:6], [1.0, 0.8, 0.6, 0.4, 0.2, 0.0], atol=1e-12)
    assert np.all(out.pi[5:] == 0.0)
    half = radial_occupancy(g, mu, r=0.4)
    assert half.pi[2] == pytest.approx(0.5)


def test_radial_occupancy_inverse_radius_reading():
    g = OccupancyGrid(origin=[-0.05, -0.05, -0.05], edge=0.1, shape=(25, 1, 1))
    out = radial_occupancy(g, g.center(0), r=0.5, inverse_radius=True)
    assert out.pi[10] == pytest.approx(0.5)
    assert out.pi[19] > 0.0 and out.pi[20] == pytest.approx(0.0, abs=1e-12)


def test_radial_occupancy_rejects_bad_radius(grid):
    with pytest.raises(ValueError):
        radial_occupancy(grid, [0, 0, 0], r=0.0)


@settings(max_examples=50)
@given(
    st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)),
    st.floats(0.05, 2.0),
)
def test_radial_support_is_open_ball(mu, r):
    g = workspace_grid([-1, -1, -1], [1, 1, 1], edge=0.25)
    out = radial_occupancy(g, mu, r)
    d = np.linalg.norm(g.centers - np.asarray(mu), axis=1)
    assert np.all((out.pi > 0) == (d < r))
    assert np.all((out.pi >= 0) & (out.pi <= 1))


def test_grid_rejects_bad_probabilities(grid):
    with pytest.raises(ValueError):
        grid.with_pi(np.full(grid.size, 1.5))


def test_sample_single_voxel(grid):
    pi = np.zeros(grid.size)
    pi[7] = 1.0
    g = grid.with_pi(pi)
    for seed in range(20):
        np.testing.assert_allclose(sample_realization(g, seed).points[0], g.center(7))


def test_sample_frequencies(grid):
    pi = np.zeros(grid.size)
    pi[2], pi[9] = 0.9, 0.1
    g = grid.with_pi(pi)
    rng = np.random.default_rng(7)
    hits = sum(voxelize(g, sample_realization(g, rng).points[0]) == 2 for _ in range(10_000))
    assert abs(hits / 10_000 - 0.9) <= 0.02


def test_sample_seeded_determinism(grid):
    g = radial_occupancy(grid, [0.2, 0.1, 0.1], 0.3)
    a = sample_realization(g, 42).points
    b = sample_realization(g, 42).points
    np.testing.assert_array_equal(a, b)


def test_sample_empty_grid(grid):
    with pytest.raises(NoSupportError):
        sample_realization(grid, 0)


def test_occupancy_sample_marginals(grid):
    pi = np.zeros(grid.size)
    pi[1], pi[4], pi[5] = 1.0, 0.3, 0.7
    g = grid.with_pi(pi)
    rng = np.random.default_rng(3)
    counts = np.zeros(grid.size)
    for _ in range(4000):
        for p in sample_occupancy(g, rng).points:
            counts[voxelize(g, p)] += 1
    np.testing.assert_allclose(counts / 4000, pi, atol=0.03)
    assert counts[1] == 4000


def test_occupancy_sample_can_be_empty(grid):
    assert sample_occupancy(grid, 0) is None


def test_timeline_empty_frame_roundtrip():
    tl = HumanTimeline(((0.0, DeterministicHuman([[1, 0, 0]])), (2.0, None)))
    back = HumanTimeline.from_dict(tl.to_dict())
    assert back.at(1.0) is not None and back.at(2.5) is None


def test_timeline_hold_last():
    h0 = DeterministicHuman([[1, 0, 0]])
    h1 = DeterministicHuman([[0, 1, 0]])
    tl = HumanTimeline(((0.5, h0), (2.0, h1)))
    assert tl.at(0.0) is None
    assert tl.at(0.5) is h0
    assert tl.at(1.9) is h0
    assert tl.at(100.0) is h1
    with pytest.raises(ValueError):
        HumanTimeline(((1.0, h0), (1.0, h1)))


def test_grid_and_timeline_serialization(tmp_path, grid):
    g = radial_occupancy(grid, [0.2, 0.1, 0.1], 0.3)
    save_grid(g, tmp_path / "g.json")
    again = load_grid(tmp_path / "g.json")
    np.testing.assert_array_equal(again.pi, g.pi)
    assert again.shape == g.shape and again.edge == g.edge
    tl = HumanTimeline(((0.0, DeterministicHuman([[1, 2, 3]], [[0.1, 0, 0]])),))
    save_timeline(tl, tmp_path / "t.json")
    back = load_timeline(tmp_path / "t.json")
    np.testing.assert_array_equal(back.at(5.0).velocities, [[0.1, 0, 0]])


def test_human_validation():
    with pytest.raises(ValueError):
        DeterministicHuman(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        DeterministicHuman([[np.nan, 0, 0]])
