from __future__ import annotations

import numpy as np
import pytest

from hamp.kinematics import RobotModel, bench_arm, planar_2r
from hamp.safety import SafetyParams


@pytest.fixture
def arm():
    return bench_arm()


@pytest.fixture
def planar():
    return planar_2r()


@pytest.fixture
def safety():
    return SafetyParams(a_s=3.0, T_r=0.15, C=0.2, v_h=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_configs(model, rng, size):
    return rng.uniform(model.q_min, model.q_max, size=(size, model.dof))


def swing_arm(omega: float, radius: float = 1.0, span: float = np.pi) -> RobotModel:
    """One yaw joint with a single point ``radius`` out on x; its velocity at q=0 is +y."""
    return RobotModel(
        offsets=[[0, 0, 0]],
        axes=[[0, 0, 1]],
        q_min=[-span],
        q_max=[span],
        qdot_max=[omega],
        poi_links=(1,),
        poi_offsets=[[radius, 0, 0]],
    )
