from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamp.safety import SafetyParams, max_allowed_speed, protective_distance, speed_override

params_st = st.builds(
    SafetyParams,
    a_s=st.floats(0.1, 20.0),
    T_r=st.floats(0.0, 1.0),
    C=st.floats(0.0, 1.0),
    v_h=st.floats(0.0, 2.0),
)


def test_protective_distance_at_rest_is_margin():
    p = SafetyParams(a_s=3.0, T_r=0.15, C=0.2)
    assert protective_distance(p, 0.0) == 0.2


def test_protective_distance_numeric():
    p = SafetyParams(a_s=3.0, T_r=0.15, C=0.2)
    # 0.15 + 1/6 + 0.2
    assert protective_distance(p, 1.0) == pytest.approx(0.15 + 1.0 / 6.0 + 0.2, abs=1e-15)
    assert protective_distance(p, 1.0) == pytest.approx(0.5167, abs=5e-5)


def test_protective_distance_human_terms():
    p = SafetyParams(a_s=2.0, T_r=0.1, C=0.1, v_h=1.6)
    expected = 1.6 * (0.1 + 0.5 / 2.0) + 0.5 * 0.1 + 0.25 / 4.0 + 0.1
    assert protective_distance(p, 0.5) == pytest.approx(expected, rel=1e-14)


@settings(max_examples=300)
@given(params_st, st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_protective_distance_monotone_in_robot_speed(p, a, b):
    lo, hi = sorted((a, b))
    assert protective_distance(p, lo) <= protective_distance(p, hi)


@settings(max_examples=300)
@given(params_st, st.floats(0.0, 2.0), st.floats(0.0, 5.0))
def test_protective_distance_monotone_in_human_speed(p, vh2, v):
    q = SafetyParams(a_s=p.a_s, T_r=p.T_r, C=p.C, v_h=p.v_h + vh2)
    assert protective_distance(p, v) <= protective_distance(q, v)


def test_max_allowed_speed_zero_at_margin():
    p = SafetyParams(a_s=3.0, T_r=0.15, C=0.2)
    assert max_allowed_speed(p, 0.2) == 0.0


def test_max_allowed_speed_numeric():
    p = SafetyParams(a_s=3.0, T_r=0.15, C=0.2)
    expected = math.sqrt(0.45**2 + 6.0) - 0.45
    assert max_allowed_speed(p, 1.2) == pytest.approx(expected, rel=1e-14)
    assert max_allowed_speed(p, 1.2) == pytest.approx(2.0405, abs=5e-5)


def test_max_allowed_speed_clamped_inside_margin():
    p = SafetyParams(a_s=3.0, T_r=0.15, C=0.5, v_h=0.3)
    assert max_allowed_speed(p, 0.1) == 0.0
    assert max_allowed_speed(p, 0.0) == 0.0


def test_max_allowed_speed_vectorized():
    p = SafetyParams()
    S = np.array([0.0, 0.2, 0.5, 1.2])
    out = max_allowed_speed(p, S)
    np.testing.assert_allclose(out, [max_allowed_speed(p, s) for s in S])


def test_constant_speed_cap_mode():
    p = SafetyParams(v_max_const=0.25)
    assert max_allowed_speed(p, 0.0) == 0.25
    np.testing.assert_array_equal(max_allowed_speed(p, np.array([0.1, 3.0])), [0.25, 0.25])


@settings(max_examples=300)
@given(params_st, st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_max_allowed_speed_monotone_in_distance(p, a, b):
    lo, hi = sorted((a, b))
    assert max_allowed_speed(p, lo) <= max_allowed_speed(p, hi)


@settings(max_examples=300)
@given(
    st.builds(SafetyParams, a_s=st.floats(0.1, 20.0), T_r=st.floats(0.0, 1.0), C=st.floats(0.0, 1.0)),
    st.floats(0.0, 5.0),
)
def test_cap_and_protective_distance_are_inverse(p, S):
    v = max_allowed_speed(p, S)
    if v > 0:
        assert protective_distance(p, v) == pytest.approx(S, abs=1e-9)
    assert protective_distance(p, v) <= S + 1e-9 or S < p.C


def test_speed_override_cases():
    assert speed_override(1.0, 0.5) == 1.0
    assert speed_override(1.0, 1.0) == 1.0
    assert speed_override(1.0, 2.0) == 0.5
    assert speed_override(0.0, 0.3) == 0.0
    assert speed_override(0.0, 0.0) == 1.0
    assert speed_override(0.0, -0.4) == 1.0


@given(st.floats(0.0, 10.0), st.floats(-10.0, 10.0))
def test_speed_override_bounded(v_max, v_rh):
    assert 0.0 <= speed_override(v_max, v_rh) <= 1.0


def test_params_validation():
    with pytest.raises(ValueError):
        SafetyParams(a_s=0.0)
    with pytest.raises(ValueError):
        SafetyParams(C=-0.1)
    with pytest.raises(ValueError):
        SafetyParams.from_dict({"a_s": 1.0, "bogus": 2})
    assert SafetyParams.from_dict({"C": 0.5}).C == 0.5
