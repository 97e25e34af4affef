import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calibdesign.errors import InputError
from calibdesign.kinematics import (
    ElementaryTransform,
    KinematicModel,
    Parameter,
    apply_parameter_update,
    chain_kinematics,
    fd_steps,
    forward_position,
    identification_jacobian,
)

angles = st.floats(-math.pi, math.pi, allow_nan=False)


def planar_position(q1, q2, l1=1.0, l2=0.8):
    return np.array([l1 * math.cos(q1) + l2 * math.cos(q1 + q2), l1 * math.sin(q1) + l2 * math.sin(q1 + q2), 0.0])


@given(angles, angles)
def test_two_link_forward_position(two_link_model_fixture, q1, q2):
    p = forward_position(two_link_model_fixture, two_link_model_fixture.nominal, [q1, q2])
    np.testing.assert_allclose(p, planar_position(q1, q2), atol=1e-14)


@pytest.fixture(scope="module")
def two_link_model_fixture():
    from calibdesign.models import two_link_model

    return two_link_model(1.0, 0.8, "both")


@given(angles, angles)
def test_two_link_jacobian_closed_form(two_link_model_fixture, q1, q2):
    # columns: l1, l2, dq1, dq2
    jac = identification_jacobian(two_link_model_fixture, two_link_model_fixture.nominal, [q1, q2])
    c1, s1, c12, s12 = math.cos(q1), math.sin(q1), math.cos(q1 + q2), math.sin(q1 + q2)
    expected = np.array(
        [
            [c1, c12, -s1 - 0.8 * s12, -0.8 * s12],
            [s1, s12, c1 + 0.8 * c12, 0.8 * c12],
            [0.0, 0.0, 0.0, 0.0],
        ]
    )
    np.testing.assert_allclose(jac, expected, atol=1e-14)


def test_fd_matches_analytic_on_6r(six_r):
    rng = np.random.default_rng(11)
    lim = six_r.limits_array
    q = rng.uniform(lim[:, 0], lim[:, 1], size=(1000, 6))
    params = six_r.nominal
    analytic = identification_jacobian(six_r, params, q)
    fd = identification_jacobian(six_r, params, q, method="fd")
    assert np.max(np.abs(analytic - fd)) < 1e-6


def test_fd_step_policy(six_r):
    h = fd_steps(six_r)
    nominal = six_r.nominal[six_r.identifiable_indices]
    np.testing.assert_array_equal(h, np.maximum(1e-7, 1e-7 * np.abs(nominal)))


def test_two_pi_invariance(six_r):
    rng = np.random.default_rng(3)
    q = rng.uniform(-math.pi, math.pi, size=(200, 6))
    shift = 2 * math.pi * rng.integers(-2, 3, size=q.shape)
    p1, j1 = chain_kinematics(six_r, six_r.nominal, q, six_r.identifiable_indices)
    p2, j2 = chain_kinematics(six_r, six_r.nominal, q + shift, six_r.identifiable_indices)
    np.testing.assert_allclose(p1, p2, atol=1e-12)
    np.testing.assert_allclose(j1, j2, atol=1e-12)


def test_broadcasting_shapes(six_r):
    params = np.repeat(six_r.nominal[None], 4, axis=0)[:, None, :]
    q = np.zeros((5, 6))
    p, jac = chain_kinematics(six_r, params, q, six_r.identifiable_indices)
    assert p.shape == (4, 5, 3)
    assert jac.shape == (4, 5, 3, six_r.n_identifiable)


def test_zero_pose_of_6r(six_r):
    # upper arm vertical, forearm along +x
    p = forward_position(six_r, six_r.nominal, np.zeros(6))
    np.testing.assert_allclose(p, [0.35 + 1.2 + 0.415, 0.0, 0.675 + 1.15 - 0.041], atol=1e-14)


def test_roll_offset_has_no_effect(six_r):
    _, jac = chain_kinematics(six_r, six_r.nominal, np.random.default_rng(0).uniform(-2, 2, (50, 6)),
                              [six_r.parameter_index("dq6")])
    assert np.max(np.abs(jac)) < 1e-12


def test_update_leaves_joint_readings_untouched(two_link_full):
    q = np.array([[0.1, 0.2], [0.3, 0.4]])
    before = q.copy()
    new, q_out = apply_parameter_update(two_link_full, two_link_full.nominal, q, [1e-3, 2e-3, 3e-3, 4e-3])
    np.testing.assert_array_equal(q, before)
    np.testing.assert_array_equal(q_out, before)
    np.testing.assert_allclose(new - two_link_full.nominal, [1e-3, 2e-3, 3e-3, 4e-3])


def test_update_wrong_length(two_link):
    with pytest.raises(InputError):
        apply_parameter_update(two_link, two_link.nominal, [[0, 0]], [1.0, 2.0, 3.0])


def test_model_validation():
    rot = ElementaryTransform("rot", "z", "joint", joint=0)
    a = Parameter("a", 1.0, "m")
    with pytest.raises(InputError):  # parameter never used
        KinematicModel((rot,), (a,))
    t = ElementaryTransform("trans", "x", "param", param="a")
    with pytest.raises(InputError):  # used twice
        KinematicModel((rot, t, t), (a,))
    with pytest.raises(InputError):  # wrong unit for a translation
        KinematicModel((rot, ElementaryTransform("trans", "x", "param", param="b")), (Parameter("b", 0.0, "rad"),))
    with pytest.raises(InputError):
        ElementaryTransform("rot", "w", "joint", joint=0)


def test_bad_configuration(two_link):
    with pytest.raises(InputError):
        forward_position(two_link, two_link.nominal, [0.0, 0.0, 0.0])
    with pytest.raises(InputError):
        forward_position(two_link, two_link.nominal, [0.0, float("nan")])
    with pytest.raises(InputError):
        identification_jacobian(two_link, two_link.nominal, [0.0, 0.0], method="complex-step")


def test_with_identifiable(two_link):
    full = two_link.with_identifiable(["l1", "dq2"])
    assert full.identifiable_names == ("l1", "dq2")
    with pytest.raises(InputError):
        two_link.with_identifiable(["nope"])


@settings(max_examples=30)
@given(st.floats(-0.05, 0.05), st.floats(-0.05, 0.05))
def test_offset_parameter_equals_joint_shift(two_link_model_fixture, d1, d2):
    # a joint offset acts exactly like shifting the joint reading
    q = np.array([0.4, -1.1])
    params = two_link_model_fixture.nominal.copy()
    params[2:] = [d1, d2]
    np.testing.assert_allclose(
        forward_position(two_link_model_fixture, params, q),
        forward_position(two_link_model_fixture, two_link_model_fixture.nominal, q + [d1, d2]),
        atol=1e-15,
    )
