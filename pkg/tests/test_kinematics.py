import math

import numpy as np
import pytest

from adaptive_fov.dq import qmul_array, rotation_matrix_array
from adaptive_fov.kinematics import (N_JOINTS, N_PARAMS, PRISMATIC, REVOLUTE, SerialChainModel,
                                     forward_kinematics, jacobians_fd_check, link_frame_index,
                                     random_model, solve_ik)
from adaptive_fov.scenario import default_robots


def rot(axis, angle):
    c, s = math.cos(angle), math.sin(angle)
    R = np.eye(4)
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    R[i, i], R[i, j], R[j, i], R[j, j] = c, -s, s, c
    return R


def trans(axis, d):
    T = np.eye(4)
    T[axis, 3] = d
    return T


def pose_matrix(p):
    return trans(0, p[0]) @ trans(1, p[1]) @ trans(2, p[2]) @ rot(0, p[3]) @ rot(1, p[4]) @ rot(2, p[5])


def homogeneous_fk(model, q, a):
    """Effector transform from 4x4 products of the stated factor order."""
    T = pose_matrix(a[0:6])
    for i in range(N_JOINTS):
        th, d, l, al = a[6 + 4 * i: 10 + 4 * i]
        if model.joint_types[i] == REVOLUTE:
            th = th + q[i]
        else:
            d = d + q[i]
        T = T @ rot(2, th) @ trans(2, d) @ trans(0, l) @ rot(0, al)
    return T @ pose_matrix(a[38:44])


@pytest.fixture(scope="module")
def rng():
    return np.random.default_rng(11)


def sample(rng, model):
    q = rng.uniform(model.q_min, model.q_max)
    a = model.nominal_parameters() + 1e-2 * rng.standard_normal(N_PARAMS)
    return q, a


def test_fk_matches_homogeneous_oracle(rng):
    for _ in range(50):
        model = random_model(rng, prismatic=tuple(rng.choice(8, 2, replace=False)))
        q, a = sample(rng, model)
        st = forward_kinematics(model, q, a)
        T = homogeneous_fk(model, q, a)
        np.testing.assert_allclose(rotation_matrix_array(st.r), T[:3, :3], atol=1e-12)
        np.testing.assert_allclose(st.t, T[:3, 3], atol=1e-12)
        assert abs(np.linalg.norm(st.r) - 1.0) < 1e-12


def test_default_robots_match_oracle(rng):
    for cfg in default_robots():
        model = cfg.model()
        q, a = sample(rng, model)
        T = homogeneous_fk(model, q, a)
        np.testing.assert_allclose(forward_kinematics(model, q, a).t, T[:3, 3], atol=1e-12)


def test_jacobians_match_finite_differences(rng):
    for _ in range(10):
        model = random_model(rng)
        q, a = sample(rng, model)
        assert jacobians_fd_check(model, q, a) < 1e-7


def test_jacobian_shapes_and_zero_scalar_row(rng):
    model = random_model(rng)
    st = forward_kinematics(model, *sample(rng, model))
    assert st.J_r_q.shape == (4, N_JOINTS) and st.J_t_q.shape == (4, N_JOINTS)
    assert st.J_r_a.shape == (4, N_PARAMS) and st.J_t_a.shape == (4, N_PARAMS)
    assert np.all(st.J_t_q[0] == 0.0) and np.all(st.J_t_a[0] == 0.0)


def test_rotation_jacobian_is_tangent(rng):
    # unit-norm constraint: r . dr = 0 for every column
    for _ in range(20):
        model = random_model(rng)
        st = forward_kinematics(model, *sample(rng, model))
        assert np.max(np.abs(st.r @ st.J_r_q)) < 1e-12
        assert np.max(np.abs(st.r @ st.J_r_a)) < 1e-12


def test_joint_columns_are_parameter_columns(rng):
    model = random_model(rng, prismatic=(1, 4))
    st = forward_kinematics(model, *sample(rng, model))
    idx = model.joint_parameter_index()
    np.testing.assert_array_equal(st.J_r_q, st.J_r_a[:, idx])
    np.testing.assert_array_equal(st.J_t_q, st.J_t_a[:, idx])
    # prismatic joints drive the DH offset d, revolute joints theta
    assert idx[1] == 6 + 4 * 1 + 1 and idx[0] == 6


def test_revolute_screw_axes(rng):
    model = random_model(rng, prismatic=())
    q, a = sample(rng, model)
    st = forward_kinematics(model, q, a)
    for i in range(N_JOINTS):
        rz, tz = st.frame(i)
        z = rotation_matrix_array(rz)[:, 2]
        expected_t = np.cross(z, st.t - tz)
        np.testing.assert_allclose(st.J_t_q[1:, i], expected_t, atol=1e-12)
        # dr = 0.5 (0, z) r
        np.testing.assert_allclose(st.J_r_q[:, i], 0.5 * qmul_array(np.r_[0.0, z], st.r),
                                   atol=1e-12)


def test_prismatic_column_is_axis(rng):
    model = random_model(rng, prismatic=(1,))
    st = forward_kinematics(model, *sample(rng, model))
    rz, _ = st.frame(1)
    np.testing.assert_allclose(st.J_t_q[1:, 1], rotation_matrix_array(rz)[:, 2], atol=1e-12)
    np.testing.assert_allclose(st.J_r_q[:, 1], 0.0, atol=1e-15)


def test_base_translation_shifts_rigidly(rng):
    model = random_model(rng)
    q, a = sample(rng, model)
    shift = np.array([0.1, -0.2, 0.05])
    a2 = a.copy()
    a2[:3] += shift
    s1, s2 = forward_kinematics(model, q, a), forward_kinematics(model, q, a2)
    np.testing.assert_allclose(s2.t, s1.t + shift, atol=1e-14)
    np.testing.assert_allclose(s2.r, s1.r, atol=1e-15)
    np.testing.assert_allclose(s2.J_t_q, s1.J_t_q, atol=1e-13)


def test_point_jacobian_and_link_indexing(rng):
    model = random_model(rng)
    q, a = sample(rng, model)
    st = forward_kinematics(model, q, a)
    offset = np.array([0.02, -0.01, 0.03])
    p, J_q, J_a = st.point(5, offset)
    eps = 1e-6
    for i in range(N_JOINTS):
        d = np.zeros(N_JOINTS)
        d[i] = eps
        pp = forward_kinematics(model, q + d, a).point(5, offset)[0]
        pm = forward_kinematics(model, q - d, a).point(5, offset)[0]
        np.testing.assert_allclose((pp - pm) / (2 * eps), J_q[1:, i], atol=1e-8)
    # later joints do not move an earlier link
    np.testing.assert_array_equal(J_q[:, 5:], 0.0)
    assert link_frame_index(N_JOINTS + 1) == N_PARAMS
    np.testing.assert_allclose(st.point(N_JOINTS + 1)[0], st.t, atol=1e-15)
    with pytest.raises(ValueError):
        link_frame_index(10)


def test_fk_rejects_bad_input():
    model = random_model(np.random.default_rng(0))
    a = model.nominal_parameters()
    with pytest.raises(ValueError):
        forward_kinematics(model, np.zeros(7), a)
    with pytest.raises(ValueError):
        forward_kinematics(model, np.full(N_JOINTS, np.nan), a)


def test_model_validation():
    good = dict(joint_types=(REVOLUTE,) * 8, dh=np.zeros((8, 4)), base=np.zeros(6),
                effector=np.zeros(6), q_min=-np.ones(8), q_max=np.ones(8), qd_max=np.ones(8))
    SerialChainModel(**good)
    with pytest.raises(ValueError):
        SerialChainModel(**{**good, "joint_types": ("spherical",) * 8})
    with pytest.raises(ValueError):
        SerialChainModel(**{**good, "q_min": np.ones(8)})
    with pytest.raises(ValueError):
        SerialChainModel(**{**good, "qd_max": np.zeros(8)})
    m = SerialChainModel(**{**good, "joint_types": (PRISMATIC,) + (REVOLUTE,) * 7})
    assert m.is_angular_parameter().sum() == 3 + 2 * 8 + 3


def test_ik_reaches_reachable_target(rng):
    model = default_robots()[0].model()
    a = model.nominal_parameters()
    q_goal = np.clip(np.array(default_robots()[0].q_seed) + 0.05, model.q_min, model.q_max)
    goal = forward_kinematics(model, q_goal, a)
    q, res = solve_ik(model, a, goal.t, goal.r, q0=np.array(default_robots()[0].q_seed))
    assert res < 1e-9
    st = forward_kinematics(model, q, a)
    np.testing.assert_allclose(st.t, goal.t, atol=1e-9)
    assert min(np.linalg.norm(st.r - goal.r), np.linalg.norm(st.r + goal.r)) < 1e-9
    assert np.all(q >= model.q_min) and np.all(q <= model.q_max)
