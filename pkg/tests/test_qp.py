import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptive_fov.qp import INFEASIBLE, MAX_ITER, OPTIMAL, QpProblem, kkt_residual, solve
from oracles import dual_projected_gradient, random_qp


def test_unconstrained_minimum():
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    f = np.array([1.0, -1.0])
    sol = solve(QpProblem(H, f))
    np.testing.assert_allclose(sol.u, -np.linalg.solve(H, f), atol=1e-14)
    assert sol.ok and sol.active == ()


def test_single_active_bound_by_hand():
    # min 0.5|u|^2 - u1  s.t. u1 <= 0.25 -> u = (0.25, 0), mu = 0.75
    sol = solve(QpProblem(np.eye(2), [-1.0, 0.0], A=[[1.0, 0.0]], b=[0.25]))
    np.testing.assert_allclose(sol.u, [0.25, 0.0], atol=1e-15)
    np.testing.assert_allclose(sol.ineq_multipliers, [0.75], atol=1e-15)


def test_equality_only_matches_kkt_system():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = random_qp(rng, n=6, m=0, neq=int(rng.integers(1, 4)))
        n, k = p.n, p.C.shape[0]
        K = np.block([[p.H, p.C.T], [p.C, np.zeros((k, k))]])
        x = np.linalg.solve(K, np.concatenate([-p.f, p.d]))
        sol = solve(p)
        np.testing.assert_allclose(sol.u, x[:n], atol=1e-10)
        np.testing.assert_allclose(sol.eq_multipliers, x[n:], atol=1e-9)


def test_matches_projected_gradient_oracle():
    rng = np.random.default_rng(1)
    for _ in range(60):
        p = random_qp(rng)
        sol = solve(p)
        assert sol.status == OPTIMAL
        assert sol.kkt_residual < 1e-9
        assert abs(p.objective(sol.u) - p.objective(dual_projected_gradient(p))) < 1e-8


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_scale_invariance(seed, c_obj, c_row):
    rng = np.random.default_rng(seed)
    p = random_qp(rng)
    base = solve(p)
    scaled = solve(QpProblem(c_obj * p.H, c_obj * p.f, c_row * p.A, c_row * p.b, p.C, p.d))
    np.testing.assert_allclose(scaled.u, base.u, atol=1e-8 * (1 + np.linalg.norm(base.u)))


def test_complementarity_and_active_set():
    rng = np.random.default_rng(2)
    for _ in range(50):
        p = random_qp(rng, m=12, neq=0)
        sol = solve(p)
        slack = p.A @ sol.u - p.b
        mu = sol.ineq_multipliers
        assert np.all(mu >= 0.0)
        assert np.all(slack <= 1e-10)
        assert np.max(np.abs(mu * slack)) < 1e-10
        active = set(np.flatnonzero(mu > 0))
        assert active <= set(np.flatnonzero(np.abs(slack) < 1e-9))
        assert kkt_residual(p, sol.u, mu, sol.eq_multipliers) == pytest.approx(sol.kkt_residual)


def test_warm_start_gives_same_solution():
    rng = np.random.default_rng(3)
    for _ in range(30):
        p = random_qp(rng)
        cold = solve(p)
        warm = solve(p, warm_start=cold.u)
        np.testing.assert_allclose(warm.u, cold.u, atol=1e-10)


def test_redundant_rows_are_harmless():
    A = np.array([[1.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    sol = solve(QpProblem(np.eye(2), [-1.0, 0.0], A=A, b=[0.5, 0.5, 1.0]))
    assert sol.ok
    np.testing.assert_allclose(sol.u, [0.5, 0.0], atol=1e-12)


def test_infeasible_reported_not_raised():
    p = QpProblem(np.eye(1), [0.0], A=[[1.0], [-1.0]], b=[-1.0, -1.0])
    sol = solve(p)
    assert sol.status == INFEASIBLE and not sol.ok
    p = QpProblem(np.eye(2), [0.0, 0.0], C=[[1.0, 0.0], [1.0, 0.0]], d=[0.0, 1.0])
    assert solve(p).status == INFEASIBLE


def test_iteration_cap():
    rng = np.random.default_rng(4)
    p = random_qp(rng, n=8, m=16, neq=0)
    assert solve(p).iterations > 1
    assert solve(p, max_iter=1).status == MAX_ITER


def test_input_validation():
    with pytest.raises(ValueError):
        QpProblem(np.eye(2), [1.0])
    with pytest.raises(ValueError):
        QpProblem([[1.0, 1.0], [0.0, 1.0]], [0.0, 0.0])
    with pytest.raises(ValueError):
        QpProblem(np.eye(2), [0.0, 0.0], A=[[1.0, 0.0]], b=[1.0, 2.0])
    with pytest.raises(ValueError):
        solve(QpProblem(-np.eye(2), [0.0, 0.0]))
