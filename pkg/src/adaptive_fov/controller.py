"""Two-robot task-space controller.

Per tick it solves

    min  beta (alpha f_t1 + (1 - alpha) f_r1 + |lam qd1|^2)
         + (1 - beta) (f_t2 + |lam qd2|^2)
    s.t. joint-limit rows, task-space VFI rows

with ``f_t = |J_t qd + eta_q vec4(t_err)|^2`` and the rotation term built on
the switching error ``r_hat* r_d -/+ 1``. The rotation term uses the Jacobian
of that error, ``H-(r_d) C4 J_r``, so the closed loop drives it to zero.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import qp
from .constraints import ConstraintSet
from .dq import C4, Quaternion, conj_array, hminus4, qmul_array

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TaskGains:
    eta_q: float = 3.0
    alpha: float = 0.99
    beta: float = 0.999
    lam: float = 0.01

    def __post_init__(self):
        if self.eta_q <= 0:
            raise ValueError("eta_q must be positive")
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ValueError("alpha and beta must lie in [0, 1]")
        if self.lam <= 0:
            raise ValueError("damping lam must be strictly positive")


@dataclass(frozen=True)
class TaskTargets:
    r1d: np.ndarray      # vec4 desired tool rotation
    t1d: np.ndarray      # desired tool tip position
    t2d: np.ndarray      # neutral camera position

    def __post_init__(self):
        r = np.asarray(self.r1d, dtype=float)
        if abs(np.linalg.norm(r) - 1.0) > 1e-9:
            raise ValueError("desired rotation must be a unit quaternion")
        object.__setattr__(self, "r1d", r)
        object.__setattr__(self, "t1d", np.asarray(self.t1d, dtype=float))
        object.__setattr__(self, "t2d", np.asarray(self.t2d, dtype=float))


def switching_error_array(r_hat, r_d) -> np.ndarray:
    e = qmul_array(conj_array(r_hat), r_d)
    minus = e - np.array([1.0, 0.0, 0.0, 0.0])
    plus = e + np.array([1.0, 0.0, 0.0, 0.0])
    # ties go to the minus branch
    return minus if np.linalg.norm(minus) <= np.linalg.norm(plus) else plus


def switching_rotation_error(r_hat: Quaternion, r_d: Quaternion) -> Quaternion:
    return Quaternion.from_vec4(switching_error_array(r_hat.vec, r_d.vec))


def rotation_error_jacobian(r_d, J_r) -> np.ndarray:
    """Jacobian of ``r_hat* r_d`` given the Jacobian of ``r_hat``."""
    return hminus4(r_d) @ C4 @ J_r


def task_errors(states, targets: TaskTargets):
    """(t1_err, r1_err, t2_err) as vec4 arrays."""
    s1, s2 = states
    t1 = np.concatenate([[0.0], s1.t - targets.t1d])
    r1 = switching_error_array(s1.r, targets.r1d)
    t2 = np.concatenate([[0.0], s2.t - targets.t2d])
    return t1, r1, t2


def assemble_task_qp(states, targets: TaskTargets, gains: TaskGains,
                     constraints: ConstraintSet | None = None,
                     joint_rows: tuple | None = None) -> qp.QpProblem:
    """Expand the weighted least-squares cost into ``0.5 u'Hu + f'u`` over 16 joint rates."""
    s1, s2 = states
    n1, n2 = s1.J_t_q.shape[1], s2.J_t_q.shape[1]
    t1, r1, t2 = task_errors(states, targets)
    Jt1, Jt2 = s1.J_t_q, s2.J_t_q
    Jr1 = rotation_error_jacobian(targets.r1d, s1.J_r_q)
    a, b, eta, lam = gains.alpha, gains.beta, gains.eta_q, gains.lam

    H1 = b * (a * Jt1.T @ Jt1 + (1 - a) * Jr1.T @ Jr1 + lam ** 2 * np.eye(n1))
    f1 = b * eta * (a * Jt1.T @ t1 + (1 - a) * Jr1.T @ r1)
    H2 = (1 - b) * (Jt2.T @ Jt2 + lam ** 2 * np.eye(n2))
    f2 = (1 - b) * eta * Jt2.T @ t2
    H = np.zeros((n1 + n2, n1 + n2))
    H[:n1, :n1] = H1
    H[n1:, n1:] = H2
    H = H + H.T     # 2 * H, exactly symmetric
    f = 2.0 * np.concatenate([f1, f2])

    A_parts, b_parts = [], []
    if joint_rows is not None:
        A_parts.append(joint_rows[0])
        b_parts.append(joint_rows[1])
    if constraints is not None and len(constraints):
        if constraints.n != n1 + n2:
            raise ValueError(f"constraint width {constraints.n} != {n1 + n2}")
        A, bb = constraints.matrices()
        A_parts.append(A)
        b_parts.append(bb)
    if A_parts:
        return qp.QpProblem(H, f, np.vstack(A_parts), np.concatenate(b_parts))
    return qp.QpProblem(H, f)


def lyapunov_value(states, targets: TaskTargets, gains: TaskGains) -> float:
    t1, r1, t2 = task_errors(states, targets)
    a, b = gains.alpha, gains.beta
    return float(b * a * t1 @ t1 + b * (1 - a) * r1 @ r1 + (1 - b) * t2 @ t2)


@dataclass
class ControlResult:
    u: np.ndarray
    status: str
    solution: qp.QpSolution | None = None

    @property
    def ok(self) -> bool:
        return self.status == qp.OPTIMAL


class TaskController:
    """Holds gains and the previous solution used as a warm-start hint."""

    def __init__(self, gains: TaskGains | None = None):
        self.gains = gains or TaskGains()
        self._last = None

    def tick(self, states, targets: TaskTargets, constraints: ConstraintSet | None = None,
             joint_rows: tuple | None = None) -> ControlResult:
        """One control step; returns zero velocities if the QP fails."""
        problem = assemble_task_qp(states, targets, self.gains, constraints, joint_rows)
        sol = qp.solve(problem, warm_start=self._last)
        if not sol.ok:
            log.warning("task QP %s; holding still this tick", sol.status)
            self._last = None
            return ControlResult(np.zeros(problem.n), sol.status, sol)
        self._last = sol.u
        return ControlResult(sol.u, sol.status, sol)


def control_tick(states, targets, gains, constraints=None, joint_rows=None) -> ControlResult:
    return TaskController(gains).tick(states, targets, constraints, joint_rows)
