"""Online adaptation of both robots' kinematic parameters from one image point.

The measurement is the optical-frame direction ``y`` of the ray through the
tracked tool-tip pixel; the model predicts ``y_hat = Ad(r2*) l21`` with
``l21`` the unit vector from the estimated camera position to the estimated
tool tip. Each tick solves

    min  |J_y a_dot + eta_a (y_hat - y)|^2 + |Lambda a_dot|^2
    s.t. parameter box rows, parameter-space VFI rows,
         N a_dot = 0                     (tip position, roll about the line)
         x_err' J_x a_dot <= 0           (task Lyapunov function)
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import qp
from .constraints import (CollisionGeometry, ConstraintRow, ConstraintSet, box_rows,
                          collision_rows, fov_cone_row, stacked_sightline)
from .controller import TaskGains, TaskTargets, rotation_error_jacobian, task_errors
from .dq import Quaternion
from .sightline import line_direction_jacobian, roll_about_line_row

log = logging.getLogger(__name__)

LYAPUNOV = "lyapunov"


@dataclass(frozen=True)
class AdaptationGains:
    eta_a: float = 7.0
    damping: np.ndarray | float = 0.05      # diagonal of Lambda
    a_min: np.ndarray | None = None
    a_max: np.ndarray | None = None
    eta_box: float = 1.0
    eta_vfi: float = 2.0
    free: np.ndarray | None = None          # mask of adapted parameters; None = all

    def __post_init__(self):
        if self.eta_a <= 0:
            raise ValueError("eta_a must be positive")
        if np.any(np.asarray(self.damping) <= 0):
            raise ValueError("damping entries must be positive")
        if self.free is not None and not np.any(self.free):
            raise ValueError("at least one parameter must be free")

    def damping_diag(self, n: int) -> np.ndarray:
        d = np.broadcast_to(np.asarray(self.damping, dtype=float), (n,))
        return np.array(d)


def parameter_bounds(a_nominal, angular_mask, rel: float = 0.1,
                     min_length: float = 0.01, angle: float = math.radians(10.0)):
    """Box around the nominal parameters: +-rel of each length (at least
    ``min_length``) and +-``angle`` on angular entries."""
    a_nominal = np.asarray(a_nominal, dtype=float)
    width = np.where(angular_mask, angle, np.maximum(rel * np.abs(a_nominal), min_length))
    return a_nominal - width, a_nominal + width


def measurement_error(y_hat: Quaternion, y: Quaternion) -> Quaternion:
    return y_hat - y


def line_direction_param_jacobian(states) -> np.ndarray:
    """Jacobian (4 x 88) of the world line of sight w.r.t. both parameter vectors."""
    s1, s2 = states
    h = s1.t - s2.t
    return line_direction_jacobian(h, np.hstack([s1.J_t_a, -s2.J_t_a]))


def adaptation_jacobian(states) -> np.ndarray:
    """Jacobian (4 x 88) of the predicted measurement ``y_hat``."""
    (_, J_y, _), _, _ = stacked_sightline(states, "a")
    return J_y


def predicted_measurement(states) -> np.ndarray:
    (y, _, _), _, _ = stacked_sightline(states, "a")
    return y


def projector_rows(states) -> np.ndarray:
    """N (5 x 88): freeze the estimated tip and rotation about the line of sight."""
    s1, s2 = states
    n1, n2 = s1.J_t_a.shape[1], s2.J_t_a.shape[1]
    N1 = np.hstack([s1.J_t_a, np.zeros((4, n2))])
    (_, _, l), _, _ = stacked_sightline(states, "a")
    J_r2 = np.hstack([np.zeros((4, n1)), s2.J_r_a])
    N2 = roll_about_line_row(s2.r, l, J_r2)
    return np.vstack([N1, N2])


def task_error_jacobian(states, targets: TaskTargets, gains: TaskGains):
    """Weighted task error x_err (12) and its parameter Jacobian (12 x 88)."""
    s1, s2 = states
    n1, n2 = s1.J_t_a.shape[1], s2.J_t_a.shape[1]
    t1, r1, t2 = task_errors(states, targets)
    a, b = gains.alpha, gains.beta
    w = (math.sqrt(b * a), math.sqrt(b * (1 - a)), math.sqrt(1 - b))
    x = np.concatenate([w[0] * t1, w[1] * r1, w[2] * t2])
    J = np.zeros((12, n1 + n2))
    J[0:4, :n1] = w[0] * s1.J_t_a
    J[4:8, :n1] = w[1] * rotation_error_jacobian(targets.r1d, s1.J_r_a)
    J[8:12, n1:] = w[2] * s2.J_t_a
    return x, J


def lyapunov_row(x_err, J_x) -> ConstraintRow:
    """``x_err' J_x a_dot <= 0``; all zeros (vacuous) at the target."""
    return ConstraintRow(np.asarray(x_err) @ np.asarray(J_x), 0.0, LYAPUNOV)


@dataclass
class AdaptResult:
    u: np.ndarray
    status: str
    y_hat: np.ndarray
    y_err: np.ndarray
    solution: qp.QpSolution | None = None
    problem: qp.QpProblem | None = None

    @property
    def ok(self) -> bool:
        return self.status == qp.OPTIMAL


class AdaptiveEstimator:
    """Builds and solves the adaptation QP; owns no parameter state."""

    def __init__(self, gains: AdaptationGains, task_gains: TaskGains | None = None,
                 geometry: CollisionGeometry | None = None,
                 theta_safe: float | None = None):
        self.gains = gains
        self.task_gains = task_gains or TaskGains()
        self.geometry = geometry
        self.theta_safe = theta_safe
        self._last = None

    def build(self, states, y, a_hat, targets: TaskTargets | None = None):
        s1, s2 = states
        n = s1.J_t_a.shape[1] + s2.J_t_a.shape[1]
        (y_hat, J_y, _), _, _ = stacked_sightline(states, "a")
        y_err = np.concatenate([[0.0], y_hat - np.asarray(y, dtype=float)])
        lam = self.gains.damping_diag(n)
        H = 2.0 * (J_y.T @ J_y + np.diag(lam ** 2))
        f = 2.0 * self.gains.eta_a * (J_y.T @ y_err)

        cs = ConstraintSet(n)
        if self.geometry is not None:
            cs.extend(collision_rows(states, self.geometry, "a"))
        if self.theta_safe is not None:
            cs.add(fov_cone_row(y_hat, J_y, self.theta_safe, self.gains.eta_vfi))
        if targets is not None:
            x_err, J_x = task_error_jacobian(states, targets, self.task_gains)
            row = lyapunov_row(x_err, J_x)
            # at the target the row is zero up to rounding and carries no information
            if np.linalg.norm(row.coefficients) > 1e-14 * np.linalg.norm(J_x):
                cs.add(row)
        A_parts, b_parts = [], []
        if self.gains.a_min is not None and self.gains.a_max is not None:
            W, w = box_rows(a_hat, self.gains.a_min, self.gains.a_max, self.gains.eta_box)
            A_parts.append(W)
            b_parts.append(w)
        A, b = cs.matrices()
        A_parts.append(A)
        b_parts.append(b)
        N = projector_rows(states)
        problem = qp.QpProblem(H, f, np.vstack(A_parts), np.concatenate(b_parts),
                               N, np.zeros(N.shape[0]))
        return problem, y_hat, y_err, cs

    def tick(self, states, y, a_hat, targets: TaskTargets | None = None) -> AdaptResult:
        """Parameter rate for one measurement; zero if the QP fails."""
        problem, y_hat, y_err, _ = self.build(states, y, a_hat, targets)
        solved = problem if self.gains.free is None else restrict(problem, self.gains.free)
        sol = qp.solve(solved, warm_start=self._last)
        if not sol.ok:
            log.warning("adaptation QP %s; no update this tick", sol.status)
            self._last = None
            return AdaptResult(np.zeros(problem.n), sol.status, y_hat, y_err, sol, problem)
        self._last = sol.u
        u = sol.u
        if self.gains.free is not None:
            u = np.zeros(problem.n)
            u[np.asarray(self.gains.free, dtype=bool)] = sol.u
        return AdaptResult(u, sol.status, y_hat, y_err, sol, problem)


def restrict(problem: qp.QpProblem, free) -> qp.QpProblem:
    """Same QP with the non-free variables fixed at zero rate.

    Rows left without free coefficients are dropped; an inequality row of that
    kind is satisfied by the zero rate whenever its bound is non-negative.
    """
    free = np.asarray(free, dtype=bool)
    A, C = problem.A[:, free], problem.C[:, free]
    keep_a = np.any(A != 0.0, axis=1) | (problem.b < 0.0)
    keep_c = np.any(C != 0.0, axis=1) | (problem.d != 0.0)
    return qp.QpProblem(problem.H[np.ix_(free, free)], problem.f[free], A[keep_a],
                        problem.b[keep_a], C[keep_c], problem.d[keep_c])


def adapt_tick(states, y, a_hat, gains: AdaptationGains, targets=None, task_gains=None,
               geometry=None, theta_safe=None) -> AdaptResult:
    return AdaptiveEstimator(gains, task_gains, geometry, theta_safe).tick(states, y, a_hat, targets)
