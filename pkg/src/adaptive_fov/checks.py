"""Finite-difference validation of every analytic Jacobian.

Each trial draws a random pair of chains, joint values and parameters, then
compares central differences against:

* ``J_r`` / ``J_t`` of both chains w.r.t. ``q`` and ``a``,
* the world line-of-sight Jacobian w.r.t. the stacked parameters,
* the optical-frame direction Jacobian w.r.t. stacked ``q`` and ``a``,
* every task-space constraint row (its coefficients are minus the gradient
  of the constraint value) w.r.t. stacked ``q`` and ``a``.

The error reported per Jacobian is the worst relative Frobenius error over
all trials.
"""
from __future__ import annotations

import numpy as np

from .constraints import CollisionGeometry, EnvironmentPoint, RobotPoint, task_constraints
from .constraints import stacked_sightline
from .dq import rotation_matrix_array
from .estimator import line_direction_param_jacobian
from .kinematics import N_JOINTS, N_PARAMS, forward_kinematics, random_model

FD_STEP = 1e-6
TOLERANCE = 1e-5
# cone, focal distance, band and gain used for the constraint rows under test
THETA, D_IMAGE, BAND, ETA = 0.01, 0.4, 0.005, 2.0


def _geometry() -> CollisionGeometry:
    pts = tuple(EnvironmentPoint(RobotPoint(r, link), True, True)
                for r in (0, 1) for link in (3, 5, 8, 9))
    pairs = ((RobotPoint(0, 9), RobotPoint(1, 9), 0.1), (RobotPoint(0, 6), RobotPoint(1, 6), 0.1),
             (RobotPoint(0, 4), RobotPoint(1, 7), 0.1))
    return CollisionGeometry(pts, pairs)


def _rel(fd, an) -> float:
    scale = max(np.linalg.norm(fd), np.linalg.norm(an), 1e-12)
    return float(np.linalg.norm(fd - an) / scale)


def _position(states, pt):
    r, t = states[pt.robot].frame(pt.link)
    return t + rotation_matrix_array(r) @ np.asarray(pt.offset, dtype=float)


def constraint_values(states, geom) -> np.ndarray:
    """Constraint values straight from point positions, in row order."""
    vals = []
    c = np.array([*geom.cylinder_center, 0.0])
    for ep in geom.env_points:
        p = _position(states, ep.point)
        if ep.avoid_plane:
            vals.append(p[2] - geom.top_height - geom.plane_safe)
        if ep.avoid_cylinder:
            vals.append(np.hypot(*(p - c)[:2]) - geom.cylinder_radius - geom.cylinder_safe)
    for pa, pb, ds in geom.pairs:
        vals.append(np.linalg.norm(_position(states, pa) - _position(states, pb)) - ds)
    h = states[0].t - states[1].t
    y = rotation_matrix_array(states[1].r).T @ h / np.linalg.norm(h)
    vals.append(-y[2] - np.cos(THETA))
    d = np.linalg.norm(h)
    vals += [d - (D_IMAGE - BAND), (D_IMAGE + BAND) - d]
    return np.array(vals)


def _features(models, q, a, geom):
    s = (forward_kinematics(models[0], q[:N_JOINTS], a[:N_PARAMS]),
         forward_kinematics(models[1], q[N_JOINTS:], a[N_PARAMS:]))
    h = s[0].t - s[1].t
    l = h / np.linalg.norm(h)
    y = rotation_matrix_array(s[1].r).T @ l
    return s, np.concatenate([s[0].r, s[0].t, s[1].r, s[1].t]), l, y, constraint_values(s, geom)


def _fd(fun, x, eps):
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        cols.append((fun(x + e) - fun(x - e)) / (2 * eps))
    return np.array(cols).T


def check_state(models, q, a, geom=None, eps: float = FD_STEP) -> dict:
    """Relative errors of all Jacobians at one state."""
    geom = geom or _geometry()
    s, _, _, _, _ = _features(models, q, a, geom)
    out = {}

    def stacked(vec, var):
        return _features(models, vec, a, geom) if var == "q" else _features(models, q, vec, geom)

    for var, x in (("q", q), ("a", a)):
        cache = {}

        def feat(v, k):
            key = v.tobytes()
            if key not in cache:
                cache[key] = stacked(v, var)[1:]
            return cache[key][k]

        fd_pose = _fd(lambda v: feat(v, 0), x, eps)
        fd_l = _fd(lambda v: feat(v, 1), x, eps)
        fd_y = _fd(lambda v: feat(v, 2), x, eps)
        fd_g = _fd(lambda v: feat(v, 3), x, eps)

        n1 = N_JOINTS if var == "q" else N_PARAMS
        J = {k: [getattr(st, f"J_{k}_{var}") for st in s] for k in ("r", "t")}
        out[f"J_r,{var} (robot 1)"] = _rel(fd_pose[0:4, :n1], J["r"][0])
        out[f"J_t,{var} (robot 1)"] = _rel(fd_pose[4:7, :n1], J["t"][0][1:])
        out[f"J_r,{var} (robot 2)"] = _rel(fd_pose[7:11, n1:], J["r"][1])
        out[f"J_t,{var} (robot 2)"] = _rel(fd_pose[11:14, n1:], J["t"][1][1:])

        (_, J_y, _), _, _ = stacked_sightline(s, var)
        out[f"J_y,{var}"] = _rel(fd_y, J_y[1:])
        if var == "a":
            out["J_l,a"] = _rel(fd_l, line_direction_param_jacobian(s)[1:])
        rows = task_constraints(s, geom, THETA, D_IMAGE, BAND, ETA, var=var).rows
        if len(rows) != fd_g.shape[0]:
            raise RuntimeError("degenerate constraint geometry in check state")
        for i, row in enumerate(rows):
            name = f"VFI {row.kind},{var}"
            out[name] = max(out.get(name, 0.0), _rel(fd_g[i], -row.coefficients))
    return out


def jacobian_suite(trials: int = 100, seed: int = 0) -> dict:
    """Worst relative error per Jacobian over ``trials`` random states."""
    rng = np.random.default_rng(seed)
    geom = _geometry()
    worst: dict = {}
    for _ in range(trials):
        models = (random_model(rng), random_model(rng))
        q = np.concatenate([rng.uniform(m.q_min, m.q_max) for m in models])
        a = np.concatenate([m.nominal_parameters() + 1e-3 * rng.standard_normal(N_PARAMS)
                            for m in models])
        for name, err in check_state(models, q, a, geom).items():
            worst[name] = max(worst.get(name, 0.0), err)
    return worst


def suite_passed(results: dict, tol: float = TOLERANCE) -> bool:
    return all(err < tol for err in results.values())
