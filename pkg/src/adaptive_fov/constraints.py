"""Linear inequality rows for the control and adaptation QPs.

Every task-space row is a vector-field inequality on a distance-like function
``d`` with safe value ``d_safe``:

    keep-out:  d_dot >= -eta (d - d_safe)   ->  -J_d u <= eta (d - d_safe)
    keep-in:   d_dot <=  eta (d_safe - d)   ->   J_d u <= eta (d_safe - d)

The builders only need the point positions and their Jacobians with respect
to the decision variable, so the same code produces joint-space rows
(``u = q_dot``) and parameter-space rows (``u = a_dot``).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .camera import line_direction_array
from .dq import PluckerLine, conj_array, rotate_array, vec3
from .sightline import line_direction_jacobian, optical_direction_jacobian

log = logging.getLogger(__name__)

KEEP_OUT = "keep-out"
KEEP_IN = "keep-in"

JOINT_LIMIT = "joint-limit"
POINT_POINT = "point-point"
POINT_PLANE = "point-plane"
POINT_LINE = "point-line"
FOV_CONE = "fov-cone"
FOCAL_NEAR = "focal-near"
FOCAL_FAR = "focal-far"


@dataclass(frozen=True)
class ConstraintRow:
    coefficients: np.ndarray
    bound: float
    kind: str
    value: float = math.nan      # constraint function value, for logging


@dataclass
class ConstraintSet:
    """Rows ``A u <= b`` over a decision variable of width ``n``."""

    n: int
    rows: list = field(default_factory=list)

    def add(self, row: ConstraintRow | None) -> None:
        if row is None:
            return
        if row.coefficients.shape != (self.n,):
            raise ValueError(f"row width {row.coefficients.shape} does not match {self.n}")
        if not (np.all(np.isfinite(row.coefficients)) and np.isfinite(row.bound)):
            raise ValueError(f"non-finite {row.kind} row")
        self.rows.append(row)

    def extend(self, rows) -> None:
        for r in rows:
            self.add(r)

    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.rows:
            return np.zeros((0, self.n)), np.zeros(0)
        return (np.array([r.coefficients for r in self.rows]),
                np.array([r.bound for r in self.rows]))

    @property
    def kinds(self) -> list:
        return [r.kind for r in self.rows]

    def __len__(self):
        return len(self.rows)


def _j3(J) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    return J[1:] if J.shape[0] == 4 else J


def _vfi(d, J_d, d_safe, eta, direction, kind) -> ConstraintRow:
    if direction == KEEP_OUT:
        return ConstraintRow(-J_d, eta * (d - d_safe), kind, d - d_safe)
    if direction == KEEP_IN:
        return ConstraintRow(J_d, eta * (d_safe - d), kind, d_safe - d)
    raise ValueError(f"unknown direction {direction!r}")


def point_point_row(p_a, J_a, p_b, J_b, d_safe: float, eta: float,
                    direction: str = KEEP_OUT, kind: str = POINT_POINT) -> ConstraintRow | None:
    """Distance between two moving points. ``None`` if they coincide."""
    diff = np.asarray(p_a, dtype=float) - np.asarray(p_b, dtype=float)
    d = float(np.linalg.norm(diff))
    if d < 1e-12:
        log.warning("coincident points in %s constraint; row skipped", kind)
        return None
    J_d = diff @ (_j3(J_a) - _j3(J_b)) / d
    return _vfi(d, J_d, d_safe, eta, direction, kind)


def point_plane_row(p, J_p, normal, offset: float, d_safe: float, eta: float,
                    direction: str = KEEP_OUT) -> ConstraintRow:
    """Signed distance ``n.p - offset`` to a plane with unit normal ``n``."""
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    d = float(n @ np.asarray(p, dtype=float) - offset)
    return _vfi(d, n @ _j3(J_p), d_safe, eta, direction, POINT_PLANE)


def point_line_row(p, J_p, line: PluckerLine, d_safe: float, eta: float,
                   direction: str = KEEP_OUT) -> ConstraintRow | None:
    l = vec3(line.direction)
    m = vec3(line.moment)
    c = np.cross(np.asarray(p, dtype=float), l) - m
    d = float(np.linalg.norm(c))
    if d < 1e-12:
        log.warning("point on the line in point-line constraint; row skipped")
        return None
    # d(p x l) = -[l]x dp
    J_d = (c / d) @ (-np.cross(l, _j3(J_p).T).T)
    return _vfi(d, J_d, d_safe, eta, direction, POINT_LINE)


def fov_margin(y, theta_safe: float) -> float:
    """Cone margin ``<-k, y> - cos(theta_safe)`` for an optical-frame direction."""
    return float(-y[2] - math.cos(theta_safe))


def fov_angle(y) -> float:
    """Angle between the optical axis (-k) and direction ``y``."""
    return float(math.atan2(math.hypot(y[0], y[1]), -y[2]))


def fov_cone_row(y, J_y, theta_safe: float, eta: float) -> ConstraintRow:
    """Keep ``y`` inside the cone of half-angle ``theta_safe`` about ``-k``.

    ``J_y`` is the (vec4) Jacobian of the optical-frame direction.
    """
    g = fov_margin(y, theta_safe)
    J_g = -np.asarray(J_y)[-1]
    return ConstraintRow(-J_g, eta * g, FOV_CONE, g)


def sightline(tip_t, tip_J_t, cam_r, cam_t, cam_J_t, cam_J_r):
    """Optical-frame direction to the tool tip and its Jacobian.

    ``tip_J_t`` / ``cam_J_*`` must already span the full decision variable.
    """
    h = np.asarray(tip_t) - np.asarray(cam_t)
    l = line_direction_array(tip_t, cam_t)
    J_l = line_direction_jacobian(h, tip_J_t - cam_J_t)
    J_y = optical_direction_jacobian(cam_r, l, J_l, cam_J_r)
    y = rotate_array(conj_array(cam_r), l)
    return y, J_y, l


def focal_band_rows(tip_t, tip_J, cam_t, cam_J, d_image: float, band: float,
                    eta: float) -> list:
    """Keep the tip-to-optical-centre distance within ``d_image +- band``."""
    if band <= 0.0:
        raise ValueError("focal band must be positive")
    near = point_point_row(tip_t, tip_J, cam_t, cam_J, d_image - band, eta, KEEP_OUT, FOCAL_NEAR)
    far = point_point_row(tip_t, tip_J, cam_t, cam_J, d_image + band, eta, KEEP_IN, FOCAL_FAR)
    return [r for r in (near, far) if r is not None]


def joint_limit_rows(q, q_min, q_max, qd_max, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Position and velocity limits as ``W q_dot <= w`` (2 rows per joint)."""
    q = np.asarray(q, dtype=float)
    n = q.size
    upper = np.minimum(qd_max, eta * (np.asarray(q_max) - q))
    lower = np.minimum(qd_max, eta * (q - np.asarray(q_min)))
    W = np.vstack([np.eye(n), -np.eye(n)])
    return W, np.concatenate([upper, lower])


def box_rows(x, x_min, x_max, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Box limits without a rate cap (used for parameter bounds)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    W = np.vstack([np.eye(n), -np.eye(n)])
    return W, np.concatenate([eta * (np.asarray(x_max) - x), eta * (x - np.asarray(x_min))])


# --- collision geometry ---------------------------------------------------


@dataclass(frozen=True)
class RobotPoint:
    """A point fixed to ``link`` of robot ``robot`` (0 or 1)."""

    robot: int
    link: int
    offset: tuple = (0.0, 0.0, 0.0)
    name: str = ""


@dataclass(frozen=True)
class EnvironmentPoint:
    point: RobotPoint
    avoid_plane: bool = True
    avoid_cylinder: bool = False


@dataclass(frozen=True)
class CollisionGeometry:
    env_points: tuple            # EnvironmentPoint x (4 per robot)
    pairs: tuple                 # (RobotPoint, RobotPoint, d_safe) x 5
    cylinder_center: tuple = (0.0, 0.0)
    cylinder_radius: float = 0.03
    top_height: float = 0.05
    plane_safe: float = 0.01
    cylinder_safe: float = 0.02
    eta: float = 2.0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("VFI gain must be positive")
        if self.plane_safe <= 0 or self.cylinder_safe <= 0 or self.cylinder_radius <= 0:
            raise ValueError("safe distances must be positive")
        for _, _, ds in self.pairs:
            if ds <= 0:
                raise ValueError("pair safe distances must be positive")

    def axis_line(self) -> PluckerLine:
        cx, cy = self.cylinder_center
        return PluckerLine.through((cx, cy, 0.0), (0.0, 0.0, 1.0))


def robot_point(states, pt: RobotPoint, var: str):
    """Position and Jacobian of a robot point over the stacked variable."""
    p, J_q, J_a = states[pt.robot].point(pt.link, pt.offset)
    J = J_q if var == "q" else J_a
    z = np.zeros_like(J)
    return p, (np.hstack([J, z]) if pt.robot == 0 else np.hstack([z, J]))


def collision_rows(states, geom: CollisionGeometry, var: str = "q") -> list:
    """Environment and inter-robot rows for both robots."""
    rows = []
    axis = geom.axis_line()
    for ep in geom.env_points:
        p, J = robot_point(states, ep.point, var)
        if ep.avoid_plane:
            rows.append(point_plane_row(p, J, (0.0, 0.0, 1.0), geom.top_height,
                                        geom.plane_safe, geom.eta))
        if ep.avoid_cylinder:
            rows.append(point_line_row(p, J, axis, geom.cylinder_radius + geom.cylinder_safe,
                                       geom.eta))
    for pa, pb, ds in geom.pairs:
        p1, J1 = robot_point(states, pa, var)
        p2, J2 = robot_point(states, pb, var)
        rows.append(point_point_row(p1, J1, p2, J2, ds, geom.eta))
    return [r for r in rows if r is not None]


def stacked_sightline(states, var: str = "q"):
    """Line of sight from robot 2's optical centre to robot 1's tip."""
    s1, s2 = states
    if var == "q":
        Jt1, Jt2, Jr2 = s1.J_t_q, s2.J_t_q, s2.J_r_q
    else:
        Jt1, Jt2, Jr2 = s1.J_t_a, s2.J_t_a, s2.J_r_a
    z1 = np.zeros_like(Jt1)
    z2 = np.zeros_like(Jt2)
    tip_J = np.hstack([Jt1, z2])
    cam_Jt = np.hstack([z1, Jt2])
    cam_Jr = np.hstack([np.zeros_like(s1.J_r_q if var == "q" else s1.J_r_a), Jr2])
    return sightline(s1.t, tip_J, s2.r, s2.t, cam_Jt, cam_Jr), tip_J, cam_Jt


def task_constraints(states, geom: CollisionGeometry, theta_safe: float, d_image: float,
                     band: float, eta_fov: float, var: str = "q",
                     include_focal: bool = True) -> ConstraintSet:
    """All task-space rows (collisions, FoV cone, focal band)."""
    n = 2 * (states[0].J_t_q.shape[1] if var == "q" else states[0].J_t_a.shape[1])
    cs = ConstraintSet(n)
    cs.extend(collision_rows(states, geom, var))
    (y, J_y, _), tip_J, cam_J = stacked_sightline(states, var)
    cs.add(fov_cone_row(y, J_y, theta_safe, eta_fov))
    if include_focal:
        cs.extend(focal_band_rows(states[0].t, tip_J, states[1].t, cam_J, d_image, band, eta_fov))
    return cs
