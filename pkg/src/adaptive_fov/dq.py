"""Quaternion and dual-quaternion algebra.

Quaternions are stored as ``(w, x, y, z)``. Poses are unit dual quaternions
``x = r + 0.5 eps t r`` with rotation ``r`` and pure translation ``t``.

The :class:`Quaternion` / :class:`DualQuaternion` classes are the public
value types. Hot loops (kinematics, Jacobians) work directly on length-4
numpy arrays through :func:`hplus4` / :func:`hminus4` and friends.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

UNIT_TOL = 1e-12
ADJOINT_UNIT_TOL = 1e-9
POSE_UNIT_TOL = 1e-9

#: vec4(q*) = C4 @ vec4(q)
C4 = np.diag([1.0, -1.0, -1.0, -1.0])


class DomainError(ValueError):
    """Raised when an operation receives a value outside its domain."""


def hplus4(q) -> np.ndarray:
    """Left Hamilton operator: ``vec4(q * b) = hplus4(q) @ vec4(b)``."""
    w, x, y, z = q
    return np.array([
        [w, -x, -y, -z],
        [x, w, -z, y],
        [y, z, w, -x],
        [z, -y, x, w],
    ])


def hminus4(q) -> np.ndarray:
    """Right Hamilton operator: ``vec4(a * q) = hminus4(q) @ vec4(a)``."""
    w, x, y, z = q
    return np.array([
        [w, -x, -y, -z],
        [x, w, z, -y],
        [y, -z, w, x],
        [z, y, -x, w],
    ])


def qmul_array(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def conj_array(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def rotate_array(r, v3) -> np.ndarray:
    """Rotate a 3-vector by the unit quaternion ``r`` (no unit check)."""
    w = r[0]
    u = np.asarray(r[1:4])
    v3 = np.asarray(v3, dtype=float)
    t = 2.0 * np.cross(u, v3)
    return v3 + w * t + np.cross(u, t)


def rotation_matrix_array(r) -> np.ndarray:
    w, x, y, z = r
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@dataclass(frozen=True, eq=False)
class Quaternion:
    """Real quaternion ``w + x i + y j + z k``."""

    w: float = 0.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    @classmethod
    def from_vec4(cls, v) -> "Quaternion":
        v = np.asarray(v, dtype=float).reshape(4)
        return cls(float(v[0]), float(v[1]), float(v[2]), float(v[3]))

    @classmethod
    def pure(cls, v3) -> "Quaternion":
        v = np.asarray(v3, dtype=float).reshape(3)
        return cls(0.0, float(v[0]), float(v[1]), float(v[2]))

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Quaternion":
        """Rotation of ``angle`` radians about ``axis`` (normalized here)."""
        axis = np.asarray(axis, dtype=float)
        n = np.linalg.norm(axis)
        if n == 0.0:
            raise DomainError("rotation axis must be non-zero")
        s = math.sin(angle / 2.0) / n
        return cls(math.cos(angle / 2.0), axis[0] * s, axis[1] * s, axis[2] * s)

    @property
    def vec(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def norm(self) -> float:
        return math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)

    def conj(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def normalized(self) -> "Quaternion":
        n = self.norm()
        if n == 0.0:
            raise DomainError("cannot normalize the zero quaternion")
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n)

    def is_pure(self, tol: float = UNIT_TOL) -> bool:
        return abs(self.w) <= tol

    def is_unit(self, tol: float = UNIT_TOL) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def dot(self, other: "Quaternion") -> float:
        return self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z

    def __mul__(self, other):
        if isinstance(other, Quaternion):
            return qmul(self, other)
        if isinstance(other, (int, float, np.floating)):
            return Quaternion(self.w * other, self.x * other, self.y * other, self.z * other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return self * other
        return NotImplemented

    def __add__(self, other):
        if isinstance(other, (int, float, np.floating)):
            other = Quaternion(float(other))
        if not isinstance(other, Quaternion):
            return NotImplemented
        return Quaternion(self.w + other.w, self.x + other.x, self.y + other.y, self.z + other.z)

    __radd__ = __add__

    def __neg__(self):
        return Quaternion(-self.w, -self.x, -self.y, -self.z)

    def __sub__(self, other):
        if isinstance(other, (int, float, np.floating)):
            other = Quaternion(float(other))
        if not isinstance(other, Quaternion):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __truediv__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return self * (1.0 / other)
        return NotImplemented

    def __eq__(self, other):
        if not isinstance(other, Quaternion):
            return NotImplemented
        return (self.w, self.x, self.y, self.z) == (other.w, other.x, other.y, other.z)

    def __hash__(self):
        return hash((self.w, self.x, self.y, self.z))

    def isclose(self, other: "Quaternion", atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.vec, other.vec, rtol=0.0, atol=atol))


I = Quaternion(0.0, 1.0, 0.0, 0.0)
J = Quaternion(0.0, 0.0, 1.0, 0.0)
K = Quaternion(0.0, 0.0, 0.0, 1.0)
ONE = Quaternion(1.0)


def qmul(a: Quaternion, b: Quaternion) -> Quaternion:
    """Hamilton product."""
    return Quaternion(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )


def hamilton_plus4(q: Quaternion) -> np.ndarray:
    return hplus4(q.vec)


def hamilton_minus4(q: Quaternion) -> np.ndarray:
    return hminus4(q.vec)


def vec4(q: Quaternion) -> np.ndarray:
    return q.vec


def inv_vec4(v) -> Quaternion:
    return Quaternion.from_vec4(v)


def vec3(q: Quaternion, tol: float = UNIT_TOL) -> np.ndarray:
    if not q.is_pure(tol):
        raise DomainError(f"vec3 requires a pure quaternion, got w={q.w!r}")
    return np.array([q.x, q.y, q.z])


def inv_vec3(v) -> Quaternion:
    return Quaternion.pure(v)


def adjoint(r: Quaternion, p: Quaternion) -> Quaternion:
    """``r p r*`` for a unit ``r``; the result of rotating ``p``."""
    if not r.is_unit(ADJOINT_UNIT_TOL):
        raise DomainError(f"adjoint requires a unit quaternion, |r|={r.norm()!r}")
    return qmul(qmul(r, p), r.conj())


@dataclass(frozen=True, eq=False)
class DualQuaternion:
    """``primary + eps * dual`` with eps^2 = 0."""

    primary: Quaternion
    dual: Quaternion

    @classmethod
    def identity(cls) -> "DualQuaternion":
        return cls(ONE, Quaternion())

    @classmethod
    def from_vec8(cls, v) -> "DualQuaternion":
        v = np.asarray(v, dtype=float).reshape(8)
        return cls(Quaternion.from_vec4(v[:4]), Quaternion.from_vec4(v[4:]))

    @property
    def vec8(self) -> np.ndarray:
        return np.concatenate([self.primary.vec, self.dual.vec])

    def __mul__(self, other):
        if isinstance(other, DualQuaternion):
            return DualQuaternion(
                self.primary * other.primary,
                self.primary * other.dual + self.dual * other.primary,
            )
        if isinstance(other, (int, float, np.floating)):
            return DualQuaternion(self.primary * other, self.dual * other)
        return NotImplemented

    def conj(self) -> "DualQuaternion":
        return DualQuaternion(self.primary.conj(), self.dual.conj())

    def is_unit(self, tol: float = POSE_UNIT_TOL) -> bool:
        return (abs(self.primary.norm() - 1.0) <= tol
                and abs(self.primary.dot(self.dual)) <= tol)

    def normalized(self) -> "DualQuaternion":
        """Project onto the unit dual quaternions (renormalize drift)."""
        r = self.primary.normalized()
        t = 2.0 * (self.dual * self.primary.conj())
        t = Quaternion(0.0, t.x, t.y, t.z) / self.primary.norm() ** 2
        return pose_from(r, t)

    def rotation(self) -> Quaternion:
        return self.primary

    def translation(self) -> Quaternion:
        return pose_decompose(self)[1]


@dataclass(frozen=True, eq=False)
class PluckerLine:
    """Line with unit pure ``direction`` and pure ``moment`` = p x direction."""

    direction: Quaternion
    moment: Quaternion

    def __post_init__(self):
        if not self.direction.is_pure(1e-10) or not self.moment.is_pure(1e-10):
            raise DomainError("Plucker line components must be pure")
        if abs(self.direction.norm() - 1.0) > 1e-10:
            raise DomainError("Plucker line direction must be unit")
        if abs(self.direction.dot(self.moment)) > 1e-10:
            raise DomainError("Plucker line moment must be orthogonal to direction")

    @classmethod
    def through(cls, point, direction) -> "PluckerLine":
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        p = np.asarray(point, dtype=float)
        return cls(Quaternion.pure(d), Quaternion.pure(np.cross(p, d)))

    def as_dual(self) -> DualQuaternion:
        return DualQuaternion(self.direction, self.moment)

    def distance_to(self, point) -> float:
        """Euclidean distance from a 3-vector to the line."""
        l = vec3(self.direction)
        m = vec3(self.moment)
        return float(np.linalg.norm(np.cross(np.asarray(point, dtype=float), l) - m))


def pose_from(r: Quaternion, t: Quaternion) -> DualQuaternion:
    """``r + 0.5 eps t r``."""
    return DualQuaternion(r, 0.5 * (t * r))


def _require_unit_pose(x: DualQuaternion) -> None:
    if not x.is_unit(POSE_UNIT_TOL):
        raise DomainError("pose must be a unit dual quaternion")


def pose_compose(a: DualQuaternion, b: DualQuaternion) -> DualQuaternion:
    _require_unit_pose(a)
    _require_unit_pose(b)
    return a * b


def pose_decompose(x: DualQuaternion) -> tuple[Quaternion, Quaternion]:
    """Return ``(r, t)`` with ``t = 2 dual r*``."""
    _require_unit_pose(x)
    t = 2.0 * (x.dual * x.primary.conj())
    return x.primary, Quaternion(0.0, t.x, t.y, t.z)


def quaternion_from_matrix(R) -> np.ndarray:
    """vec4 of the unit quaternion for a rotation matrix (w >= 0)."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q
