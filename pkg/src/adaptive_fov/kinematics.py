"""Parameterized serial-chain kinematics with joint and parameter Jacobians.

Each branch is an 8-joint chain

    base(a) * joint_1(q_1, a) * ... * joint_8(q_8, a) * effector(a)

with a 44-entry parameter vector laid out as::

    a[0:6]    base pose      (tx, ty, tz, rx, ry, rz)
    a[6:38]   DH rows        (theta_offset, d, a, alpha) for joints 1..8
    a[38:44]  effector pose  (tx, ty, tz, rx, ry, rz)

Pose parameters are a translation followed by intrinsic x-y-z Euler angles,
``T = Trans(t) Rx(rx) Ry(ry) Rz(rz)``. A DH joint is the standard
``Rz(theta) Tz(d) Tx(a) Rx(alpha)``; a revolute joint adds ``q`` to
``theta`` and a prismatic joint adds ``q`` to ``d``.

Every parameter therefore drives exactly one elementary factor (a rotation
about, or translation along, a local axis). Derivatives follow from the
world-frame axis of each factor, which is what :func:`forward_kinematics`
accumulates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dq import DualQuaternion, Quaternion, pose_from, rotation_matrix_array

N_JOINTS = 8
N_PARAMS = 44
BASE = slice(0, 6)
DH = slice(6, 38)
EFFECTOR = slice(38, 44)

REVOLUTE = "revolute"
PRISMATIC = "prismatic"

_ROT, _TRANS = 0, 1
# (kind, local axis) for the six pose parameters and the four DH entries
_POSE_FACTORS = [(_TRANS, 0), (_TRANS, 1), (_TRANS, 2), (_ROT, 0), (_ROT, 1), (_ROT, 2)]
_DH_FACTORS = [(_ROT, 2), (_TRANS, 2), (_TRANS, 0), (_ROT, 0)]


def link_frame_index(link: int) -> int:
    """Factor index of the frame attached to ``link``.

    ``0`` is the frame after the base pose, ``1..8`` the DH frame after joint
    ``i`` and ``9`` the effector frame.
    """
    if not 0 <= link <= N_JOINTS + 1:
        raise ValueError(f"link index must be in [0, {N_JOINTS + 1}], got {link}")
    if link == N_JOINTS + 1:
        return N_PARAMS
    return 6 + 4 * link


@dataclass(frozen=True)
class SerialChainModel:
    """One robot branch: joint types, nominal parameters and joint limits."""

    joint_types: tuple
    dh: np.ndarray              # (8, 4) theta_offset, d, a, alpha
    base: np.ndarray            # (6,)
    effector: np.ndarray        # (6,)
    q_min: np.ndarray
    q_max: np.ndarray
    qd_max: np.ndarray
    name: str = "robot"
    _factor_kind: np.ndarray = field(init=False, repr=False, compare=False)
    _factor_axis: np.ndarray = field(init=False, repr=False, compare=False)
    _joint_factor: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        types = tuple(self.joint_types)
        if len(types) != N_JOINTS or any(t not in (REVOLUTE, PRISMATIC) for t in types):
            raise ValueError("joint_types must list 8 entries of 'revolute'/'prismatic'")
        object.__setattr__(self, "joint_types", types)
        for name, shape in (("dh", (N_JOINTS, 4)), ("base", (6,)), ("effector", (6,)),
                            ("q_min", (N_JOINTS,)), ("q_max", (N_JOINTS,)),
                            ("qd_max", (N_JOINTS,))):
            arr = np.array(getattr(self, name), dtype=float).reshape(shape)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.q_min >= self.q_max):
            raise ValueError("joint limits require q_min < q_max")
        if np.any(self.qd_max <= 0.0):
            raise ValueError("joint velocity limits must be positive")

        factors = _POSE_FACTORS + _DH_FACTORS * N_JOINTS + _POSE_FACTORS
        object.__setattr__(self, "_factor_kind", np.array([k for k, _ in factors]))
        object.__setattr__(self, "_factor_axis", np.array([ax for _, ax in factors]))
        jf = np.array([6 + 4 * i + (0 if t == REVOLUTE else 1) for i, t in enumerate(types)])
        object.__setattr__(self, "_joint_factor", jf)

    @property
    def joint_count(self) -> int:
        return N_JOINTS

    @property
    def parameter_count(self) -> int:
        return N_PARAMS

    def nominal_parameters(self) -> np.ndarray:
        return np.concatenate([self.base, self.dh.reshape(-1), self.effector])

    def joint_parameter_index(self) -> np.ndarray:
        """Parameter index that each joint value is added to."""
        return self._joint_factor.copy()

    def is_angular_parameter(self) -> np.ndarray:
        """Boolean mask over the 44 parameters: True for angles, False for lengths."""
        return self._factor_kind == _ROT


@dataclass(frozen=True)
class KinematicState:
    """FK result for one branch at ``(q, a)``.

    ``r`` is vec4 of the effector rotation, ``t`` the 3-vector translation.
    Jacobians are in vec4 form (4 rows), so ``J_t_*[0]`` is identically zero.
    """

    r: np.ndarray
    t: np.ndarray
    J_r_q: np.ndarray
    J_t_q: np.ndarray
    J_r_a: np.ndarray
    J_t_a: np.ndarray
    frame_r: np.ndarray = field(repr=False)     # (45, 4) rotation before each factor
    frame_t: np.ndarray = field(repr=False)     # (45, 3) translation before each factor
    axes: np.ndarray = field(repr=False)        # (44, 3) world axis of each factor
    kinds: np.ndarray = field(repr=False)
    joint_factor: np.ndarray = field(repr=False)

    @property
    def rotation(self) -> Quaternion:
        return Quaternion.from_vec4(self.r)

    @property
    def translation(self) -> Quaternion:
        return Quaternion.pure(self.t)

    @property
    def pose(self) -> DualQuaternion:
        return pose_from(self.rotation, self.translation)

    def frame(self, link: int) -> tuple[np.ndarray, np.ndarray]:
        """(rotation vec4, translation) of a link frame."""
        m = link_frame_index(link)
        return self.frame_r[m].copy(), self.frame_t[m].copy()

    def point(self, link: int, offset=(0.0, 0.0, 0.0)):
        """World position of a point fixed in ``link`` and its Jacobians.

        Returns ``(p, J_p_q, J_p_a)`` with the Jacobians in vec4 form.
        """
        m = link_frame_index(link)
        offset = np.asarray(offset, dtype=float)
        p = self.frame_t[m] + rotation_matrix_array(self.frame_r[m]) @ offset
        J_a = _translation_jacobian(p, self.frame_t[:m], self.axes[:m], self.kinds[:m])
        J_a = np.hstack([J_a, np.zeros((4, N_PARAMS - m))])
        return p, J_a[:, self.joint_factor], J_a


def _translation_jacobian(p, frame_t, axes, kinds) -> np.ndarray:
    rot = (kinds == _ROT)[:, None]
    cols = np.where(rot, np.cross(axes, p - frame_t), axes)
    J = np.zeros((4, len(kinds)))
    J[1:] = cols.T
    return J


def _rotation_jacobian(r, axes, kinds) -> np.ndarray:
    # dr/ds = 0.5 * w * r for a rotation factor with world axis w
    w0, wv = r[0], r[1:]
    J = np.zeros((4, len(kinds)))
    J[0] = -axes @ wv
    J[1:] = (w0 * axes + np.cross(axes, wv)).T
    J *= 0.5
    J[:, kinds != _ROT] = 0.0
    return J


def _batch_rotation_matrices(qs: np.ndarray) -> np.ndarray:
    w, x, y, z = qs.T
    R = np.empty((len(qs), 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def factor_values(model: SerialChainModel, q, a) -> np.ndarray:
    """Scalar driving each of the 44 elementary factors (``a`` plus joints)."""
    s = np.array(a, dtype=float).reshape(N_PARAMS)
    s[model._joint_factor] += np.asarray(q, dtype=float).reshape(N_JOINTS)
    return s


def forward_kinematics(model: SerialChainModel, q, a) -> KinematicState:
    q = np.asarray(q, dtype=float)
    a = np.asarray(a, dtype=float)
    if q.shape != (N_JOINTS,) or a.shape != (N_PARAMS,):
        raise ValueError(f"expected q of shape (8,) and a of shape (44,), got {q.shape}, {a.shape}")
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(a))):
        raise ValueError("forward_kinematics received non-finite input")

    s = factor_values(model, q, a)
    kinds = model._factor_kind
    axes_local = model._factor_axis
    frame_r = np.empty((N_PARAMS + 1, 4))
    frame_t = np.empty((N_PARAMS + 1, 3))

    rw, rx, ry, rz = 1.0, 0.0, 0.0, 0.0
    tx = ty = tz = 0.0
    for k in range(N_PARAMS):
        frame_r[k] = (rw, rx, ry, rz)
        frame_t[k] = (tx, ty, tz)
        ax = axes_local[k]
        v = s[k]
        if kinds[k] == _ROT:
            c, sn = math.cos(0.5 * v), math.sin(0.5 * v)
            # r <- r * (c + sn * e_ax)
            if ax == 0:
                rw, rx, ry, rz = rw * c - rx * sn, rx * c + rw * sn, ry * c + rz * sn, rz * c - ry * sn
            elif ax == 1:
                rw, rx, ry, rz = rw * c - ry * sn, rx * c - rz * sn, ry * c + rw * sn, rz * c + rx * sn
            else:
                rw, rx, ry, rz = rw * c - rz * sn, rx * c + ry * sn, ry * c - rx * sn, rz * c + rw * sn
        else:
            # t <- t + v * (column ax of R(r))
            if ax == 0:
                ex = (1 - 2 * (ry * ry + rz * rz), 2 * (rx * ry + rw * rz), 2 * (rx * rz - rw * ry))
            elif ax == 1:
                ex = (2 * (rx * ry - rw * rz), 1 - 2 * (rx * rx + rz * rz), 2 * (ry * rz + rw * rx))
            else:
                ex = (2 * (rx * rz + rw * ry), 2 * (ry * rz - rw * rx), 1 - 2 * (rx * rx + ry * ry))
            tx += v * ex[0]
            ty += v * ex[1]
            tz += v * ex[2]
    frame_r[N_PARAMS] = (rw, rx, ry, rz)
    frame_t[N_PARAMS] = (tx, ty, tz)

    R = _batch_rotation_matrices(frame_r[:N_PARAMS])
    axes = R[np.arange(N_PARAMS), :, axes_local]

    r = frame_r[N_PARAMS].copy()
    t = frame_t[N_PARAMS].copy()
    J_t_a = _translation_jacobian(t, frame_t[:N_PARAMS], axes, kinds)
    J_r_a = _rotation_jacobian(r, axes, kinds)
    jf = model._joint_factor
    return KinematicState(
        r=r, t=t,
        J_r_q=J_r_a[:, jf], J_t_q=J_t_a[:, jf],
        J_r_a=J_r_a, J_t_a=J_t_a,
        frame_r=frame_r, frame_t=frame_t, axes=axes, kinds=kinds, joint_factor=jf,
    )


def pose_only(model: SerialChainModel, q, a) -> tuple[np.ndarray, np.ndarray]:
    """Effector (r, t) without Jacobians."""
    st = forward_kinematics(model, q, a)
    return st.r, st.t


def jacobians_fd_check(model: SerialChainModel, q, a, eps: float = 1e-6) -> float:
    """Max of |analytic - central difference| / (1 + |analytic|) over all four Jacobians."""
    if not 1e-8 <= eps <= 1e-4:
        raise ValueError("eps must lie in [1e-8, 1e-4]")
    q = np.asarray(q, dtype=float)
    a = np.asarray(a, dtype=float)
    st = forward_kinematics(model, q, a)

    def fd(var, n, make):
        Jr = np.zeros((4, n))
        Jt = np.zeros((4, n))
        for i in range(n):
            d = np.zeros(n)
            d[i] = eps
            sp = forward_kinematics(model, *make(var + d))
            sm = forward_kinematics(model, *make(var - d))
            Jr[:, i] = (sp.r - sm.r) / (2 * eps)
            Jt[1:, i] = (sp.t - sm.t) / (2 * eps)
        return Jr, Jt

    Jr_q, Jt_q = fd(q, N_JOINTS, lambda v: (v, a))
    Jr_a, Jt_a = fd(a, N_PARAMS, lambda v: (q, v))
    err = 0.0
    for ana, num in ((st.J_r_q, Jr_q), (st.J_t_q, Jt_q), (st.J_r_a, Jr_a), (st.J_t_a, Jt_a)):
        err = max(err, float(np.max(np.abs(ana - num) / (1.0 + np.abs(ana)))))
    return err


def random_model(rng: np.random.Generator, prismatic: tuple = (1,)) -> SerialChainModel:
    """Random well-scaled chain; used by the Jacobian checks."""
    types = tuple(PRISMATIC if i in prismatic else REVOLUTE for i in range(N_JOINTS))
    dh = np.column_stack([
        rng.uniform(-math.pi, math.pi, N_JOINTS),
        rng.uniform(-0.2, 0.2, N_JOINTS),
        rng.uniform(-0.2, 0.2, N_JOINTS),
        rng.uniform(-math.pi, math.pi, N_JOINTS),
    ])
    base = np.concatenate([rng.uniform(-0.5, 0.5, 3), rng.uniform(-math.pi, math.pi, 3)])
    eff = np.concatenate([rng.uniform(-0.1, 0.1, 3), rng.uniform(-math.pi, math.pi, 3)])
    return SerialChainModel(
        joint_types=types, dh=dh, base=base, effector=eff,
        q_min=np.full(N_JOINTS, -math.pi), q_max=np.full(N_JOINTS, math.pi),
        qd_max=np.full(N_JOINTS, 1.0), name="random",
    )


def solve_ik(model: SerialChainModel, a, t_target, r_target=None, q0=None,
             iters: int = 200, tol: float = 1e-12, damping: float = 1e-4,
             q_nominal=None, posture_gain: float = 0.0):
    """Damped least-squares IK on position (and optionally rotation).

    Rotation is matched through ``r* r_target -> +-1``. An optional posture
    term pulls redundant joints toward ``q_nominal``. Returns ``(q, residual)``.
    """
    from .dq import C4, conj_array, hminus4, qmul_array

    q = np.array(model.q_min + model.q_max, dtype=float) / 2 if q0 is None else np.array(q0, float)
    t_target = np.asarray(t_target, dtype=float)
    res = np.inf
    for _ in range(iters):
        st = forward_kinematics(model, q, a)
        e_t = st.t - t_target
        J = st.J_t_q[1:]
        e = e_t
        if r_target is not None:
            r_target = np.asarray(r_target, dtype=float)
            prod = qmul_array(conj_array(st.r), r_target)
            one = np.array([1.0, 0.0, 0.0, 0.0])
            e_r = prod - one if np.linalg.norm(prod - one) <= np.linalg.norm(prod + one) else prod + one
            J = np.vstack([J, hminus4(r_target) @ C4 @ st.J_r_q])
            e = np.concatenate([e_t, e_r])
        res = float(np.linalg.norm(e))
        if res < tol:
            break
        JJ = J @ J.T + damping * np.eye(J.shape[0])
        dq = -J.T @ np.linalg.solve(JJ, e)
        if posture_gain > 0.0 and q_nominal is not None:
            P = np.eye(N_JOINTS) - J.T @ np.linalg.solve(JJ, J)
            dq += posture_gain * P @ (np.asarray(q_nominal) - q)
        q = np.clip(q + dq, model.q_min, model.q_max)
    return q, res
