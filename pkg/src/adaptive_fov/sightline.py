"""Derivatives of the camera-to-tip line of sight.

The functions here are agnostic of the differentiation variable: callers pass
Jacobians with respect to joint velocities (16 columns) or parameter rates
(88 columns) and get the matching line-of-sight Jacobian back.
"""
from __future__ import annotations

import numpy as np

from .dq import C4, conj_array, hminus4, hplus4, qmul_array
from .camera import D_MIN, DegenerateGeometryError


def _pure(v3) -> np.ndarray:
    return np.array([0.0, v3[0], v3[1], v3[2]])


def line_direction_jacobian(h, J_h) -> np.ndarray:
    """Jacobian of ``l = h / |h|`` given ``vec4(h_dot) = J_h u``.

    ``A1 = 0.5 |h|^-3 H+(h) [H+(h) + H-(h)]`` carries the normalization term;
    for pure ``h`` it evaluates to ``-|h|^-3 h <h, .>``.
    """
    h = np.asarray(h, dtype=float)
    nh = float(np.linalg.norm(h))
    if nh <= D_MIN:
        raise DegenerateGeometryError(f"line of sight shorter than {D_MIN} m")
    h4 = _pure(h)
    Hp, Hm = hplus4(h4), hminus4(h4)
    A1 = 0.5 * nh ** -3 * Hp @ (Hp + Hm)
    A2 = J_h / nh
    A3 = A1 @ J_h
    return A2 + A3


def optical_direction_jacobian(r2, l, J_l, J_r2) -> np.ndarray:
    """Jacobian of ``y = r2* l r2`` (the line seen from the optical frame).

    ``B1`` differentiates the leading ``r2*``, ``B2`` the line itself and
    ``B3`` the trailing ``r2``.
    """
    r2 = np.asarray(r2, dtype=float)
    l4 = _pure(l)
    B1 = hminus4(qmul_array(l4, r2)) @ C4 @ J_r2
    B2 = hminus4(r2) @ hplus4(conj_array(r2)) @ J_l
    B3 = hplus4(qmul_array(conj_array(r2), l4)) @ J_r2
    return B1 + B2 + B3


def roll_about_line_row(r2, l, J_r2) -> np.ndarray:
    """Row mapping rates to ``<l, 2 r2_dot r2*>`` (angular velocity along the line)."""
    return 2.0 * _pure(l) @ hminus4(conj_array(r2)) @ J_r2

