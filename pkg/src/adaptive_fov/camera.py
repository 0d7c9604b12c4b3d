"""Pinhole camera measurement space.

Pixels ``(u, v)`` are measured from the principal point. The optical axis is
``-k`` in the optical frame, so a pixel maps to the ray
``u s_x i + v s_y j - f k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dq import (DomainError, DualQuaternion, Quaternion, adjoint, pose_decompose,
                 rotate_array, conj_array)

#: guard for the estimated line direction singularity (m)
D_MIN = 1e-3


class DegenerateGeometryError(DomainError):
    """Two points that must be distinct coincide (within ``D_MIN``)."""


@dataclass(frozen=True)
class PinholeIntrinsics:
    f: float            # focal length, m
    s_x: float          # pixel pitch, m/px
    s_y: float
    width: int          # px
    height: int

    def __post_init__(self):
        if not (self.f > 0 and self.s_x > 0 and self.s_y > 0):
            raise ValueError("intrinsics require f, s_x, s_y > 0")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("resolution must be positive")

    def in_image(self, u: float, v: float) -> bool:
        return abs(u) <= self.width / 2 and abs(v) <= self.height / 2

    def pixel_angle(self) -> float:
        """Angle subtended by one pixel at the optical axis."""
        return math.atan2(max(self.s_x, self.s_y), self.f)


@dataclass(frozen=True)
class LineMeasurement:
    y: Quaternion
    pixel: tuple
    timestamp: float = 0.0


@dataclass(frozen=True)
class PixelProjection:
    u: float
    v: float
    behind: bool = False


def measured_direction_array(intr: PinholeIntrinsics, u: float, v: float) -> np.ndarray:
    p = np.array([u * intr.s_x, v * intr.s_y, -intr.f])
    return p / np.linalg.norm(p)


def measure_line_direction(intr: PinholeIntrinsics, u: float, v: float) -> Quaternion:
    """Unit line direction through the optical centre for pixel ``(u, v)``.

    Never singular since the ray always has a ``-f`` component.
    """
    return Quaternion.pure(measured_direction_array(intr, u, v))


def line_direction_array(t1, t2) -> np.ndarray:
    h = np.asarray(t1, dtype=float) - np.asarray(t2, dtype=float)
    n = np.linalg.norm(h)
    if n <= D_MIN:
        raise DegenerateGeometryError(f"points closer than {D_MIN} m ({n:.3e} m)")
    return h / n


def estimated_line_direction(t1: Quaternion, t2: Quaternion) -> Quaternion:
    """Direction from the camera position ``t2`` to the tool tip ``t1``."""
    return Quaternion.pure(line_direction_array(t1.vec[1:], t2.vec[1:]))


def to_optical_frame(r2: Quaternion, l_world: Quaternion) -> Quaternion:
    return adjoint(r2.conj(), l_world)


def optical_direction_array(r2, t1, t2) -> np.ndarray:
    """Camera-to-tip direction expressed in the optical frame (3-vector)."""
    return rotate_array(conj_array(r2), line_direction_array(t1, t2))


def project_array(intr: PinholeIntrinsics, r2, t2, p_world) -> PixelProjection:
    p = rotate_array(conj_array(r2), np.asarray(p_world, dtype=float) - np.asarray(t2, dtype=float))
    if np.linalg.norm(p) <= D_MIN:
        raise DegenerateGeometryError("point coincides with the optical centre")
    if p[2] >= 0.0:
        return PixelProjection(math.nan, math.nan, behind=True)
    scale = -intr.f / p[2]
    return PixelProjection(scale * p[0] / intr.s_x, scale * p[1] / intr.s_y)


def project_point(intr: PinholeIntrinsics, camera_pose: DualQuaternion,
                  p_world: Quaternion) -> PixelProjection:
    r, t = pose_decompose(camera_pose)
    return project_array(intr, r.vec, t.vec[1:], p_world.vec[1:])


def noisy_pixel(u: float, v: float, sigma: float, rng: np.random.Generator | None,
                quantize: bool = False) -> tuple[float, float]:
    """Additive Gaussian pixel noise followed by optional rounding."""
    if sigma > 0.0:
        if rng is None:
            raise ValueError("a random generator is required when sigma > 0")
        u = u + sigma * rng.standard_normal()
        v = v + sigma * rng.standard_normal()
    if quantize:
        u, v = float(np.round(u)), float(np.round(v))
    return float(u), float(v)


@dataclass(frozen=True)
class FovRegion:
    """Centered pixel rectangle used as the real field of view."""

    width: float
    height: float

    def contains(self, u: float, v: float) -> bool:
        return abs(u) <= self.width / 2 and abs(v) <= self.height / 2
