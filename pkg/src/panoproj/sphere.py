"""Spherical coordinate conventions, viewpoint rotations and equirectangular mapping.

Convention:
  - phi: azimuth in (-pi, pi], positive toward image right.
  - theta: elevation in [-pi/2, pi/2], positive up.
  - Unit vector: (x, y, z) = (cos(theta) sin(phi), sin(theta), cos(theta) cos(phi)),
    i.e. x right, y up, z forward.
  - Equirectangular pixel coordinates are continuous; the center of integer
    pixel (i, j) sits at (i + 0.5, j + 0.5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from panoproj.errors import ValidationError

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi


def wrap_phi(phi):
    """Wrap azimuth into (-pi, pi]. Works on scalars and arrays."""
    if np.ndim(phi) == 0:
        return math.pi - math.fmod(math.fmod(math.pi - float(phi), TWO_PI) + TWO_PI, TWO_PI)
    return math.pi - np.mod(math.pi - np.asarray(phi, dtype=np.float64), TWO_PI)


@dataclass(frozen=True)
class SphericalPoint:
    """A viewing direction. phi is wrapped and theta clamped on construction."""

    phi: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.phi) and math.isfinite(self.theta)):
            raise ValidationError(f"non-finite spherical point ({self.phi}, {self.theta})")
        object.__setattr__(self, "phi", float(wrap_phi(self.phi)))
        object.__setattr__(self, "theta", min(max(float(self.theta), -HALF_PI), HALF_PI))

    def to_vector(self) -> np.ndarray:
        return to_unit(self.phi, self.theta)

    @classmethod
    def from_vector(cls, vec) -> "SphericalPoint":
        phi, theta = from_unit(np.asarray(vec, dtype=np.float64))
        return cls(float(phi), float(theta))


def to_unit(phi, theta) -> np.ndarray:
    """Unit vectors for (phi, theta); output has a trailing axis of length 3."""
    phi = np.asarray(phi, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    ct = np.cos(theta)
    return np.stack([ct * np.sin(phi), np.sin(theta), ct * np.cos(phi)], axis=-1)


def from_unit(vec: np.ndarray):
    """(phi, theta) of vectors along the last axis. Vectors need not be unit length."""
    x, y, z = vec[..., 0], vec[..., 1], vec[..., 2]
    return np.arctan2(x, z), np.arctan2(y, np.hypot(x, z))


def angular_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Great-circle angle between direction vectors (atan2 form, stable near 0 and pi)."""
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    return np.arctan2(cross, np.sum(a * b, axis=-1))


def _rot_yaw(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_pitch(b: float) -> np.ndarray:
    c, s = math.cos(b), math.sin(b)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


def _rot_roll(r: float) -> np.ndarray:
    c, s = math.cos(r), math.sin(r)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Viewpoint:
    """Viewing orientation: yaw turns right, pitch looks up, roll spins about the view axis.

    ``matrix()`` maps view-frame vectors to world-frame vectors and is
    composed as R_yaw @ R_pitch @ R_roll.
    """

    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def matrix(self) -> np.ndarray:
        return _rot_yaw(self.yaw) @ _rot_pitch(self.pitch) @ _rot_roll(self.roll)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Viewpoint":
        pitch = math.asin(min(max(m[1, 2], -1.0), 1.0))
        if math.hypot(m[1, 0], m[1, 1]) < 1e-12:
            # gimbal lock: fold roll into yaw
            return cls(math.atan2(-m[2, 0], m[0, 0]), pitch, 0.0)
        return cls(math.atan2(m[0, 2], m[2, 2]), pitch, math.atan2(m[1, 0], m[1, 1]))

    def inverse(self) -> "Viewpoint":
        return Viewpoint.from_matrix(self.matrix().T)

    @classmethod
    def centered_on(cls, p: SphericalPoint) -> "Viewpoint":
        """Viewpoint whose forward axis points at ``p`` with no roll."""
        return cls(p.phi, p.theta, 0.0)


def rotation_angle(a: Viewpoint, b: Viewpoint) -> float:
    """Geodesic distance between two orientations, in radians."""
    rel = a.matrix().T @ b.matrix()
    return math.acos(min(max((np.trace(rel) - 1.0) * 0.5, -1.0), 1.0))


def rotate_into_view(p: SphericalPoint, v: Viewpoint) -> SphericalPoint:
    """Express a world direction in the frame of viewpoint ``v``."""
    return SphericalPoint.from_vector(v.matrix().T @ p.to_vector())


def rotate_from_view(p: SphericalPoint, v: Viewpoint) -> SphericalPoint:
    """Inverse of :func:`rotate_into_view`."""
    return SphericalPoint.from_vector(v.matrix() @ p.to_vector())


def equirect_to_sphere(x: float, y: float, width: int, height: int) -> SphericalPoint:
    """Continuous equirectangular pixel position to a direction."""
    if not (0.0 <= x < width and 0.0 <= y < height):
        raise ValidationError(f"pixel ({x}, {y}) outside {width}x{height} image")
    phi, theta = equirect_to_angles(x, y, width, height)
    return SphericalPoint(float(phi), float(theta))


def equirect_to_angles(x, y, width: int, height: int):
    """Vectorized pixel -> (phi, theta); no range checking."""
    phi = np.asarray(x, dtype=np.float64) * (TWO_PI / width) - math.pi
    theta = HALF_PI - np.asarray(y, dtype=np.float64) * (math.pi / height)
    return phi, theta


def angles_to_equirect(phi, theta, width: int, height: int):
    """Vectorized (phi, theta) -> continuous pixel, x wrapped into [0, width)."""
    x = (np.asarray(phi, dtype=np.float64) + math.pi) * (width / TWO_PI)
    x = np.mod(x, width)
    y = (HALF_PI - np.asarray(theta, dtype=np.float64)) * (height / math.pi)
    return x, y


def sphere_to_equirect(p: SphericalPoint, width: int, height: int) -> tuple[float, float]:
    x, y = angles_to_equirect(p.phi, p.theta, width, height)
    return float(x), float(y)
