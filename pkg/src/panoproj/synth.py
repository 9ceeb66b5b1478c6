"""Wireframe-room test scenes with exact ground-truth lines and salient points.

The camera sits at the center of an axis-aligned cube and looks down +z
(x right, y up). The default scene carries 11 straight edges seen within a
170° frustum (front-wall outline, the four ceiling/floor edges receding
along the side walls, and one gridline each on the front wall, ceiling and
floor) and 16 marker points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from panoproj.content import FrameContent, LineSegment, SalientPoint
from panoproj.errors import ValidationError
from panoproj.sphere import SphericalPoint, angles_to_equirect, equirect_to_angles, to_unit


def _default_markers() -> tuple[tuple[float, float, float], ...]:
    front = [(x, y, 1.0) for y in (0.3, -0.3) for x in (-0.75, -0.25, 0.25, 0.75)]
    sides = [(sx, y, z) for sx in (-1.0, 1.0) for y in (0.3, -0.3) for z in (0.6, 0.35)]
    return tuple(front + sides)


@dataclass(frozen=True)
class SceneSpec:
    half_extent: float = 1.0
    gridlines: int = 1  # per wall: vertical on the front wall, crosswise on ceiling and floor
    near_depth: float = 0.18  # side-wall edges run from z = near_depth * half_extent to the front wall
    line_color: tuple[int, int, int] = (255, 255, 255)
    background: tuple[int, int, int] = (40, 40, 48)
    marker_color: tuple[int, int, int] = (230, 30, 30)
    marker_radius: float = math.radians(1.2)
    markers: tuple[tuple[float, float, float], ...] = field(default_factory=_default_markers)  # in half-extent units
    width: int = 2048
    height: int = 1024

    def __post_init__(self):
        if self.half_extent <= 0:
            raise ValidationError("half_extent must be > 0")
        if self.gridlines < 0:
            raise ValidationError("gridlines must be >= 0")
        if not 0.0 < self.near_depth < 1.0:
            raise ValidationError("near_depth must lie in (0, 1)")
        if self.width != 2 * self.height or self.height < 8:
            raise ValidationError(f"equirect size must be 2:1, got {self.width}x{self.height}")
        for m in self.markers:
            if len(m) != 3 or max(abs(c) for c in m) > 1.0 or np.linalg.norm(m) == 0:
                raise ValidationError(f"marker {m} must lie inside the room and off the camera")


def scene_edges(spec: SceneSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """3-D endpoints of every scene line."""
    h = spec.half_extent
    edges = []
    # front wall outline
    edges.append(((-h, h, h), (h, h, h)))
    edges.append(((-h, -h, h), (h, -h, h)))
    edges.append(((-h, -h, h), (-h, h, h)))
    edges.append(((h, -h, h), (h, h, h)))
    # ceiling/floor edges receding along the side walls
    z0 = spec.near_depth * h
    for sx in (-h, h):
        for sy in (h, -h):
            edges.append(((sx, sy, z0), (sx, sy, h)))
    n = spec.gridlines
    for i in range(1, n + 1):
        f = 2.0 * i / (n + 1) - 1.0
        edges.append(((f * h, -h, h), (f * h, h, h)))  # front wall, vertical
    for i in range(1, n + 1):
        z = z0 + (h - z0) * i / (n + 1)
        edges.append(((-h, h, z), (h, h, z)))  # ceiling, across
        edges.append(((-h, -h, z), (h, -h, z)))  # floor, across
    return [(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)) for a, b in edges]


def _dir(p: np.ndarray) -> SphericalPoint:
    return SphericalPoint.from_vector(p / np.linalg.norm(p))


def generate(spec: SceneSpec = SceneSpec()) -> tuple[np.ndarray, FrameContent]:
    """Equirectangular RGB rendering of the room and its ground-truth content."""
    H, W = spec.height, spec.width
    img = np.empty((H, W, 3), dtype=np.uint8)
    img[:] = spec.background

    # flat per-wall shading so walls are distinguishable
    ys, xs = np.mgrid[0:H, 0:W]
    phi, theta = equirect_to_angles(xs + 0.5, ys + 0.5, W, H)
    vec = to_unit(phi, theta)
    face = np.argmax(np.abs(vec), axis=-1) * 2 + (np.take_along_axis(vec, np.argmax(np.abs(vec), axis=-1)[..., None], -1)[..., 0] > 0)
    shade = np.array([0, 6, 12, 18, 24, 30], dtype=np.int16)[face]
    img[:] = np.clip(np.asarray(spec.background, dtype=np.int16) + shade[..., None], 0, 255).astype(np.uint8)

    lines = []
    step = 0.25 * math.pi / H  # quarter-pixel angular spacing
    for a, b in scene_edges(spec):
        lines.append(LineSegment(_dir(a), _dir(0.5 * (a + b)), _dir(b)))
        na, nb = a / np.linalg.norm(a), b / np.linalg.norm(b)
        span = math.acos(min(1.0, float(np.dot(na, nb))))
        n = max(2, int(math.ceil(span / step)) * 2)
        t = np.linspace(0.0, 1.0, n)[:, None]
        pts = a[None, :] * (1.0 - t) + b[None, :] * t
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        p_phi = np.arctan2(pts[:, 0], pts[:, 2])
        p_theta = np.arcsin(np.clip(pts[:, 1], -1.0, 1.0))
        px, py = angles_to_equirect(p_phi, p_theta, W, H)
        cols = np.floor(px).astype(np.int64) % W
        rows = np.clip(np.floor(py).astype(np.int64), 0, H - 1)
        img[rows, cols] = spec.line_color

    points = []
    for m in spec.markers:
        p = np.asarray(m, dtype=np.float64) * spec.half_extent
        d = _dir(p)
        points.append(SalientPoint(d, 1.0))
        near = np.sum(vec * d.to_vector(), axis=-1) >= math.cos(spec.marker_radius)
        img[near] = spec.marker_color
    return img, FrameContent(0, lines, points)
