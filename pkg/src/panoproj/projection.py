"""Pannini family projections between viewing directions and the image plane.

The general model maps a direction (phi, theta) to

    u = (d + 1) sin(phi) / (d + cos(phi))
    v = tan(theta) * ((d + 1)(1 - w) / (d + cos(phi)) + w / cos(phi))

``d = 0`` is rectilinear, ``d = 1, w = 0`` cylindrical stereographic. Near the
view center u ~ phi and v ~ theta for every (d, w).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from panoproj import _kernels
from panoproj.errors import FrustumError, ValidationError
from panoproj.sphere import SphericalPoint

DENOM_EPS = 1e-6
FRUSTUM_GUARD = 1e-3
D_MAX = 3.0


@dataclass(frozen=True)
class PanniniParams:
    d: float = 1.0
    w: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.d) and math.isfinite(self.w)):
            raise ValidationError(f"non-finite Pannini parameters ({self.d}, {self.w})")
        if self.d < 0.0:
            raise ValidationError(f"Pannini d must be >= 0, got {self.d}")
        if not 0.0 <= self.w <= 1.0:
            raise ValidationError(f"Pannini w must lie in [0, 1], got {self.w}")


RECTILINEAR = PanniniParams(0.0, 0.0)
STEREOGRAPHIC = PanniniParams(1.0, 0.0)


@dataclass(frozen=True)
class PlanePoint:
    u: float
    v: float


@dataclass(frozen=True)
class FrameSpec:
    """Output frame: horizontal field of view (radians) and pixel size."""

    h_fov: float
    width: int
    height: int

    def __post_init__(self):
        if not 0.0 < self.h_fov < math.pi:
            raise ValidationError(f"h_fov must lie in (0, pi), got {self.h_fov}")
        if self.width < 2 or self.height < 2:
            raise ValidationError(f"frame too small: {self.width}x{self.height}")

    @classmethod
    def from_aspect(cls, h_fov_deg: float, width: int, aspect: tuple[int, int]) -> "FrameSpec":
        height = int(round(width * aspect[1] / aspect[0]))
        return cls(math.radians(h_fov_deg), width, height)


def max_phi(d: float, w: float = 0.0) -> float:
    """Largest |phi| (exclusive) inside the valid frustum for the given model.

    u is monotone in phi up to cos(phi) = -d for d <= 1 and cos(phi) = -1/d for
    d > 1; the w / cos(phi) term additionally caps |phi| below pi/2 when w > 0.
    """
    limit = math.acos(-d) if d <= 1.0 else math.acos(-1.0 / d)
    if w > 0.0:
        limit = min(limit, 0.5 * math.pi)
    # d + cos(phi) must also stay above the denominator guard (matters for d near 1)
    return min(limit - FRUSTUM_GUARD, math.acos(max(-1.0, DENOM_EPS - d)))


def pannini_uv(phi, theta, d, w):
    """Vectorized forward model; entries outside the frustum come back as NaN.

    ``d`` and ``w`` broadcast against ``phi``/``theta``, so a column of
    parameter candidates can be evaluated against a row of directions.
    """
    phi = np.asarray(phi, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    # For d >= 0.5 the denominator is formed as (d - 1) + 2 cos^2(phi / 2),
    # which keeps full relative accuracy where d + cos(phi) cancels near the
    # frustum edge.
    cphi = np.cos(phi)
    den = np.where(d < 0.5, d + cphi, (d - 1.0) + 2.0 * np.cos(0.5 * phi) ** 2)
    lim = np.where(d <= 1.0, np.arccos(-np.minimum(d, 1.0)), np.arccos(-1.0 / np.maximum(d, 1.0)))
    lim = np.where(w > 0.0, np.minimum(lim, 0.5 * math.pi), lim) - FRUSTUM_GUARD
    ok = (den > DENOM_EPS) & (np.abs(phi) < lim) & ((w == 0.0) | (cphi > DENOM_EPS))
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (d + 1.0) * np.sin(phi) / den
        v = np.tan(theta) * ((d + 1.0) * (1.0 - w) / den + w / cphi)
    u = np.where(ok, u, np.nan)
    v = np.where(ok, v, np.nan)
    return u, v


def _uv_scalar(phi: float, theta: float, d: float, w: float):
    """Scalar twin of :func:`pannini_uv`; None outside the frustum."""
    cphi = math.cos(phi)
    den = d + cphi if d < 0.5 else (d - 1.0) + 2.0 * math.cos(0.5 * phi) ** 2
    if not (den > DENOM_EPS and abs(phi) < max_phi(d, w) and (w == 0.0 or cphi > DENOM_EPS)):
        return None
    u = (d + 1.0) * math.sin(phi) / den
    v = math.tan(theta) * ((d + 1.0) * (1.0 - w) / den + w / cphi)
    if not (math.isfinite(u) and math.isfinite(v)):
        return None
    return u, v


def pannini_forward(p: SphericalPoint, params: PanniniParams) -> PlanePoint:
    uv = _uv_scalar(p.phi, p.theta, params.d, params.w)
    if uv is None:
        raise FrustumError(
            f"direction ({p.phi:.6g}, {p.theta:.6g}) outside frustum of d={params.d}, w={params.w}"
        )
    return PlanePoint(*uv)


def _inverse_cs(u, d):
    """cos/sin of phi for plane abscissa u; NaN where no admissible root exists."""
    k = (u / (d + 1.0)) ** 2
    disc = 1.0 + k * (1.0 - d * d)
    with np.errstate(invalid="ignore"):
        root = np.sqrt(disc)
    # rationalized root of (k+1)c^2 + 2kd c + kd^2 - 1 = 0, free of cancellation in the denominator
    c = (1.0 - k * d * d) / (k * d + root)
    s = u * (d + c) / (d + 1.0)
    n = np.hypot(s, c)
    return c / n, s / n


def pannini_backward(u, v, d: float, w: float):
    """Vectorized inverse returning unit direction vectors and a validity mask.

    Output vectors follow the sphere convention (x right, y up, z forward);
    invalid entries are NaN.
    """
    u, v = np.broadcast_arrays(np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64))
    shape = u.shape
    out = np.empty((u.size, 3))
    valid = np.empty(u.size, dtype=bool)
    _kernels.backward_points(np.ravel(u), np.ravel(v), float(d), float(w), math.cos(max_phi(d, w)), DENOM_EPS, out, valid)
    return out.reshape(*shape, 3), valid.reshape(shape)


def pannini_inverse_angles(u, v, d: float, w: float):
    """Vectorized inverse returning (phi, theta); NaN where inadmissible."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    c, s = _inverse_cs(u, d)
    den = d + c
    with np.errstate(divide="ignore", invalid="ignore"):
        k = (d + 1.0) * (1.0 - w) / den
        if w != 0.0:
            k = k + w / c
        theta = np.arctan(v / k)
    phi = np.arctan2(s, c)
    valid = np.isfinite(theta) & (den > DENOM_EPS) & (k > 0.0) & (np.abs(phi) < max_phi(d, w))
    return np.where(valid, phi, np.nan), np.where(valid, theta, np.nan)


def pannini_inverse(q: PlanePoint, params: PanniniParams) -> SphericalPoint:
    phi, theta = pannini_inverse_angles(q.u, q.v, params.d, params.w)
    if not (np.isfinite(phi) and np.isfinite(theta)):
        raise FrustumError(f"plane point ({q.u:.6g}, {q.v:.6g}) unreachable for d={params.d}, w={params.w}")
    return SphericalPoint(float(phi), float(theta))


def rectilinear(p: SphericalPoint) -> PlanePoint:
    return pannini_forward(p, RECTILINEAR)


def stereographic(p: SphericalPoint) -> PlanePoint:
    return pannini_forward(p, STEREOGRAPHIC)


@dataclass(frozen=True)
class PlaneScale:
    """Pixel <-> plane mapping for one model and frame.

    Column 0 sits at -u_max and column width-1 at +u_max; rows use the same
    pixels-per-unit factor with v increasing upward.
    """

    width: int
    height: int
    u_max: float

    @property
    def ppu(self) -> float:
        return (self.width - 1) / (2.0 * self.u_max)

    @property
    def cx(self) -> float:
        return 0.5 * (self.width - 1)

    @property
    def cy(self) -> float:
        return 0.5 * (self.height - 1)

    def pixel_to_plane(self, x, y):
        return (np.asarray(x, dtype=np.float64) - self.cx) / self.ppu, (self.cy - np.asarray(y, dtype=np.float64)) / self.ppu

    def plane_to_pixel(self, u, v):
        return np.asarray(u) * self.ppu + self.cx, self.cy - np.asarray(v) * self.ppu


def plane_scale(spec: FrameSpec, params: PanniniParams) -> PlaneScale:
    edge = SphericalPoint(0.5 * spec.h_fov, 0.0)
    try:
        u_max = pannini_forward(edge, params).u
    except FrustumError as exc:
        raise FrustumError(f"half FOV {edge.phi:.6g} rad outside frustum of d={params.d}, w={params.w}") from exc
    return PlaneScale(spec.width, spec.height, u_max)


def projector(params: PanniniParams):
    """Callable (phi, theta) -> (u, v) for a fixed model, as used by the metrics."""

    def proj(phi, theta):
        return pannini_uv(phi, theta, params.d, params.w)

    return proj
