"""Sampling an equirectangular source through a warp map."""

from __future__ import annotations

import math

import numpy as np

from panoproj.errors import ValidationError
from panoproj.interpolation import WarpMap, build_warp
from panoproj.projection import FrameSpec, PanniniParams
from panoproj.sphere import Viewpoint

TWO_PI = 2.0 * math.pi


def check_equirect(src: np.ndarray) -> np.ndarray:
    src = np.asarray(src)
    if src.ndim != 3 or src.shape[2] != 3 or src.dtype != np.uint8:
        raise ValidationError(f"expected an (H, W, 3) uint8 image, got {src.shape} {src.dtype}")
    if src.shape[1] != 2 * src.shape[0]:
        raise ValidationError(f"equirectangular image must be 2:1, got {src.shape[1]}x{src.shape[0]}")
    return src


def sample_bilinear(src: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear lookup at continuous equirect coordinates (pixel centers at +0.5).

    Columns wrap across the seam; rows clamp at the poles, so indices always
    stay inside the buffer.
    """
    h, w = src.shape[:2]
    fx = x - 0.5
    fy = np.clip(y - 0.5, 0.0, h - 1.0)
    x0 = np.floor(fx)
    y0 = np.floor(fy)
    tx = (fx - x0)[..., None]
    ty = (fy - y0)[..., None]
    x0 = x0.astype(np.int64) % w
    x1 = (x0 + 1) % w
    y0 = y0.astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    s = src.astype(np.float64) if src.dtype != np.float64 else src
    top = s[y0, x0] * (1.0 - tx) + s[y0, x1] * tx
    bot = s[y1, x0] * (1.0 - tx) + s[y1, x1] * tx
    return top * (1.0 - ty) + bot * ty


def render(src: np.ndarray, warp: WarpMap, viewpoint: Viewpoint = Viewpoint()) -> np.ndarray:
    """Perspective frame for ``viewpoint``; invalid warp pixels are black."""
    src = check_equirect(src)
    h, w = src.shape[:2]
    m = viewpoint.matrix()
    vec = np.where(warp.valid[..., None], warp.vectors, 0.0)
    vx, vy, vz = vec[..., 0], vec[..., 1], vec[..., 2]
    wx = m[0, 0] * vx + m[0, 1] * vy + m[0, 2] * vz
    wy = m[1, 0] * vx + m[1, 1] * vy + m[1, 2] * vz
    wz = m[2, 0] * vx + m[2, 1] * vy + m[2, 2] * vz
    phi = np.arctan2(wx, wz)
    theta = np.arctan2(wy, np.hypot(wx, wz))
    x = np.mod((phi + math.pi) * (w / TWO_PI), w)
    y = (0.5 * math.pi - theta) * (h / math.pi)
    out = sample_bilinear(src, x, y)
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    out[~warp.valid] = 0
    return out


def project_single(src: np.ndarray, model: PanniniParams, spec: FrameSpec, viewpoint: Viewpoint = Viewpoint()) -> np.ndarray:
    """Render through one analytic model (no local models)."""
    return render(src, build_warp(model, spec, []), viewpoint)

