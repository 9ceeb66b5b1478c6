"""Pixel-wise exponential moving average of warp maps across video frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from panoproj.errors import NumericError, ValidationError
from panoproj.interpolation import WarpMap
from panoproj.sphere import Viewpoint, rotation_angle


@dataclass
class TemporalState:
    prev_map: WarpMap | None = None
    prev_viewpoint: Viewpoint | None = None
    omega_p_moving: float = 0.99
    omega_p_static: float = 0.8
    motion_threshold: float = 1e-3

    def __post_init__(self):
        for name in ("omega_p_moving", "omega_p_static"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if self.motion_threshold < 0:
            raise ValidationError("motion_threshold must be >= 0")


def select_omega(prev: Viewpoint, current: Viewpoint, moving: float, static: float, threshold: float) -> float:
    """Weight of the current map: ``moving`` if the view turned more than ``threshold`` rad."""
    return moving if rotation_angle(prev, current) > threshold else static


def blend_maps(current: WarpMap, prev: WarpMap, omega: float) -> WarpMap:
    """``omega * current + (1 - omega) * prev`` on unit vectors, renormalized."""
    if current.vectors.shape != prev.vectors.shape:
        raise ValidationError(f"warp map shapes differ: {current.vectors.shape} vs {prev.vectors.shape}")
    both = current.valid & prev.valid
    mixed = omega * current.vectors + (1.0 - omega) * np.where(both[..., None], prev.vectors, 0.0)
    mixed = np.where(both[..., None], mixed, current.vectors)
    norm = np.linalg.norm(np.where(current.valid[..., None], mixed, 0.0), axis=-1)
    if np.any(current.valid & (norm < 1e-6)):
        raise NumericError("temporal blend of near-antipodal directions")
    with np.errstate(invalid="ignore", divide="ignore"):
        out = mixed / norm[..., None]
    out[~current.valid] = np.nan
    return WarpMap(out, current.valid.copy())


def smooth_map(current: WarpMap, state: TemporalState, viewpoint: Viewpoint) -> WarpMap:
    """Blend ``current`` with the previous output and advance ``state``."""
    if state.prev_map is None:
        out = current
    else:
        omega = select_omega(state.prev_viewpoint, viewpoint, state.omega_p_moving,
                             state.omega_p_static, state.motion_threshold)
        out = blend_maps(current, state.prev_map, omega)
    state.prev_map = out
    state.prev_viewpoint = viewpoint
    return out
