"""Gaussian-weighted blending of a global Pannini model with anchor-aligned local models.

Each model is a backward map from output pixels to viewing directions. At
pixel q the blended direction is the renormalized weighted sum of the
models' unit vectors, with weights ``c_P * exp(-|q - P|^2 / (2 sigma))``
centered on the frame center for the global model and on the anchor pixel
for each local model.
"""

from __future__ import annotations

import logging
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from panoproj import _kernels
from panoproj.content import SalientPoint
from panoproj.errors import FrustumError, NumericError, ValidationError
from panoproj.metrics import STENCIL_OFFSET
from panoproj.projection import (
    DENOM_EPS,
    FrameSpec,
    PanniniParams,
    PlaneScale,
    max_phi,
    pannini_backward,
    pannini_forward,
    _uv_scalar,
    pannini_uv,
    plane_scale,
)
from panoproj.sphere import SphericalPoint, Viewpoint, angular_distance, from_unit, to_unit

log = logging.getLogger(__name__)

PWRP_MAGIC = b"PWRP"
TILE_ROWS = 96


@dataclass(frozen=True)
class BlendWeights:
    c_g: float = 2.0
    sigma: float | None = None  # squared pixels; None -> (0.05 * width)^2

    def __post_init__(self):
        if self.c_g <= 0:
            raise ValidationError("c_g must be > 0")
        if self.sigma is not None and self.sigma <= 0:
            raise ValidationError("sigma must be > 0")

    def sigma_for(self, spec: FrameSpec) -> float:
        return self.sigma if self.sigma is not None else (0.05 * spec.width) ** 2


@dataclass(frozen=True)
class AnchorModel:
    anchor_px: tuple[float, float]
    center_dir: SphericalPoint
    params: PanniniParams
    scale: float = 1.0
    weight_c: float = 1.0

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValidationError(f"anchor scale must be finite and > 0, got {self.scale}")
        if self.weight_c < 0:
            raise ValidationError("anchor weight must be >= 0")


def yaw_probe(p: SphericalPoint, offset: float) -> tuple[float, float]:
    """(phi, theta) of the point ``offset`` rad to the right of ``p`` in a view centered on it.

    Scalar form of the matching neighbor of the conformality stencil.
    """
    so, co = math.sin(offset), math.cos(offset)
    st, ct = math.sin(p.theta), math.cos(p.theta)
    sp, cp = math.sin(p.phi), math.cos(p.phi)
    y, z = co * st, co * ct  # pitch up by theta
    x, z = so * cp + z * sp, -so * sp + z * cp  # then yaw by phi
    return math.atan2(x, z), math.atan2(y, math.hypot(x, z))


def align_local(
    global_params: PanniniParams,
    spec: FrameSpec,
    salient: SalientPoint,
    local_params: PanniniParams,
    weight_c: float = 1.0,
    probe: float = STENCIL_OFFSET,
) -> AnchorModel:
    """Pin a local model centered on ``salient`` to its global-model pixel.

    The scale makes a ``probe``-radian yaw offset from the salient point land
    at the same pixel distance from the anchor under both models.
    """
    gs = plane_scale(spec, global_params)
    try:
        q = pannini_forward(salient.dir, global_params)
    except FrustumError:
        raise ValidationError(f"salient point {salient.dir} is outside the global model's frustum") from None
    ax, ay = (float(c) for c in gs.plane_to_pixel(q.u, q.v))
    if not (0.0 <= ax <= spec.width - 1 and 0.0 <= ay <= spec.height - 1):
        raise ValidationError(f"salient point projects outside the frame at ({ax:.1f}, {ay:.1f})")
    scale = 1.0
    phi, theta = yaw_probe(salient.dir, probe)
    g = _uv_scalar(phi, theta, global_params.d, global_params.w)
    loc = _uv_scalar(probe, 0.0, local_params.d, local_params.w)
    if g is not None and loc is not None and loc[0] > 0:
        scale = math.hypot(g[0] - q.u, g[1] - q.v) / loc[0]
    else:
        log.warning("alignment probe outside frustum for salient point %s; using scale 1", salient.dir)
    return AnchorModel((ax, ay), salient.dir, local_params, scale, weight_c)


def _rotate(vec: np.ndarray, m: np.ndarray) -> np.ndarray:
    x, y, z = vec[..., 0], vec[..., 1], vec[..., 2]
    return np.stack(
        [m[0, 0] * x + m[0, 1] * y + m[0, 2] * z,
         m[1, 0] * x + m[1, 1] * y + m[1, 2] * z,
         m[2, 0] * x + m[2, 1] * y + m[2, 2] * z],
        axis=-1,
    )


class InterpolatedModel:
    """Blended backward projection for one frame; also invertible numerically."""

    def __init__(self, global_params: PanniniParams, spec: FrameSpec,
                 anchors: list[AnchorModel] = (), bw: BlendWeights = BlendWeights()):
        self.global_params = global_params
        self.spec = spec
        self.anchors = list(anchors)
        self.bw = bw
        self.scale: PlaneScale = plane_scale(spec, global_params)
        self.sigma = bw.sigma_for(spec)
        self._rots = [Viewpoint.centered_on(a.center_dir).matrix() for a in self.anchors]
        # per-model rows for the compiled blend, global model first
        gp, sc = global_params, self.scale
        params = [(gp.d, gp.w, math.cos(max_phi(gp.d, gp.w)), math.log(bw.c_g))]
        geom = [(sc.cx, sc.cy, sc.ppu, sc.cx, sc.cy)]
        for a in self.anchors:
            logc = math.log(a.weight_c) if a.weight_c > 0 else -math.inf
            params.append((a.params.d, a.params.w, math.cos(max_phi(a.params.d, a.params.w)), logc))
            geom.append((a.anchor_px[0], a.anchor_px[1], sc.ppu * a.scale, a.anchor_px[0], a.anchor_px[1]))
        self._params = np.array(params, dtype=np.float64)
        self._geom = np.array(geom, dtype=np.float64)
        self._rot_stack = np.stack([np.eye(3), *self._rots])

    def global_vectors(self, x, y):
        u, v = self.scale.pixel_to_plane(x, y)
        return pannini_backward(u, v, self.global_params.d, self.global_params.w)

    def local_vectors(self, k: int, x, y):
        a = self.anchors[k]
        f = self.scale.ppu * a.scale
        u = (np.asarray(x, dtype=np.float64) - a.anchor_px[0]) / f
        v = (a.anchor_px[1] - np.asarray(y, dtype=np.float64)) / f
        vec, valid = pannini_backward(u, v, a.params.d, a.params.w)
        return _rotate(vec, self._rots[k]), valid

    def log_weights(self, x, y):
        """Log Gaussian weights, global first, shape (1 + n_anchors, *x.shape)."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        two_sigma = 2.0 * self.sigma
        out = [math.log(self.bw.c_g) - ((x - self.scale.cx) ** 2 + (y - self.scale.cy) ** 2) / two_sigma]
        for a in self.anchors:
            logc = math.log(a.weight_c) if a.weight_c > 0 else -np.inf
            out.append(logc - ((x - a.anchor_px[0]) ** 2 + (y - a.anchor_px[1]) ** 2) / two_sigma)
        return np.stack(out)

    def backward(self, x, y):
        """Blended unit directions and validity at (continuous) output pixels.

        Models whose weight is negligible next to the strongest valid model at
        a pixel are skipped; with one model left its direction is used as is.
        """
        x, y = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
        shape = x.shape
        out = np.empty((x.size, 3))
        valid = np.empty(x.size, dtype=bool)
        _kernels.blend_points(np.ravel(x), np.ravel(y), self._params, self._geom, self._rot_stack,
                              2.0 * self.sigma, DENOM_EPS, out, valid)
        return out.reshape(*shape, 3), valid.reshape(shape)

    def forward(self, phi, theta, tol: float = 1e-12, max_iter: int = 30):
        """Output pixel coordinates of directions, by Newton iteration on :meth:`backward`.

        Returns (x, -y) so the image axes keep the handedness of the plane.
        NaN marks directions that did not converge.
        """
        phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        gu, gv = pannini_uv(phi, theta, self.global_params.d, self.global_params.w)
        x, y = self.scale.plane_to_pixel(gu, gv)
        x, y = np.array(x, dtype=np.float64), np.array(y, dtype=np.float64)
        # residual measured in each target's own tangent frame
        rots = np.stack([Viewpoint(float(p), float(t)).matrix() for p, t in zip(phi, theta)])

        def residual(xx, yy):
            vec, _ = self.backward(xx, yy)
            local = np.einsum("nji,nj->ni", rots, vec)
            lp, lt = from_unit(local)
            return np.stack([lp, lt], axis=-1)

        h = 1e-3
        done = np.zeros(phi.shape, dtype=bool)
        for _ in range(max_iter):
            r = residual(x, y)
            err = np.hypot(r[:, 0], r[:, 1])
            done = err < tol
            if np.all(done | ~np.isfinite(err)):
                break
            rx = (residual(x + h, y) - residual(x - h, y)) / (2 * h)
            ry = (residual(x, y + h) - residual(x, y - h)) / (2 * h)
            det = rx[:, 0] * ry[:, 1] - ry[:, 0] * rx[:, 1]
            with np.errstate(divide="ignore", invalid="ignore"):
                dx = (ry[:, 1] * r[:, 0] - ry[:, 0] * r[:, 1]) / det
                dy = (-rx[:, 1] * r[:, 0] + rx[:, 0] * r[:, 1]) / det
            x = np.where(done, x, x - dx)
            y = np.where(done, y, y - dy)
        r = residual(x, y)
        ok = np.hypot(r[:, 0], r[:, 1]) < 1e-9
        return np.where(ok, x, np.nan), np.where(ok, -y, np.nan)

    def projector(self):
        """Projection function in the metrics' ``proj(phi, theta)`` form."""

        def proj(phi, theta):
            shape = np.shape(phi)
            u, v = self.forward(np.ravel(phi), np.ravel(theta))
            return u.reshape(shape), v.reshape(shape)

        return proj


@dataclass(frozen=True, eq=False)
class WarpMap:
    """Dense backward map: per output pixel a unit viewing direction and a validity flag."""

    vectors: np.ndarray  # (H, W, 3)
    valid: np.ndarray  # (H, W) bool

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def angles(self):
        phi, theta = from_unit(self.vectors)
        return np.where(self.valid, phi, np.nan), np.where(self.valid, theta, np.nan)

    def save(self, path) -> None:
        phi, theta = self.angles
        pairs = np.stack([phi, theta], axis=-1).astype("<f8")
        with open(path, "wb") as fh:
            fh.write(PWRP_MAGIC + struct.pack("<II", self.width, self.height))
            fh.write(pairs.tobytes())

    @classmethod
    def load(cls, path) -> "WarpMap":
        raw = Path(path).read_bytes()
        if raw[:4] != PWRP_MAGIC or len(raw) < 12:
            raise ValidationError(f"{path}: not a PWRP warp map")
        width, height = struct.unpack("<II", raw[4:12])
        expected = 12 + width * height * 16
        if len(raw) != expected:
            raise ValidationError(f"{path}: expected {expected} bytes, found {len(raw)}")
        pairs = np.frombuffer(raw, dtype="<f8", offset=12).reshape(height, width, 2)
        valid = np.all(np.isfinite(pairs), axis=-1)
        vec = to_unit(pairs[..., 0], pairs[..., 1])
        vec[~valid] = np.nan
        return cls(vec, valid)


def max_angular_difference(a: WarpMap, b: WarpMap) -> float:
    both = a.valid & b.valid
    if not np.any(both):
        return 0.0
    return float(np.max(angular_distance(a.vectors[both], b.vectors[both])))


def build_warp(
    global_params: PanniniParams,
    spec: FrameSpec,
    anchors: list[AnchorModel] = (),
    bw: BlendWeights = BlendWeights(),
    workers: int = 1,
) -> WarpMap:
    """Evaluate the blended backward map at every output pixel, in row tiles."""
    model = InterpolatedModel(global_params, spec, anchors, bw)
    xs = np.arange(spec.width, dtype=np.float64)
    vectors = np.empty((spec.height, spec.width, 3))
    valid = np.empty((spec.height, spec.width), dtype=bool)

    def tile(r0: int):
        r1 = min(r0 + TILE_ROWS, spec.height)
        ys = np.arange(r0, r1, dtype=np.float64)
        vec, ok = model.backward(xs[None, :], ys[:, None])
        vectors[r0:r1] = vec
        valid[r0:r1] = ok

    starts = range(0, spec.height, TILE_ROWS)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(tile, starts))
    else:
        for r0 in starts:
            tile(r0)
    if not np.any(valid):
        raise NumericError("warp map has no valid pixels")
    return WarpMap(vectors, valid)


def global_warp(params: PanniniParams, spec: FrameSpec) -> WarpMap:
    return build_warp(params, spec, [])

