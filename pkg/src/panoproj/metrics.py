"""Distortion energies used by the optimizer and the evaluation measures.

A *projection function* here is any callable ``proj(phi, theta) -> (u, v)``
acting elementwise on arrays; non-finite output marks a direction outside
the model's frustum.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from panoproj import _kernels
from panoproj.content import FrameContent, LineSegment, SalientPoint
from panoproj.errors import FrustumError, ValidationError
from panoproj.projection import DENOM_EPS, FRUSTUM_GUARD, PanniniParams, projector
from panoproj.sphere import SphericalPoint, Viewpoint, from_unit, to_unit

FD_STEP = 1e-3
STENCIL_OFFSET = 0.1
DEGENERATE_CHORD = 1e-12


@dataclass(frozen=True)
class EnergyWeights:
    omega_d: float = 1e-3
    omega_c: float = 1e-4

    def __post_init__(self):
        if self.omega_d < 0 or self.omega_c < 0:
            raise ValidationError("energy weights must be >= 0")


def _project(proj, phi, theta, what: str):
    u, v = proj(np.asarray(phi, dtype=np.float64), np.asarray(theta, dtype=np.float64))
    u, v = np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise FrustumError(f"{what} projects outside the frustum")
    return u, v


def _line_angles(l: LineSegment):
    return (np.array([l.start.phi, l.mid.phi, l.end.phi]), np.array([l.start.theta, l.mid.theta, l.end.theta]))


def _bend(us, vs, um, vm, ue, ve):
    """(signed mid-to-chord distance, chord length), vectorized."""
    chord = np.hypot(us - ue, vs - ve)
    area2 = us * (ve - vm) + ue * (vm - vs) + um * (vs - ve)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.where(chord > DEGENERATE_CHORD, area2 / chord, 0.0)
    return dist, chord


def line_distortion(l: LineSegment, proj) -> float:
    """Squared distance of the projected mid point from the chord through the projected endpoints."""
    u, v = _project(proj, *_line_angles(l), "line segment")
    dist, _ = _bend(u[0], v[0], u[1], v[1], u[2], v[2])
    return float(dist * dist)


def _fd_stencil(p: SphericalPoint, h: float):
    # order: +theta, -theta, +phi, -phi
    phi = np.array([p.phi, p.phi, p.phi + h, p.phi - h])
    theta = np.array([p.theta + h, p.theta - h, p.theta, p.theta])
    return phi, theta


def _conformality_terms(u, v, h, cos_t, literal: bool):
    du_dt = (u[..., 0] - u[..., 1]) / (2 * h)
    dv_dt = (v[..., 0] - v[..., 1]) / (2 * h)
    du_dp = (u[..., 2] - u[..., 3]) / (2 * h)
    dv_dp = (v[..., 2] - v[..., 3]) / (2 * h)
    first = cos_t * du_dt + (du_dp if literal else dv_dp)
    second = cos_t * dv_dt - du_dp
    return first * first + second * second


def conformality_distortion(p: SalientPoint, proj, fd_step: float = FD_STEP, literal: bool = False) -> float:
    """Cauchy-Riemann residual of the projection at a salient point.

    With ``literal=True`` the first residual uses du/dphi in place of
    dv/dphi, which is nonzero (1) even at the distortion-free view center.
    """
    phi, theta = _fd_stencil(p.dir, fd_step)
    u, v = _project(proj, phi, theta, "conformality stencil")
    return float(_conformality_terms(u, v, fd_step, math.cos(p.dir.theta), literal))


def objective(
    content: FrameContent,
    params: PanniniParams,
    weights: EnergyWeights = EnergyWeights(),
    fd_step: float = FD_STEP,
    literal: bool = False,
) -> float:
    proj = projector(params)
    lines = sum(line_distortion(l, proj) for l in content.lines)
    points = sum(conformality_distortion(p, proj, fd_step, literal) for p in content.points)
    return weights.omega_d * lines + weights.omega_c * points


class EnergyTerms:
    """Content pre-packed for fast evaluation of the objective over many (d, w) candidates."""

    def __init__(self, content: FrameContent, weights: EnergyWeights = EnergyWeights(),
                 fd_step: float = FD_STEP, literal: bool = False):
        lines = [_line_angles(l) for l in content.lines]
        self._setup(
            np.array([a for a, _ in lines]).reshape(-1, 3),
            np.array([b for _, b in lines]).reshape(-1, 3),
            np.array([p.dir.phi for p in content.points]),
            np.array([p.dir.theta for p in content.points]),
            weights, fd_step, literal,
        )

    @classmethod
    def from_angles(cls, line_phi, line_theta, point_phi, point_theta, weights: EnergyWeights = EnergyWeights(),
                    fd_step: float = FD_STEP, literal: bool = False) -> "EnergyTerms":
        """Build from raw angles: lines as (n, 3) start/mid/end arrays, points as (m,) arrays."""
        self = cls.__new__(cls)
        self._setup(np.reshape(line_phi, (-1, 3)), np.reshape(line_theta, (-1, 3)),
                    np.ravel(point_phi), np.ravel(point_theta), weights, fd_step, literal)
        return self

    def _setup(self, line_phi, line_theta, point_phi, point_theta, weights, fd_step, literal):
        self.weights = weights
        self.fd_step = fd_step
        self.literal = literal
        self.n_lines = line_phi.shape[0]
        self.n_points = point_phi.shape[0]
        h = fd_step
        # stencil order per point: +theta, -theta, +phi, -phi
        sp = np.stack([point_phi, point_phi, point_phi + h, point_phi - h], axis=-1)
        st = np.stack([point_theta + h, point_theta - h, point_theta, point_theta], axis=-1)
        self.phi = np.concatenate([line_phi.ravel(), sp.ravel()]).astype(np.float64)
        self.theta = np.concatenate([line_theta.ravel(), st.ravel()]).astype(np.float64)
        self.cos_t = np.cos(point_theta).astype(np.float64)
        self._sin = np.sin(self.phi)
        self._cos = np.cos(self.phi)
        self._tan = np.tan(self.theta)
        self._abs_phi_max = float(np.max(np.abs(self.phi))) if self.phi.size else 0.0
        self._cos_min = float(np.min(self._cos)) if self.phi.size else 1.0

    @property
    def kernel_args(self) -> tuple:
        """Packed arguments of the compiled energy, in its signature order."""
        return (self._sin, self._cos, self._tan, self.n_lines, self.n_points, self.cos_t, float(self.fd_step),
                bool(self.literal), float(self.weights.omega_d), float(self.weights.omega_c), self._abs_phi_max,
                self._cos_min, DENOM_EPS, FRUSTUM_GUARD)

    def evaluate(self, d, w) -> np.ndarray:
        """Objective for each candidate; ``inf`` where any item leaves the frustum."""
        d = np.ascontiguousarray(np.atleast_1d(d), dtype=np.float64)
        w = np.ascontiguousarray(np.atleast_1d(w), dtype=np.float64)
        out = np.empty(d.shape[0])
        if self.phi.size == 0:
            out[:] = 0.0
            return out
        _kernels.energy_batch(*self.kernel_args, d, w, out)
        return out


def straightness(l: LineSegment, proj) -> float:
    """Chord length over (chord length + mid-point deviation); 1 for a straight image."""
    u, v = _project(proj, *_line_angles(l), "line segment")
    dist, chord = _bend(u[0], v[0], u[1], v[1], u[2], v[2])
    a1, a2 = abs(float(dist)), float(chord)
    if a1 + a2 == 0.0:
        return 1.0
    return a2 / (a1 + a2)


def conformality_stencil(p: SphericalPoint, offset: float = STENCIL_OFFSET):
    """The point plus four neighbors ``offset`` rad away along its local pitch and yaw axes."""
    local_phi = np.array([0.0, 0.0, 0.0, offset, -offset])
    local_theta = np.array([0.0, offset, -offset, 0.0, 0.0])
    world = to_unit(local_phi, local_theta) @ Viewpoint.centered_on(p).matrix().T
    return from_unit(world)


def conformality_measure(p: SalientPoint, proj, offset: float = STENCIL_OFFSET) -> float:
    """min/max of image distances from the salient point to its four projected neighbors."""
    u, v = _project(proj, *conformality_stencil(p.dir, offset), "conformality stencil")
    beta = np.hypot(u[1:] - u[0], v[1:] - v[0])
    hi = float(beta.max())
    if hi == 0.0:
        return 1.0
    return float(beta.min()) / hi


@dataclass
class MetricReport:
    model: str
    straightness: list[float] = field(default_factory=list)
    conformality: list[float] = field(default_factory=list)

    @staticmethod
    def _mean(xs):
        return float(np.mean(xs)) if xs else float("nan")

    @property
    def mean_straightness(self) -> float:
        return self._mean(self.straightness)

    @property
    def mean_conformality(self) -> float:
        return self._mean(self.conformality)

    @property
    def min_straightness(self) -> float:
        return float(min(self.straightness)) if self.straightness else float("nan")

    @property
    def min_conformality(self) -> float:
        return float(min(self.conformality)) if self.conformality else float("nan")

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "straightness": list(self.straightness),
            "conformality": list(self.conformality),
            "mean_straightness": self.mean_straightness,
            "mean_conformality": self.mean_conformality,
            "min_straightness": self.min_straightness,
            "min_conformality": self.min_conformality,
        }


def evaluate(content: FrameContent, proj, model: str = "") -> MetricReport:
    return MetricReport(
        model,
        [straightness(l, proj) for l in content.lines],
        [conformality_measure(p, proj) for p in content.points],
    )


def reports_to_json(reports: list[MetricReport]) -> str:
    return json.dumps({"reports": [r.to_dict() for r in reports]}, indent=1)


def reports_to_csv(reports: list[MetricReport]) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["model", "kind", "index", "value"])
    for r in reports:
        for i, s in enumerate(r.straightness):
            out.writerow([r.model, "straightness", i, repr(s)])
        for i, c in enumerate(r.conformality):
            out.writerow([r.model, "conformality", i, repr(c)])
        out.writerow([r.model, "mean_straightness", "", repr(r.mean_straightness)])
        out.writerow([r.model, "mean_conformality", "", repr(r.mean_conformality)])
        out.writerow([r.model, "min_straightness", "", repr(r.min_straightness)])
        out.writerow([r.model, "min_conformality", "", repr(r.min_conformality)])
    return buf.getvalue()
