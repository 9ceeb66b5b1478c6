"""Two-parameter Pannini fitting by projected steepest descent, plus temporal smoothing of (d, w)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from panoproj import _kernels
from panoproj.content import FrameContent, LineSegment, SalientPoint
from panoproj.errors import NumericError, ValidationError
from panoproj.metrics import EnergyTerms, EnergyWeights, FD_STEP
from panoproj.projection import D_MAX, PanniniParams
from panoproj.sphere import SphericalPoint, Viewpoint, from_unit, rotate_into_view, to_unit

DEFAULT_PARAMS = PanniniParams(1.0, 0.0)
MAX_HALVINGS = 30


@dataclass(frozen=True)
class OptimizerConfig:
    step_size: float = 0.1
    max_iters: int = 200
    grad_tol: float = 1e-7
    fd_step_params: float = 1e-4
    d_bounds: tuple[float, float] = (0.0, D_MAX)
    w_bounds: tuple[float, float] = (0.0, 1.0)
    omega_pd: float = 0.999
    omega_ps: float = 1e-6
    omega_md: float = 0.9
    omega_ms: float = 0.9

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if self.step_size <= 0 or self.fd_step_params <= 0:
            raise ValidationError("step_size and fd_step_params must be > 0")
        for name in ("omega_pd", "omega_ps", "omega_md", "omega_ms", "grad_tol"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        for lo, hi in (self.d_bounds, self.w_bounds):
            if not lo <= hi:
                raise ValidationError("empty parameter bounds")
        if self.d_bounds[0] < 0 or self.w_bounds[0] < 0 or self.w_bounds[1] > 1:
            raise ValidationError("bounds must lie inside d >= 0, w in [0, 1]")
        if self.omega_md > 1 or self.omega_ms > 1:
            raise ValidationError("EMA weights must lie in [0, 1]")

    def clamp(self, d, w):
        return np.clip(d, *self.d_bounds), np.clip(w, *self.w_bounds)


@dataclass(frozen=True)
class ParamState:
    raw: PanniniParams
    smoothed: PanniniParams
    frame_index: int = 0


@dataclass(frozen=True)
class NeighborhoodSpec:
    radius: float = 0.52

    def __post_init__(self):
        if not 0.0 < self.radius:
            raise ValidationError("neighborhood radius must be > 0")


@dataclass
class DescentResult:
    params: PanniniParams
    value: float
    iterations: int
    history: list[float] = field(default_factory=list)
    iterates: list[tuple[float, float]] = field(default_factory=list)


def _offending_item(content: FrameContent, params: PanniniParams, weights, fd_step, literal) -> str:
    for i, l in enumerate(content.lines):
        single = EnergyTerms(FrameContent(0, [l], []), weights, fd_step, literal)
        if not np.isfinite(single.evaluate(params.d, params.w)[0]):
            return f"line {i}"
    for i, p in enumerate(content.points):
        single = EnergyTerms(FrameContent(0, [], [p]), weights, fd_step, literal)
        if not np.isfinite(single.evaluate(params.d, params.w)[0]):
            return f"point {i}"
    return "unknown item"


def descend(
    content: FrameContent,
    weights: EnergyWeights = EnergyWeights(),
    prev: ParamState | None = None,
    cfg: OptimizerConfig = OptimizerConfig(),
    fd_step: float = FD_STEP,
    literal: bool = False,
    init: PanniniParams = DEFAULT_PARAMS,
) -> DescentResult:
    """Minimize the content energy (plus the temporal penalty when ``prev`` is given).

    Steps follow the normalized projected negative gradient; the step length
    is halved until the objective decreases, and grows again after a full step.
    """
    terms = EnergyTerms(content, weights, fd_step, literal)
    try:
        return descend_terms(terms, prev, cfg, init)
    except NumericError as exc:
        x0 = cfg.clamp(init.d, init.w)
        where = _offending_item(content, PanniniParams(*map(float, x0)), weights, fd_step, literal)
        raise NumericError(f"{exc} ({where})") from None


def descend_terms(
    terms: EnergyTerms,
    prev: ParamState | None = None,
    cfg: OptimizerConfig = OptimizerConfig(),
    init: PanniniParams = DEFAULT_PARAMS,
) -> DescentResult:
    """:func:`descend` on pre-packed energy terms."""
    if prev is not None:
        penalty = (float(prev.smoothed.d), float(prev.smoothed.w), float(cfg.omega_pd), float(cfg.omega_ps))
    else:
        penalty = (0.0, 0.0, 0.0, 0.0)
    (dlo, dhi), (wlo, whi) = cfg.d_bounds, cfg.w_bounds
    lo = np.array([dlo, wlo], dtype=np.float64)
    hi = np.array([dhi, whi], dtype=np.float64)
    max_alpha = max(dhi - dlo, whi - wlo) if (dhi > dlo or whi > wlo) else cfg.step_size
    history = np.empty(cfg.max_iters + 1)
    iterates = np.empty((cfg.max_iters + 1, 2))
    if terms.n_lines + terms.n_points == 0:
        args = EnergyTerms.from_angles([], [], [0.0], [0.0], terms.weights).kernel_args
        args = args[:4] + (0,) + args[5:]
    else:
        args = terms.kernel_args
    n, iterations = _kernels.descend(
        args, penalty, np.array([init.d, init.w], dtype=np.float64), lo, hi, float(cfg.step_size),
        float(max_alpha), int(cfg.max_iters), float(cfg.grad_tol), float(cfg.fd_step_params), MAX_HALVINGS,
        history, iterates,
    )
    if not math.isfinite(history[0]):
        x = np.clip([init.d, init.w], lo, hi)
        raise NumericError(f"objective not finite at initialization d={x[0]}, w={x[1]}")
    d, w = (float(c) for c in iterates[n - 1])
    return DescentResult(PanniniParams(d, w), float(history[n - 1]), int(iterations), history[:n].tolist(),
                         [(float(a), float(b)) for a, b in iterates[:n]])


def optimize(
    content: FrameContent,
    weights: EnergyWeights = EnergyWeights(),
    prev: ParamState | None = None,
    cfg: OptimizerConfig = OptimizerConfig(),
    fd_step: float = FD_STEP,
    literal: bool = False,
) -> PanniniParams:
    """Per-frame optimum (d, w). Empty content yields the previous smoothed value or (1, 0).

    With history the descent starts from the previous smoothed value, so a
    static sequence settles on a fixed point instead of re-running (and
    stopping at a slightly different spot of) the same ill-conditioned descent.
    """
    if content.is_empty:
        if prev is not None:
            return prev.smoothed
        return PanniniParams(*map(float, cfg.clamp(DEFAULT_PARAMS.d, DEFAULT_PARAMS.w)))
    if prev is not None:
        terms = EnergyTerms(content, weights, fd_step, literal)
        if np.isfinite(terms.evaluate(*cfg.clamp(prev.smoothed.d, prev.smoothed.w))[0]):
            return descend_terms(terms, prev, cfg, prev.smoothed).params
    return descend(content, weights, prev, cfg, fd_step, literal).params


def smooth_params(raw: PanniniParams, prev_smoothed: PanniniParams | None, cfg: OptimizerConfig = OptimizerConfig()) -> PanniniParams:
    """Exponential moving average of (d, w); the first frame passes through."""
    if prev_smoothed is None:
        return raw
    d = cfg.omega_md * raw.d + (1.0 - cfg.omega_md) * prev_smoothed.d
    w = cfg.omega_ms * raw.w + (1.0 - cfg.omega_ms) * prev_smoothed.w
    return PanniniParams(d, min(max(w, 0.0), 1.0))


def neighborhood(content: FrameContent, center: SalientPoint, spec: NeighborhoodSpec = NeighborhoodSpec()) -> FrameContent:
    """Lines (by mid point) and salient points within ``spec.radius`` of ``center``."""
    c = center.dir.to_vector()
    dirs = [l.mid for l in content.lines] + [p.dir for p in content.points]
    if not dirs:
        return FrameContent(content.frame_index, [], [center])
    vecs = to_unit([p.phi for p in dirs], [p.theta for p in dirs])
    near = vecs @ c >= math.cos(spec.radius)
    n = len(content.lines)
    lines = [l for l, ok in zip(content.lines, near[:n]) if ok]
    points = [p for p, ok in zip(content.points, near[n:]) if ok and p != center]
    return FrameContent(content.frame_index, lines, [center, *points])


def recenter(content: FrameContent, center: SphericalPoint) -> FrameContent:
    """Re-express content in the frame of a view looking straight at ``center``."""
    v = Viewpoint.centered_on(center)

    def rot(p: SphericalPoint) -> SphericalPoint:
        return rotate_into_view(p, v)

    lines = [LineSegment(rot(l.start), rot(l.mid), rot(l.end)) for l in content.lines]
    points = [SalientPoint(rot(p.dir), p.score) for p in content.points]
    return FrameContent(content.frame_index, lines, points)


def local_terms(
    content: FrameContent,
    spec: NeighborhoodSpec = NeighborhoodSpec(),
    weights: EnergyWeights = EnergyWeights(),
    fd_step: float = FD_STEP,
    literal: bool = False,
) -> list[EnergyTerms]:
    """Per salient point, the energy of its neighborhood seen from a view centered on it.

    Entry k matches ``EnergyTerms(recenter(neighborhood(content, points[k]), ...))``
    without building intermediate content objects.
    """
    n, m = len(content.lines), len(content.points)
    if m == 0:
        return []
    line_ang = np.array([[[p.phi, p.theta] for p in (l.start, l.mid, l.end)] for l in content.lines]).reshape(n, 3, 2)
    pt_ang = np.array([[p.dir.phi, p.dir.theta] for p in content.points])
    line_vec = to_unit(line_ang[..., 0], line_ang[..., 1])
    pt_vec = to_unit(pt_ang[:, 0], pt_ang[:, 1])
    cos_r = math.cos(spec.radius)
    near_lines = line_vec[:, 1] @ pt_vec.T >= cos_r  # (n, m)
    near_pts = pt_vec @ pt_vec.T >= cos_r  # (m, m)
    out = []
    for k, center in enumerate(content.points):
        rot = Viewpoint.centered_on(center.dir).matrix()
        others = [j for j, p in enumerate(content.points) if near_pts[j, k] and p != center]
        lp, lt = from_unit(line_vec[near_lines[:, k]] @ rot)
        pp, pt = from_unit(pt_vec[[k, *others]] @ rot)
        out.append(EnergyTerms.from_angles(lp, lt, pp, pt, weights, fd_step, literal))
    return out
