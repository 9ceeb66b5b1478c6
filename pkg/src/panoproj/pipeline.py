"""Frame-sequential content-aware projection: optimize, align, blend, smooth, render."""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from panoproj.config import ProjectionConfig
from panoproj.content import (
    FrameContent,
    SalientPoint,
    blend_saliency,
    extract_peaks,
    load_annotations,
    load_saliency,
)
from panoproj.errors import NumericError, ValidationError
from panoproj.interpolation import AnchorModel, InterpolatedModel, WarpMap, align_local, build_warp
from panoproj.metrics import MetricReport, evaluate
from panoproj.optimizer import (
    ParamState,
    descend_terms,
    local_terms,
    optimize,
    smooth_params,
)
from panoproj.projection import RECTILINEAR, STEREOGRAPHIC, FrameSpec, PanniniParams, projector
from panoproj.render import render
from panoproj.sphere import SphericalPoint, Viewpoint, angular_distance, rotate_into_view, to_unit
from panoproj.temporal import TemporalState, smooth_map

log = logging.getLogger(__name__)

BASELINE_MODELS = ("rectilinear", "pannini-d1", "pannini-d0.5", "optimized", "proposed")


class StageError(Exception):
    """A pipeline stage failed; carries the frame index and stage name."""

    def __init__(self, frame: int, stage: str, cause: Exception):
        super().__init__(f"frame {frame}, stage {stage}: {cause}")
        self.frame = frame
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class LocalState:
    center: SphericalPoint
    raw: PanniniParams
    smoothed: PanniniParams


@dataclass
class FrameModel:
    """Everything computed for one frame before rendering."""

    frame_index: int
    global_state: ParamState
    locals: list[LocalState] = field(default_factory=list)
    anchors: list[AnchorModel] = field(default_factory=list)
    skipped: list[int] = field(default_factory=list)  # salient points whose anchor left the frame


@dataclass
class FrameResult:
    model: FrameModel
    warp: WarpMap
    image: np.ndarray | None
    viewpoint: Viewpoint

    def report(self) -> dict:
        m = self.model
        g = m.global_state
        return {
            "frame": m.frame_index,
            "viewpoint": [self.viewpoint.yaw, self.viewpoint.pitch, self.viewpoint.roll],
            "global_raw": [g.raw.d, g.raw.w],
            "global": [g.smoothed.d, g.smoothed.w],
            "locals": [
                {"center": [s.center.phi, s.center.theta], "raw": [s.raw.d, s.raw.w], "params": [s.smoothed.d, s.smoothed.w]}
                for s in m.locals
            ],
            "anchors": [{"pixel": list(a.anchor_px), "scale": a.scale} for a in m.anchors],
            "skipped_points": list(m.skipped),
            "valid_fraction": float(np.mean(self.warp.valid)),
        }


def _stage(frame: int, name: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (ValidationError, NumericError) as exc:
        raise StageError(frame, name, exc) from exc


def _match_previous(centers: list[SphericalPoint], prev: list[LocalState], radius: float) -> list[LocalState | None]:
    """For each center, the previous local whose center is nearest, if within ``radius``."""
    if not prev or not centers:
        return [None] * len(centers)
    cur = to_unit([c.phi for c in centers], [c.theta for c in centers])
    old = to_unit([s.center.phi for s in prev], [s.center.theta for s in prev])
    dist = angular_distance(cur[:, None, :], old[None, :, :])
    nearest = np.argmin(dist, axis=1)
    return [prev[k] if dist[i, k] <= radius else None for i, k in enumerate(nearest)]


def fit_frame(
    content: FrameContent,
    cfg: ProjectionConfig,
    prev_global: ParamState | None = None,
    prev_locals: list[LocalState] = (),
) -> FrameModel:
    """Global and local model fitting plus anchor alignment for one frame.

    Global parameters carry the temporal penalty and EMA; each local model is
    smoothed against the previous frame's local whose center is nearest (within
    the neighborhood radius).
    """
    t = content.frame_index
    opt = cfg.optimizer()
    weights = cfg.energy_weights()
    spec = cfg.frame_spec()

    raw = _stage(t, "global-optimize", optimize, content, weights, prev_global, opt, cfg.fd_step, cfg.literal_eq4)
    smoothed = smooth_params(raw, prev_global.smoothed if prev_global is not None else None, opt)
    model = FrameModel(t, ParamState(raw, smoothed, t))

    terms = _stage(t, "local-optimize", local_terms, content, cfg.neighborhood(), weights, cfg.fd_step, cfg.literal_eq4)
    matches = _match_previous([p.dir for p in content.points], list(prev_locals), cfg.neighborhood_radius)
    for p, term, before in zip(content.points, terms, matches):
        local_raw = _stage(t, "local-optimize", descend_terms, term, None, opt).params
        local = smooth_params(local_raw, before.smoothed if before is not None else None, opt)
        model.locals.append(LocalState(p.dir, local_raw, local))

    for i, (p, s) in enumerate(zip(content.points, model.locals)):
        try:
            model.anchors.append(align_local(smoothed, spec, p, s.smoothed, cfg.c_anchor))
        except ValidationError as exc:
            log.info("frame %d: salient point %d skipped (%s)", t, i, exc)
            model.skipped.append(i)
        except NumericError as exc:
            raise StageError(t, "align", exc) from exc
    return model


class Pipeline:
    """Processes frames strictly in order; owns all temporal state."""

    def __init__(self, cfg: ProjectionConfig = ProjectionConfig()):
        self.cfg = cfg
        self.spec: FrameSpec = cfg.frame_spec()
        self.prev_global: ParamState | None = None
        self.prev_locals: list[LocalState] = []
        self.temporal: TemporalState = cfg.temporal_state()

    def checkpoint(self) -> dict:
        return copy.deepcopy({"global": self.prev_global, "locals": self.prev_locals, "temporal": self.temporal})

    def restore(self, state: dict) -> None:
        state = copy.deepcopy(state)
        self.prev_global = state["global"]
        self.prev_locals = state["locals"]
        self.temporal = state["temporal"]

    def process(self, src: np.ndarray | None, content: FrameContent, viewpoint: Viewpoint = Viewpoint()) -> FrameResult:
        """Run one frame. State only advances if every stage succeeds."""
        t = content.frame_index
        model = fit_frame(content, self.cfg, self.prev_global, self.prev_locals)
        warp = _stage(t, "warp", build_warp, model.global_state.smoothed, self.spec, model.anchors, self.cfg.blend_weights())
        temporal = copy.copy(self.temporal)
        warp = _stage(t, "temporal", smooth_map, warp, temporal, viewpoint)
        image = None if src is None else _stage(t, "render", render, src, warp, viewpoint)
        self.prev_global = model.global_state
        self.prev_locals = model.locals
        self.temporal = temporal
        return FrameResult(model, warp, image, viewpoint)


# trajectories


def load_trajectory(path) -> dict[int, Viewpoint]:
    """``frame,yaw,pitch,roll`` CSV (radians) with strictly increasing frame indices."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ValidationError(f"cannot read trajectory {path}: {exc.strerror}") from None
    if not rows or [c.strip() for c in rows[0]] != ["frame", "yaw", "pitch", "roll"]:
        raise ValidationError(f"{path}: header must be frame,yaw,pitch,roll")
    out: dict[int, Viewpoint] = {}
    last = -1
    for n, row in enumerate(rows[1:], 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise ValidationError(f"{path} line {n}: expected 4 fields, got {len(row)}")
        try:
            frame = int(row[0])
            yaw, pitch, roll = (float(c) for c in row[1:])
        except ValueError:
            raise ValidationError(f"{path} line {n}: cannot parse {row}") from None
        if not all(math.isfinite(v) for v in (yaw, pitch, roll)):
            raise ValidationError(f"{path} line {n}: non-finite angle")
        if frame <= last:
            raise ValidationError(f"{path} line {n}: frame indices must increase strictly")
        last = frame
        out[frame] = Viewpoint(yaw, pitch, roll)
    return out


def viewpoint_at(trajectory: dict[int, Viewpoint], frame: int) -> Viewpoint:
    """Hold the last viewpoint at or before ``frame``; the identity before the first entry."""
    best = None
    for k in trajectory:
        if k <= frame and (best is None or k > best):
            best = k
    return trajectory[best] if best is not None else Viewpoint()


def save_trajectory(path, trajectory: dict[int, Viewpoint]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["frame", "yaw", "pitch", "roll"])
        for k in sorted(trajectory):
            v = trajectory[k]
            out.writerow([k, repr(v.yaw), repr(v.pitch), repr(v.roll)])


# annotations with optional saliency maps


def saliency_points(frame: dict, base: Path, viewpoint: Viewpoint, cfg: ProjectionConfig) -> list[SalientPoint]:
    """Peaks of a frame's ``saliency`` entry, rotated into the view and limited to the horizontal FOV.

    The entry is a map path, or ``{"appear": path, "motion": path}`` blended with ``blend_w``.
    """
    entry = frame.get("saliency")
    if entry is None:
        return []
    if isinstance(entry, str):
        s = load_saliency(base / entry)
    elif isinstance(entry, dict) and set(entry) == {"appear", "motion"}:
        s = blend_saliency(load_saliency(base / entry["appear"]), load_saliency(base / entry["motion"]), cfg.blend_w)
    else:
        raise ValidationError("saliency: expected a path or an object with 'appear' and 'motion' paths")
    half = 0.5 * math.radians(cfg.h_fov)
    out = []
    for p in extract_peaks(s, cfg.nms_radius, cfg.max_points):
        q = rotate_into_view(p.dir, viewpoint)
        if abs(q.phi) < half:
            out.append(SalientPoint(q, p.score))
    return out


def load_sequence_content(path, cfg: ProjectionConfig, trajectory: dict[int, Viewpoint]) -> dict[int, FrameContent]:
    frames = load_annotations(path, cfg.min_line_length)
    out = {c.frame_index: c for c in frames}
    raw = json.loads(Path(path).read_text() or "{}")
    for i, frame in enumerate(raw.get("frames", [])):
        if "saliency" not in frame:
            continue
        index = frame.get("index", i)
        extra = saliency_points(frame, Path(path).parent, viewpoint_at(trajectory, index), cfg)
        c = out[index]
        out[index] = FrameContent(index, c.lines, [*c.points, *extra])
    return out


# evaluation


def model_projector(name: str, content: FrameContent, cfg: ProjectionConfig):
    """Projection function for a named model; raises ValueError for unknown names."""
    params = named_params(name, content, cfg)
    if params is not None:
        return projector(params)
    model = fit_frame(content, cfg)
    return InterpolatedModel(model.global_state.smoothed, cfg.frame_spec(), model.anchors, cfg.blend_weights()).projector()


def fit_params(content: FrameContent, cfg: ProjectionConfig) -> PanniniParams:
    return optimize(content, cfg.energy_weights(), None, cfg.optimizer(), cfg.fd_step, cfg.literal_eq4)


def named_params(name: str, content: FrameContent, cfg: ProjectionConfig) -> PanniniParams | None:
    """(d, w) of a single-model name, or None for ``proposed``."""
    fixed = {"rectilinear": RECTILINEAR, "stereographic": STEREOGRAPHIC, "pannini-d1": STEREOGRAPHIC,
             "pannini-d0.5": PanniniParams(0.5, 0.0)}
    if name in fixed:
        return fixed[name]
    if name.startswith("pannini:"):
        try:
            d, w = (float(x) for x in name[len("pannini:"):].split(","))
        except ValueError:
            raise ValueError(f"bad model {name!r}; expected pannini:D,W") from None
        return PanniniParams(d, w)
    if name == "optimized":
        return fit_params(content, cfg)
    if name == "proposed":
        return None
    raise ValueError(f"unknown model {name!r}")


def run_evaluate(content: FrameContent, models=BASELINE_MODELS, cfg: ProjectionConfig = ProjectionConfig()) -> list[MetricReport]:
    """Straightness and conformality of every requested model over ground-truth content."""
    return [evaluate(content, model_projector(name, content, cfg), name) for name in models]


def frame_warp(name: str, content: FrameContent, cfg: ProjectionConfig) -> WarpMap:
    """Warp map of a named model for a single frame (no temporal history)."""
    params = named_params(name, content, cfg)
    if params is not None:
        return build_warp(params, cfg.frame_spec(), [])
    model = fit_frame(content, cfg)
    return build_warp(model.global_state.smoothed, cfg.frame_spec(), model.anchors, cfg.blend_weights())

