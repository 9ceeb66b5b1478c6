"""Per-frame content: line segments, salient points and saliency maps.

Annotations are expressed in viewpoint-relative spherical coordinates
(radians) and read from JSON of the form::

    {"frames": [{"index": 0,
                 "lines": [{"start": [phi, theta], "mid": [...], "end": [...]}],
                 "points": [{"dir": [phi, theta], "score": 1.0}]}]}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from panoproj.errors import ValidationError
from panoproj.sphere import SphericalPoint, angular_distance, equirect_to_sphere

MIN_LINE_LENGTH = math.radians(5.0)
MID_TOLERANCE = 1e-6


@dataclass(frozen=True)
class LineSegment:
    start: SphericalPoint
    mid: SphericalPoint
    end: SphericalPoint

    def __post_init__(self):
        s, m, e = self.start.to_vector(), self.mid.to_vector(), self.end.to_vector()
        normal = np.cross(s, e)
        nlen = np.linalg.norm(normal)
        if nlen < 1e-12:
            raise ValidationError("line endpoints coincide or are antipodal")
        off_plane = abs(math.asin(min(1.0, abs(float(np.dot(normal / nlen, m))))))
        detour = float(angular_distance(s, m) + angular_distance(m, e) - angular_distance(s, e))
        if off_plane > MID_TOLERANCE or detour > MID_TOLERANCE:
            raise ValidationError(
                f"mid point off the great-circle arc (off-plane {off_plane:.3g} rad, detour {detour:.3g} rad)"
            )

    @property
    def arc_length(self) -> float:
        return float(angular_distance(self.start.to_vector(), self.end.to_vector()))

    @classmethod
    def from_endpoints(cls, start: SphericalPoint, end: SphericalPoint) -> "LineSegment":
        """Segment whose mid point is the great-circle midpoint of the endpoints."""
        m = start.to_vector() + end.to_vector()
        return cls(start, SphericalPoint.from_vector(m), end)


@dataclass(frozen=True)
class SalientPoint:
    dir: SphericalPoint
    score: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.score) or self.score < 0.0:
            raise ValidationError(f"salient score must be finite and >= 0, got {self.score}")


@dataclass(frozen=True)
class FrameContent:
    frame_index: int = 0
    lines: tuple[LineSegment, ...] = field(default_factory=tuple)
    points: tuple[SalientPoint, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "points", tuple(self.points))

    @property
    def is_empty(self) -> bool:
        return not self.lines and not self.points


def filter_lines(content: FrameContent, min_length: float = MIN_LINE_LENGTH) -> FrameContent:
    """Drop lines shorter than ``min_length`` radians of arc."""
    kept = tuple(l for l in content.lines if l.arc_length >= min_length)
    return FrameContent(content.frame_index, kept, content.points)


def _pair(obj, where: str) -> SphericalPoint:
    if not (isinstance(obj, (list, tuple)) and len(obj) == 2):
        raise ValidationError(f"{where}: expected [phi, theta], got {obj!r}")
    try:
        phi, theta = float(obj[0]), float(obj[1])
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: non-numeric angle in {obj!r}") from None
    if not (math.isfinite(phi) and math.isfinite(theta)):
        raise ValidationError(f"{where}: non-finite angle in {obj!r}")
    if abs(theta) > 0.5 * math.pi:
        raise ValidationError(f"{where}: theta {theta} outside [-pi/2, pi/2]")
    return SphericalPoint(phi, theta)


def parse_annotations(data, min_line_length: float = MIN_LINE_LENGTH) -> list[FrameContent]:
    if not isinstance(data, dict) or not isinstance(data.get("frames", None), list):
        raise ValidationError('annotations: top level must be an object with a "frames" list')
    out = []
    for fi, frame in enumerate(data["frames"]):
        where = f"frames[{fi}]"
        if not isinstance(frame, dict):
            raise ValidationError(f"{where}: expected an object")
        index = frame.get("index", fi)
        if not isinstance(index, int) or isinstance(index, bool):
            raise ValidationError(f"{where}.index: expected an integer, got {index!r}")
        lines = []
        for li, line in enumerate(frame.get("lines", [])):
            lw = f"{where}.lines[{li}]"
            if not isinstance(line, dict):
                raise ValidationError(f"{lw}: expected an object")
            for key in ("start", "mid", "end"):
                if key not in line:
                    raise ValidationError(f"{lw}: missing field '{key}'")
            try:
                lines.append(
                    LineSegment(_pair(line["start"], f"{lw}.start"), _pair(line["mid"], f"{lw}.mid"),
                                _pair(line["end"], f"{lw}.end"))
                )
            except ValidationError as exc:
                if str(exc).startswith(lw):
                    raise
                raise ValidationError(f"{lw}: {exc}") from None
        points = []
        for pi_, point in enumerate(frame.get("points", [])):
            pw = f"{where}.points[{pi_}]"
            if not isinstance(point, dict) or "dir" not in point:
                raise ValidationError(f"{pw}: expected an object with a 'dir' field")
            score = point.get("score", 1.0)
            if not isinstance(score, (int, float)) or isinstance(score, bool):
                raise ValidationError(f"{pw}.score: expected a number, got {score!r}")
            try:
                points.append(SalientPoint(_pair(point["dir"], f"{pw}.dir"), float(score)))
            except ValidationError as exc:
                if str(exc).startswith(pw):
                    raise
                raise ValidationError(f"{pw}: {exc}") from None
        out.append(filter_lines(FrameContent(index, lines, points), min_line_length))
    indices = [c.frame_index for c in out]
    if len(set(indices)) != len(indices):
        raise ValidationError("annotations: duplicate frame index")
    return sorted(out, key=lambda c: c.frame_index)


def load_annotations(path, min_line_length: float = MIN_LINE_LENGTH) -> list[FrameContent]:
    text = Path(path).read_text()
    if not text.strip():
        return []
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_annotations(data, min_line_length)


def annotations_to_dict(frames: list[FrameContent]) -> dict:
    def pair(p: SphericalPoint):
        return [p.phi, p.theta]

    return {
        "frames": [
            {
                "index": c.frame_index,
                "lines": [{"start": pair(l.start), "mid": pair(l.mid), "end": pair(l.end)} for l in c.lines],
                "points": [{"dir": pair(p.dir), "score": p.score} for p in c.points],
            }
            for c in frames
        ]
    }


def save_annotations(path, frames: list[FrameContent]) -> None:
    Path(path).write_text(json.dumps(annotations_to_dict(frames), indent=1))


@dataclass(frozen=True)
class SaliencyMap:
    """Equirectangular scalar map with values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValidationError(f"saliency map must be 2-D, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)) or vals.min(initial=0.0) < 0.0 or vals.max(initial=0.0) > 1.0:
            raise ValidationError("saliency values must be finite and within [0, 1]")
        object.__setattr__(self, "values", vals)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def load_saliency(path) -> SaliencyMap:
    """Read a single-channel PGM/PNG and scale by the format's maximum value."""
    from PIL import Image

    with Image.open(path) as img:
        if img.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(img, dtype=np.float64) / 65535.0
        else:
            arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    return SaliencyMap(np.clip(arr, 0.0, 1.0))


def blend_saliency(appear: SaliencyMap, motion: SaliencyMap, blend_w: float) -> SaliencyMap:
    """Scene saliency as ``blend_w * appear + (1 - blend_w) * motion``."""
    if appear.values.shape != motion.values.shape:
        raise ValidationError(f"saliency shapes differ: {appear.values.shape} vs {motion.values.shape}")
    if not 0.0 <= blend_w <= 1.0:
        raise ValidationError(f"blend_w must lie in [0, 1], got {blend_w}")
    return SaliencyMap(np.clip(blend_w * appear.values + (1.0 - blend_w) * motion.values, 0.0, 1.0))


def _disk(radius: int) -> np.ndarray:
    r = np.arange(-radius, radius + 1)
    return (r[:, None] ** 2 + r[None, :] ** 2) <= radius * radius


def extract_peaks(s: SaliencyMap, nms_radius: int = 8, max_points: int = 5) -> list[SalientPoint]:
    """Strict local maxima of ``s`` within a disk of ``nms_radius`` pixels.

    A pixel qualifies only if it exceeds every other pixel in its disk, so
    plateaus yield nothing and surviving peaks are automatically separated by
    more than ``nms_radius``. The map wraps horizontally across the seam.
    """
    if nms_radius < 1:
        raise ValidationError(f"nms_radius must be >= 1, got {nms_radius}")
    footprint = _disk(int(nms_radius))
    footprint[nms_radius, nms_radius] = False
    vals = s.values
    # horizontal wrap by padding columns; vertical edges see -inf beyond the poles
    pad = int(nms_radius)
    padded = np.pad(vals, ((pad, pad), (0, 0)), constant_values=-np.inf)
    padded = np.pad(padded, ((0, 0), (pad, pad)), mode="wrap")
    neigh = ndimage.maximum_filter(padded, footprint=footprint, mode="constant", cval=-np.inf)
    neigh = neigh[pad:-pad, pad:-pad]
    rows, cols = np.nonzero(vals > neigh)
    scores = vals[rows, cols]
    order = np.lexsort((cols, rows, -scores))[:max_points]
    return [
        SalientPoint(equirect_to_sphere(cols[i] + 0.5, rows[i] + 0.5, s.width, s.height), float(scores[i]))
        for i in order
    ]
