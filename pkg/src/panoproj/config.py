"""All tunables of the projection pipeline, with a flat ``key = value`` file format."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from panoproj.errors import ValidationError
from panoproj.interpolation import BlendWeights
from panoproj.metrics import EnergyWeights
from panoproj.optimizer import NeighborhoodSpec, OptimizerConfig
from panoproj.projection import FrameSpec
from panoproj.temporal import TemporalState


@dataclass(frozen=True)
class ProjectionConfig:
    h_fov: float = 150.0  # degrees
    width: int = 1280
    height: int = 720
    omega_d: float = 1e-3
    omega_c: float = 1e-4
    omega_pd: float = 0.999
    omega_ps: float = 1e-6
    omega_md: float = 0.9
    omega_ms: float = 0.9
    omega_p_moving: float = 0.99
    omega_p_static: float = 0.8
    motion_threshold: float = 1e-3  # radians per frame
    c_g: float = 2.0
    c_anchor: float = 1.0
    sigma: float = 0.0  # squared pixels; 0 selects (0.05 * width)^2
    min_line_length: float = math.radians(5.0)
    neighborhood_radius: float = 0.52
    max_points: int = 5
    nms_radius: int = 8
    blend_w: float = 0.5
    step_size: float = 0.1
    max_iters: int = 200
    grad_tol: float = 1e-7
    fd_step_params: float = 1e-4
    fd_step: float = 1e-3
    d_max: float = 3.0
    literal_eq4: bool = False

    def __post_init__(self):
        if self.sigma < 0:
            raise ValidationError("sigma must be >= 0 (0 selects the default)")
        if self.max_points < 0 or self.nms_radius < 0:
            raise ValidationError("max_points and nms_radius must be >= 0")
        if not 0.0 <= self.blend_w <= 1.0:
            raise ValidationError("blend_w must lie in [0, 1]")
        if self.min_line_length < 0 or self.fd_step <= 0 or self.d_max < 0:
            raise ValidationError("min_line_length, fd_step and d_max must be non-negative (fd_step > 0)")
        # build every derived object once so bad values fail here, not mid-run
        self.frame_spec()
        self.energy_weights()
        self.optimizer()
        self.neighborhood()
        self.blend_weights()
        self.temporal_state()

    def frame_spec(self) -> FrameSpec:
        return FrameSpec(math.radians(self.h_fov), self.width, self.height)

    def energy_weights(self) -> EnergyWeights:
        return EnergyWeights(self.omega_d, self.omega_c)

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(
            step_size=self.step_size, max_iters=self.max_iters, grad_tol=self.grad_tol,
            fd_step_params=self.fd_step_params, d_bounds=(0.0, self.d_max), w_bounds=(0.0, 1.0),
            omega_pd=self.omega_pd, omega_ps=self.omega_ps, omega_md=self.omega_md, omega_ms=self.omega_ms,
        )

    def neighborhood(self) -> NeighborhoodSpec:
        return NeighborhoodSpec(self.neighborhood_radius)

    def blend_weights(self) -> BlendWeights:
        return BlendWeights(self.c_g, self.sigma if self.sigma > 0 else None)

    def temporal_state(self) -> TemporalState:
        return TemporalState(None, None, self.omega_p_moving, self.omega_p_static, self.motion_threshold)

    def with_overrides(self, **kw) -> "ProjectionConfig":
        unknown = set(kw) - {f.name for f in fields(self)}
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return replace(self, **kw)


def _coerce(name: str, kind: type, text: str):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        value = float(text)
        if not math.isfinite(value):
            raise ValueError(text)
        return value
    except ValueError:
        raise ValidationError(f"config key {name!r}: cannot parse {text!r} as {kind.__name__}") from None


_TYPES = {"float": float, "int": int, "bool": bool}


def parse_config(text: str, base: ProjectionConfig = ProjectionConfig()) -> ProjectionConfig:
    """Parse ``key = value`` lines over ``base``; ``#`` starts a comment."""
    types = {f.name: _TYPES[f.type] for f in fields(ProjectionConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise ValidationError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, types[key], value)
    return replace(base, **values)


def load_config(path) -> ProjectionConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def format_config(cfg: ProjectionConfig) -> str:
    """Every key, one per line, in declaration order; parse_config inverts it exactly."""
    out = []
    for key, value in asdict(cfg).items():
        if isinstance(value, bool):
            text = "true" if value else "false"
        else:
            text = repr(value)
        out.append(f"{key} = {text}")
    return "\n".join(out) + "\n"
