"""Content-aware, temporally consistent Pannini projection for 360° imagery."""

from panoproj.errors import FrustumError, NumericError, ValidationError
from panoproj.projection import FrameSpec, PanniniParams, PlanePoint
from panoproj.sphere import SphericalPoint, Viewpoint

__all__ = [
    "FrameSpec",
    "FrustumError",
    "NumericError",
    "PanniniParams",
    "PlanePoint",
    "SphericalPoint",
    "ValidationError",
    "Viewpoint",
]

__version__ = "0.1.0"
