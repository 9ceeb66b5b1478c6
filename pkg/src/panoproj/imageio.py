"""RGB image reading and writing (PNG via Pillow, binary PPM directly)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from panoproj.errors import ValidationError


def write_ppm(path, img: np.ndarray) -> None:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(img.tobytes())


def read_image(path) -> np.ndarray:
    """Load any Pillow-readable image as an (H, W, 3) uint8 array."""
    from PIL import Image

    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except (OSError, ValueError) as exc:
        raise ValidationError(f"cannot read image {path}: {exc}") from None


def write_image(path, img: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm"):
        write_ppm(path, img)
        return
    from PIL import Image

    Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8)).save(path)
