import hashlib
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from panoproj.errors import ValidationError
from panoproj.imageio import read_image, write_ppm
from panoproj.interpolation import WarpMap, build_warp
from panoproj.projection import RECTILINEAR, STEREOGRAPHIC, FrameSpec, PanniniParams
from panoproj.render import check_equirect, project_single, render, sample_bilinear
from panoproj.sphere import Viewpoint, to_unit
from panoproj.synth import SceneSpec, generate

DATA = Path(__file__).parent / "data"
GOLDEN = DATA / "golden_synth_150_d1.ppm"
SPEC = FrameSpec(math.radians(100), 64, 36)


def _ramp(w=512, h=256):
    j = np.arange(w)
    i = np.arange(h)
    src = np.zeros((h, w, 3), dtype=np.uint8)
    src[..., 0] = np.round(255 * (j + 0.5) / w)[None, :]
    src[..., 1] = np.round(255 * (i + 0.5) / h)[:, None]
    src[..., 2] = 77
    return src


def golden_frame() -> np.ndarray:
    img, _ = generate(SceneSpec(width=1024, height=512))
    return project_single(img, STEREOGRAPHIC, FrameSpec(math.radians(150), 256, 144))


def test_uniform_source_uniform_output(rng):
    src = np.zeros((32, 64, 3), dtype=np.uint8)
    src[:] = (12, 200, 99)
    warp = build_warp(PanniniParams(0.7, 0.4), SPEC, [])
    for _ in range(3):
        view = Viewpoint(*rng.uniform(-math.pi, math.pi, 3))
        out = render(src, warp, view)
        assert np.all(out[warp.valid] == (12, 200, 99))


def test_color_field_oracle():
    src = _ramp()
    out = render(src, build_warp(RECTILINEAR, SPEC, []))
    # analytic rectilinear inverse per output pixel
    u_max = math.tan(SPEC.h_fov / 2)
    ppu = (SPEC.width - 1) / (2 * u_max)
    ys, xs = np.mgrid[0:SPEC.height, 0:SPEC.width].astype(float)
    u = (xs - (SPEC.width - 1) / 2) / ppu
    v = ((SPEC.height - 1) / 2 - ys) / ppu
    phi = np.arctan(u)
    theta = np.arctan(v * np.cos(phi))
    ex = (phi + math.pi) / (2 * math.pi) * 512
    ey = (math.pi / 2 - theta) / math.pi * 256
    assert np.max(np.abs(out[..., 0] - 255 * ex / 512)) <= 1.0
    assert np.max(np.abs(out[..., 1] - 255 * ey / 256)) <= 1.0
    assert np.all(out[..., 2] == 77)


def test_seam_stripe_continuous():
    src = np.zeros((64, 128, 3), dtype=np.uint8)
    src[:, 0] = 255  # first column starts at phi = -pi
    out = render(src, build_warp(RECTILINEAR, FrameSpec(math.radians(60), 41, 21), []), Viewpoint(math.pi, 0, 0))
    red = out[..., 0].astype(int)
    # the stripe straddles the seam and sits mid-frame in every row, without gaps
    peak = red.argmax(axis=1)
    assert np.all(np.abs(peak - 20) <= 1)
    assert np.all(red.max(axis=1) >= 100)
    assert np.all(red[:, :10] == 0) and np.all(red[:, -10:] == 0)


class _Tracked(np.ndarray):
    seen: list = []

    def __getitem__(self, key):
        if isinstance(key, tuple):
            _Tracked.seen.append(tuple(np.asarray(k) for k in key))
        return np.asarray(self).__getitem__(key)


@given(st.lists(st.tuples(st.floats(-1e4, 1e4), st.floats(-500, 500)), min_size=1, max_size=40))
def test_sampling_stays_inside_buffer(coords):
    src = np.arange(16 * 32 * 3, dtype=np.float64).reshape(16, 32, 3).view(_Tracked)
    _Tracked.seen = []
    x = np.array([c[0] for c in coords])
    y = np.array([c[1] for c in coords])
    out = sample_bilinear(src, x, y)
    assert np.all(np.isfinite(out))
    for rows, cols in _Tracked.seen:
        assert rows.min() >= 0 and rows.max() < 16
        assert cols.min() >= 0 and cols.max() < 32


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi / 2, math.pi / 2), st.floats(-math.pi, math.pi))
def test_render_random_vectors(yaw, pitch, roll):
    rng = np.random.default_rng(7)
    vec = to_unit(rng.uniform(-math.pi, math.pi, (6, 5)), rng.uniform(-math.pi / 2, math.pi / 2, (6, 5)))
    vec[0, 0] = (0.0, 1.0, 0.0)  # pole
    vec[0, 1] = (0.0, 0.0, -1.0)  # seam
    out = render(_ramp(64, 32), WarpMap(vec, np.ones((6, 5), dtype=bool)), Viewpoint(yaw, pitch, roll))
    assert out.shape == (6, 5, 3) and out.dtype == np.uint8


def test_invalid_pixels_black():
    src = np.full((32, 64, 3), 200, dtype=np.uint8)
    warp = build_warp(STEREOGRAPHIC, SPEC, [])
    warp.valid[2, 3] = False
    out = render(src, warp)
    assert np.all(out[2, 3] == 0) and np.all(out[0, 0] == 200)


def test_render_deterministic(rng):
    src = rng.integers(0, 256, (64, 128, 3), dtype=np.uint8)
    warp = build_warp(PanniniParams(1.2, 0.3), SPEC, [])
    view = Viewpoint(0.3, -0.2, 0.1)
    assert np.array_equal(render(src, warp, view), render(src, warp, view))


def test_model_reductions(rng):
    src = rng.integers(0, 256, (64, 128, 3), dtype=np.uint8)
    view = Viewpoint(0.5, 0.1, 0.0)
    assert np.array_equal(project_single(src, PanniniParams(0.0, 0.0), SPEC, view), project_single(src, RECTILINEAR, SPEC, view))
    assert np.array_equal(project_single(src, PanniniParams(1.0, 0.0), SPEC, view), project_single(src, STEREOGRAPHIC, SPEC, view))
    assert np.array_equal(project_single(src, STEREOGRAPHIC, SPEC, view), render(src, build_warp(STEREOGRAPHIC, SPEC, []), view))


def test_check_equirect():
    with pytest.raises(ValidationError):
        check_equirect(np.zeros((10, 30, 3), dtype=np.uint8))
    with pytest.raises(ValidationError):
        check_equirect(np.zeros((10, 20, 3), dtype=np.float32))
    with pytest.raises(ValidationError):
        check_equirect(np.zeros((10, 20), dtype=np.uint8))


def test_golden_image(tmp_path):
    out = golden_frame()
    path = tmp_path / "frame.ppm"
    write_ppm(path, out)
    got, want = path.read_bytes(), GOLDEN.read_bytes()
    if got != want:
        diff = int(np.sum(np.any(read_image(path) != read_image(GOLDEN), axis=-1)))
        pytest.fail(f"golden mismatch: {diff} pixels differ (sha256 {hashlib.sha256(got).hexdigest()[:12]})")
