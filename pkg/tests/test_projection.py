import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from panoproj.errors import FrustumError, ValidationError
from panoproj.projection import (
    FrameSpec,
    PanniniParams,
    PlanePoint,
    max_phi,
    pannini_backward,
    pannini_forward,
    pannini_inverse,
    pannini_uv,
    plane_scale,
    rectilinear,
    stereographic,
)
from panoproj.sphere import SphericalPoint, to_unit

ds = st.floats(0.0, 3.0)
ws = st.floats(0.0, 1.0)


def test_params_validation():
    for d, w in [(-0.1, 0), (1, -0.01), (1, 1.5), (float("nan"), 0)]:
        with pytest.raises(ValidationError):
            PanniniParams(d, w)


def test_center_maps_to_origin():
    for d, w in [(0, 0), (1, 0), (0.5, 0.9), (3, 1)]:
        q = pannini_forward(SphericalPoint(0, 0), PanniniParams(d, w))
        assert q == PlanePoint(0.0, 0.0)


def test_stereographic_half_angle_identity():
    q = pannini_forward(SphericalPoint(math.pi / 3, 0), PanniniParams(1, 0))
    assert q.u == pytest.approx(1.154700538379, abs=1e-12)
    assert q.v == 0.0


def test_general_forward_oracle():
    # mpmath evaluation of the forward formula at 30 digits
    q = pannini_forward(SphericalPoint(0.8, 0.5), PanniniParams(0.7, 0.3))
    assert q.u == pytest.approx(0.87312915901950353, abs=1e-14)
    assert q.v == pytest.approx(0.70068837785394435, abs=1e-14)


def test_rectilinear_oracle():
    q = rectilinear(SphericalPoint(0.5, 0.5))
    assert q.u == pytest.approx(0.54630248984379051, abs=1e-14)
    assert q.v == pytest.approx(0.62250836965928046, abs=1e-14)
    for phi in (-1.2, 0.3, 1.0):
        assert rectilinear(SphericalPoint(phi, 0)).u == pytest.approx(math.tan(phi), abs=1e-12)
        assert stereographic(SphericalPoint(phi, 0)).u == pytest.approx(2 * math.tan(phi / 2), abs=1e-12)


def test_out_of_frustum_raises():
    with pytest.raises(FrustumError):
        pannini_forward(SphericalPoint(math.pi / 2, 0), PanniniParams(0, 0))
    with pytest.raises(FrustumError):
        pannini_forward(SphericalPoint(2.0, 0), PanniniParams(1, 0.5))
    # d = 1 reaches almost to the back of the sphere
    pannini_forward(SphericalPoint(3.0, 0.2), PanniniParams(1, 0))


def test_max_phi_values():
    g = 1e-3
    assert max_phi(0, 0) == pytest.approx(math.pi / 2 - g)
    # at d=1 the denominator guard is tighter than the angular guard
    assert max_phi(1, 0) == pytest.approx(math.acos(1e-6 - 1))
    assert max_phi(1, 0) < math.pi - g
    assert max_phi(2, 0) == pytest.approx(math.acos(-0.5) - g)
    assert max_phi(1, 0.5) == pytest.approx(math.pi / 2 - g)


def test_inverse_examples():
    p = pannini_inverse(PlanePoint(0, 0), PanniniParams(0.4, 0.2))
    assert (p.phi, p.theta) == (0.0, 0.0)
    p = pannini_inverse(PlanePoint(1.0, 0), PanniniParams(0, 0))
    assert p.phi == pytest.approx(math.pi / 4, abs=1e-15)


def test_inverse_rejects_unreachable():
    # rectilinear u grows without bound, d = 2 does not
    with pytest.raises(FrustumError):
        pannini_inverse(PlanePoint(50.0, 0), PanniniParams(2, 0))


def test_plane_scale_examples():
    s = plane_scale(FrameSpec(math.radians(150), 1280, 720), PanniniParams(0, 0))
    assert s.u_max == pytest.approx(math.tan(math.radians(75)), abs=1e-12)
    s = plane_scale(FrameSpec(math.radians(150), 1280, 720), PanniniParams(1, 0))
    assert s.u_max == pytest.approx(2 * math.tan(math.radians(37.5)), abs=1e-12)
    assert s.pixel_to_plane(0, 0)[0] == pytest.approx(-s.u_max)
    assert s.pixel_to_plane(1279, 0)[0] == pytest.approx(s.u_max)
    assert s.pixel_to_plane(639.5, 359.5) == pytest.approx((0.0, 0.0))
    with pytest.raises(FrustumError):
        plane_scale(FrameSpec(math.radians(179.99), 100, 50), PanniniParams(0, 0.5))


def test_from_aspect():
    spec = FrameSpec.from_aspect(170, 2100, (21, 9))
    assert (spec.width, spec.height) == (2100, 900)


@given(st.floats(-1.5, 1.5), st.floats(-1.4, 1.4), ws)
def test_reduction_at_d0(phi, theta, w):
    u0, v0 = pannini_uv(phi, theta, 0.0, w)
    assert abs(u0 - math.tan(phi)) < 1e-12 * max(1.0, abs(math.tan(phi)))
    _, v1 = pannini_uv(phi, theta, 0.0, 1.0 - w)
    assert abs(v0 - v1) < 1e-12 * max(1.0, abs(v0))


@given(ds, ws, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_u_monotone_in_phi(d, w, a, b):
    lim = 0.999 * max_phi(d, w)
    pa, pb = sorted((a * 2 * lim - lim, b * 2 * lim - lim))
    if pb - pa < 1e-9:
        return
    ua, _ = pannini_uv(pa, 0.0, d, w)
    ub, _ = pannini_uv(pb, 0.0, d, w)
    assert ub > ua


def test_roundtrip_10k(rng):
    n = 10_000
    d = rng.uniform(0, 3, n)
    w = rng.uniform(0, 1, n)
    lim = np.array([max_phi(a, b) for a, b in zip(d, w)])
    phi = rng.uniform(-1, 1, n) * lim * 0.999
    theta = rng.uniform(-1.45, 1.45, n)
    u, v = pannini_uv(phi, theta, d, w)
    err = 0.0
    for i in range(n):
        vec, ok = pannini_backward(u[i], v[i], d[i], w[i])
        assert ok
        err = max(err, float(np.max(np.abs(vec - to_unit(phi[i], theta[i])))))
    assert err < 1e-9
