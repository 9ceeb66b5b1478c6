import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from panoproj.content import FrameContent, LineSegment, SalientPoint
from panoproj.errors import FrustumError, ValidationError
from panoproj.metrics import (
    EnergyTerms,
    EnergyWeights,
    MetricReport,
    conformality_distortion,
    conformality_measure,
    evaluate,
    line_distortion,
    objective,
    reports_to_csv,
    reports_to_json,
    straightness,
)
from panoproj.projection import PanniniParams, projector
from panoproj.sphere import SphericalPoint

RECT = projector(PanniniParams(0, 0))
STEREO = projector(PanniniParams(1, 0))


def _line(a, b):
    return LineSegment.from_endpoints(SphericalPoint(*a), SphericalPoint(*b))


def _pt(phi, theta):
    return SalientPoint(SphericalPoint(phi, theta))


def mercator(phi, theta):
    return np.asarray(phi, dtype=float), np.log(np.tan(math.pi / 4 + np.asarray(theta, dtype=float) / 2))


@pytest.mark.parametrize("d, w", [(0, 0), (1, 0), (0.5, 0.5), (2.5, 1.0)])
def test_vertical_line_is_straight(d, w):
    l = LineSegment(SphericalPoint(0.6, -0.5), SphericalPoint(0.6, 0.0), SphericalPoint(0.6, 0.5))
    assert line_distortion(l, projector(PanniniParams(d, w))) == 0.0
    assert straightness(l, projector(PanniniParams(d, w))) == 1.0


def test_rectilinear_keeps_all_lines(rng):
    for _ in range(200):
        a = rng.uniform([-1.2, -1.0], [1.2, 1.0])
        b = rng.uniform([-1.2, -1.0], [1.2, 1.0])
        if np.linalg.norm(a - b) < 0.1:
            continue
        assert line_distortion(_line(a, b), RECT) < 1e-10


def test_horizontal_small_circle_oracle():
    # constant-latitude points are not a great circle, so the energy kernel is fed raw angles;
    # the value is an mpmath evaluation of the line energy
    terms = EnergyTerms.from_angles([[-1.0, 0.0, 1.0]], [[0.4, 0.4, 0.4]], [], [], EnergyWeights(1.0, 0.0))
    assert terms.evaluate(1.0, 0.0)[0] == pytest.approx(0.015921674660332179, rel=1e-12)


@pytest.mark.parametrize("d", np.linspace(0, 3, 7))
@pytest.mark.parametrize("w", [0.0, 0.4, 1.0])
def test_conformality_zero_at_center(d, w):
    assert conformality_distortion(_pt(0, 0), projector(PanniniParams(d, w))) < 1e-6


def test_anisotropic_stretch():
    def stretch(phi, theta):
        return 2 * np.asarray(phi, dtype=float), np.asarray(theta, dtype=float)

    assert conformality_distortion(_pt(0, 0), stretch) == pytest.approx(1.0, abs=1e-9)


def test_conformality_stencil_oracle():
    # central differences with step 1e-3 evaluated at 30 digits
    p = _pt(math.pi / 4, math.pi / 6)
    proj = projector(PanniniParams(1, 0.5))
    assert conformality_distortion(p, proj) == pytest.approx(0.40392885802220450, rel=1e-8)
    assert conformality_distortion(p, proj, literal=True) == pytest.approx(1.4758379035111462, rel=1e-8)


def test_literal_form_is_one_at_center():
    assert conformality_distortion(_pt(0, 0), STEREO, literal=True) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("scale, angle", [(1.0, 0.0), (3.0, 0.0), (0.25, 0.7)])
def test_conformal_map_stays_zero_under_similarity(scale, angle):
    c, s = math.cos(angle), math.sin(angle)

    def sim(phi, theta):
        u, v = mercator(phi, theta)
        return scale * (c * u - s * v), scale * (s * u + c * v)

    for p in (_pt(0, 0), _pt(0.4, 0.5), _pt(-1.0, -0.8)):
        assert conformality_distortion(p, sim) < 1e-6 * scale**2


def test_stencil_outside_frustum_raises():
    with pytest.raises(FrustumError):
        conformality_distortion(_pt(math.pi / 2 - 1e-4, 0.0), RECT)


def test_objective_examples():
    empty = FrameContent(0, [], [])
    assert objective(empty, PanniniParams(0.3, 0.3)) == 0.0
    vertical = FrameContent(0, [LineSegment(SphericalPoint(0.5, -0.3), SphericalPoint(0.5, 0), SphericalPoint(0.5, 0.3))], [])
    for d, w in [(0, 0), (1, 1), (2, 0.5)]:
        assert objective(vertical, PanniniParams(d, w)) == 0.0


def test_objective_term_by_term():
    l1 = _line((-0.9, 0.3), (0.8, 0.5))
    l2 = _line((0.2, -0.6), (1.1, -0.2))
    p = _pt(0.7, 0.2)
    c = FrameContent(0, [l1, l2], [p])
    wts = EnergyWeights(1e-3, 1e-4)
    expected = 1e-3 * (line_distortion(l1, STEREO) + line_distortion(l2, STEREO)) + 1e-4 * conformality_distortion(p, STEREO)
    assert objective(c, PanniniParams(1, 0), wts) == pytest.approx(expected, rel=1e-14)


def test_energy_terms_match_objective(scene_content, rng):
    terms = EnergyTerms(scene_content)
    for d, w in rng.uniform([0, 0], [3, 1], (20, 2)):
        assert terms.evaluate(d, w)[0] == pytest.approx(objective(scene_content, PanniniParams(d, w)), rel=1e-12)
    both = terms.evaluate([0.2, 1.7], [0.1, 0.9])
    assert both.shape == (2,)


def test_energy_terms_mark_frustum_violations():
    terms = EnergyTerms(FrameContent(0, [_line((1.3, 0.0), (1.6, 0.1))], []))
    assert terms.evaluate(0.0, 0.0)[0] == math.inf
    assert math.isfinite(terms.evaluate(1.0, 0.0)[0])


def test_objective_finite_on_grid(scene_content):
    terms = EnergyTerms(scene_content)
    d, w = np.meshgrid(np.linspace(0, 3, 100), np.linspace(0, 1, 100))
    vals = terms.evaluate(d.ravel(), w.ravel())
    assert np.all(np.isfinite(vals))


def test_straightness_examples():
    l = _line((0.0, 0.0), (1.0, 0.0))

    def tent(phi, theta):
        phi = np.asarray(phi, dtype=float)
        return phi, 1.0 - 2.0 * np.abs(phi - 0.5)

    assert straightness(l, tent) == pytest.approx(0.5)
    assert straightness(l, RECT) == 1.0


def test_conformality_measure_examples():
    ident = lambda phi, theta: (np.asarray(phi, dtype=float), np.asarray(theta, dtype=float))  # noqa: E731
    assert conformality_measure(_pt(0, 0), ident) == pytest.approx(1.0)

    def lopsided(phi, theta):
        phi = np.asarray(phi, dtype=float)
        return np.where(phi > 0, 2 * phi, phi), np.asarray(theta, dtype=float)

    assert conformality_measure(_pt(0, 0), lopsided) == pytest.approx(0.5)


def test_rectilinear_less_conformal_off_center():
    p = _pt(math.radians(60), 0.0)
    assert conformality_measure(p, RECT) < conformality_measure(p, STEREO)


def test_rectilinear_straightness_on_scene(scene_content):
    r = evaluate(scene_content, RECT, "rectilinear")
    assert min(r.straightness) >= 0.999


lines_st = st.tuples(st.floats(-1.2, 1.2), st.floats(-1.0, 1.0), st.floats(-1.2, 1.2), st.floats(-1.0, 1.0))


@given(lines_st, st.floats(0, 3), st.floats(0, 1))
def test_scores_in_unit_interval_and_coupled(coords, d, w):
    a, b = coords[:2], coords[2:]
    if math.hypot(a[0] - b[0], a[1] - b[1]) < 0.05:
        return
    l = _line(a, b)
    proj = projector(PanniniParams(d, w))
    try:
        s = straightness(l, proj)
        dist = line_distortion(l, proj)
        c = conformality_measure(SalientPoint(l.mid), proj)
    except FrustumError:
        return
    assert 0.0 <= s <= 1.0 and 0.0 <= c <= 1.0
    if dist == 0.0:
        assert s == 1.0
    if s < 1.0 - 1e-9:
        assert dist > 0.0


def test_report_summaries_and_serialization():
    r = MetricReport("m", [1.0, 0.5, 0.75], [0.25, 1.0])
    assert r.mean_straightness == pytest.approx(0.75)
    assert r.min_straightness <= r.mean_straightness <= max(r.straightness)
    assert r.min_conformality == 0.25
    data = json.loads(reports_to_json([r]))
    assert data["reports"][0]["mean_conformality"] == pytest.approx(0.625)
    rows = list(csv.DictReader(io.StringIO(reports_to_csv([r]))))
    per_line = [float(x["value"]) for x in rows if x["kind"] == "straightness"]
    mean_row = [float(x["value"]) for x in rows if x["kind"] == "mean_straightness"]
    assert mean_row == [pytest.approx(sum(per_line) / len(per_line))]


def test_weights_validated():
    with pytest.raises(ValidationError):
        EnergyWeights(-1.0, 0.0)
