import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skyrmion_lab import moduli as md
from skyrmion_lab.solutions import meromorphic_v


def params(k, a):
    return md.MeromorphicParams(k, complex(a))


# -- thresholds -------------------------------------------------------------------------

@pytest.mark.parametrize("k,value", [(2, Fraction(1, 16)), (5, Fraction(8, 3125)), (-2, Fraction(16, 27)),
                                     (-3, Fraction(27, 32)), (-4, Fraction(4096, 3125)),
                                     (-5, Fraction(3125, 1458))])
def test_threshold_values(k, value):
    assert md.threshold_a_star(k) == value


@pytest.mark.parametrize("k", [-1, 0, 1])
def test_threshold_domain(k):
    with pytest.raises(ValueError):
        md.threshold_a_star(k)


@given(st.integers(2, 12))
def test_threshold_general_form_agrees_for_positive_k(k):
    assert md.threshold_general_form(k) == md.threshold_a_star(k)


def test_threshold_is_where_zero_set_changes_topology():
    # below a* the level |v|^2 = 1 along the Z0 ray has several crossings; the
    # merged curve above a* has none between the origin and the outer branch
    k = 2
    a_star = float(md.threshold_a_star(k))
    counts = []
    for ratio in (0.9, 1.1):
        res = md.z1_extract(params(k, 1j * ratio * a_star), resolution=513)
        counts.append(res.count)
    assert counts == [4, 1]


# -- Z0 -----------------------------------------------------------------------------

def test_z0_k2():
    z0 = md.z0_points(params(2, 0.1j))
    pts = z0.points
    assert len(pts) == 4
    np.testing.assert_allclose(pts[0], [0, 0])
    np.testing.assert_allclose(np.hypot(*pts[1:].T), 5.0, rtol=1e-10)
    ang = np.sort(np.mod(np.arctan2(pts[1:, 1], pts[1:, 0]), 2 * np.pi))
    np.testing.assert_allclose(ang, [0, 2 * np.pi / 3, 4 * np.pi / 3], atol=1e-10)


def test_z0_k_minus_one_cases():
    z0 = md.z0_points(params(-1, 1j))
    assert z0.circle_radius == pytest.approx(math.sqrt(2))
    assert len(z0.points) == 0
    assert md.z0_points(params(-1, 1)).empty


@pytest.mark.parametrize("k,a", [(2, 0.1j), (3, 0.02 + 0.01j), (-2, 8j / 27), (-3, 1j), (-5, 0.3 - 2j), (0, 0.4j)])
def test_z0_points_are_zeros_of_v(k, a):
    z0 = md.z0_points(params(k, a))
    z = z0.points[:, 0] + 1j * z0.points[:, 1]
    assert np.all(np.abs(meromorphic_v(z, k, a)) < 1e-8)
    expected = (k + 2) if k >= 2 else (1 if k == 0 else abs(k + 1))
    assert len(z) == expected
    # the analytic formula is already exact before the root polish
    raw = md.z0_points(params(k, a), refine=False)
    np.testing.assert_allclose(raw.points, z0.points, atol=1e-9)


def test_params_validation():
    with pytest.raises(ValueError):
        md.MeromorphicParams(2, 0)
    md.MeromorphicParams(0, 0)


# -- Z1 -------------------------------------------------------------------------------

@pytest.mark.parametrize("k,a,count,nested", [(2, 1j / 20, 4, False), (2, 1j / 10, 1, False),
                                              (-2, 8j / 27, 2, True), (-3, 81j / 64, 2, False)])
def test_z1_examples(k, a, count, nested):
    res = md.z1_extract(params(k, a))
    assert res.count == count
    assert all(c.closed for c in res.curves)
    assert res.nested == nested
    for c in res.curves:
        np.testing.assert_array_equal(c.points[0], c.points[-1])
        step = np.linalg.norm(np.diff(c.points, axis=0), axis=1)
        assert step.max() <= 2 * res.spacing


def test_z1_k_minus_one_concentric_circles():
    res = md.z1_extract(params(-1, 1j))
    assert res.count == 2 and res.nested
    radii = sorted(float(np.mean(np.hypot(*c.points.T))) for c in res.curves)
    expect = sorted(math.sqrt(2 * (2 + s * math.sqrt(3))) for s in (1, -1))
    np.testing.assert_allclose(radii, expect, rtol=1e-3)


def test_z1_vertices_lie_on_the_level_set():
    for k, a in ((2, 0.05j), (-3, 81j / 64), (5, 0.001j)):
        p = params(k, a)
        res = md.z1_extract(p, resolution=513)
        for err, bound in md.v_level_residuals(p, res):
            assert np.all(err < bound)


def test_subcritical_components_enclose_one_z0_point():
    for k in (2, 3, 5):
        a = 0.5 * float(md.threshold_a_star(k)) * 1j
        res = md.z1_extract(params(k, a), resolution=1025)
        assert res.count == k + 2
        assert [len(c.enclosed_Z0_points) for c in res.curves] == [1] * (k + 2)


def test_inner_curve_converges_to_circle_of_radius_two():
    dist = []
    for a in (1e-2, 1e-3):
        res = md.z1_extract(params(2, 1j * a), window=4.0, resolution=1025)
        inner = min(res.curves, key=lambda c: np.mean(np.hypot(*c.points.T)))
        dist.append(np.abs(np.hypot(*inner.points.T) - 2.0).max())
    assert dist[1] < dist[0] / 2
    assert dist[1] < 0.01


def test_small_window_warns_and_enlarges():
    with pytest.warns(md.WindowWarning):
        res = md.z1_extract(params(2, 0.1j), window=3.0, resolution=257)
    assert any(not c.closed for c in res.curves)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", md.WindowWarning)
        res = md.z1_extract(params(2, 1j / 20))
    assert all(c.closed for c in res.curves)


def test_point_in_polygon():
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]], float)
    assert md.point_in_polygon((0.5, 0.5), square)
    assert not md.point_in_polygon((1.5, 0.5), square)


# -- scans ----------------------------------------------------------------------------

@pytest.mark.parametrize("k", [5, -5, 2, -2, -3])
def test_bifurcation_scan_counts(k):
    rows = md.bifurcation_scan(k)
    below, above = md.expected_counts(k)
    assert [r.count for r in rows] == [below, above]
    assert all(r.resolved and r.count_refined == r.count for r in rows)
    if k <= -2:
        assert rows[0].nested and not rows[1].nested


def test_bifurcation_scan_rejects_threshold_band():
    with pytest.raises(ValueError, match="excluded band"):
        md.bifurcation_scan(2, ratios=(1.02,))


# -- symmetry ---------------------------------------------------------------------------

def test_symmetry_k2_and_negative_control():
    p = params(2, 0.1j)
    coarse = md.z1_extract(p, resolution=513)
    fine = md.z1_extract(p, resolution=1025)
    d_coarse = md.z1_symmetry_check(p, res=coarse)
    d_fine = md.z1_symmetry_check(p, res=fine)
    assert d_fine < 2 * fine.spacing
    assert d_fine < 0.6 * d_coarse  # halves with the spacing
    assert md.z1_symmetry_check(p, angle=math.pi, res=fine) > 10 * fine.spacing


@pytest.mark.parametrize("ratio", [0.5, 2.0])
def test_symmetry_k_minus_four(ratio):
    p = params(-4, 1j * ratio * float(md.threshold_a_star(-4)))
    res = md.z1_extract(p)
    assert md.symmetry_fold(-4) == 3
    assert md.z1_symmetry_check(p, res=res) < 2 * res.spacing


# -- figures -----------------------------------------------------------------------------

def test_emit_svg_triptych(tmp_path):
    ps = [params(2, a) for a in (1j / 20, 1j / 16, 1j / 10)]
    path = tmp_path / "k2.svg"
    text = md.emit_figure(ps, path, "svg", resolution=257)
    assert path.read_text() == text
    assert text.count("<g transform") == 3
    assert 'class="z0"' in text and 'class="z1"' in text
    assert "|a|/a*=1" in text and "|a|/a*=0.8" in text and "|a|/a*=1.6" in text


def test_svg_without_z0_layer():
    import xml.etree.ElementTree as ET
    text = md.emit_figure([params(-1, 1)], None, "svg", resolution=257)
    ET.fromstring(text)
    assert 'class="z0"' not in text
    # |v|^2 = 1/rho^2 + rho^2/4 only touches 1 at rho^2 = 2, so no crossing is drawn
    assert md.z1_extract(params(-1, 1), resolution=257).count == 0


def test_csv_round_trip_counts(tmp_path):
    ps = [params(2, 1j / 20), params(-2, 8j / 27)]
    path = tmp_path / "f.csv"
    text = md.emit_figure(ps, path, "csv", resolution=513)
    assert text.splitlines()[0] == "set,component,x1,x2"
    back = md.read_figure_csv(path.read_text())
    assert len(back["z1"]) == 4 + 2
    assert len(back["z0"]) == 4 + 1
    with pytest.raises(ValueError):
        md.emit_figure(ps, None, "png")


@settings(max_examples=10, deadline=None)
@given(st.sampled_from([2, 3, -2, -3]), st.sampled_from([0.4, 3.0]), st.floats(0, 2 * math.pi))
def test_counts_do_not_depend_on_phase(k, ratio, phase):
    a = ratio * float(md.threshold_a_star(k)) * complex(math.cos(phase), math.sin(phase))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", md.WindowWarning)
        res = md.z1_extract(params(k, a), resolution=513)
    below, above = md.expected_counts(k)
    assert res.count == (below if ratio < 1 else above)
