import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skyrmion_lab import grid as g
from skyrmion_lab import solutions as sol
from skyrmion_lab.grid import FieldError, GridSpec, SphereField, sample


# -- GridSpec / SphereField ------------------------------------------------------

def test_gridspec_spacing_and_validation():
    spec = GridSpec(10.0, 201)
    assert spec.spacing == pytest.approx(0.1)
    assert spec.coords[100] == 0.0
    assert spec.refined().samples_per_axis == 401
    with pytest.raises(FieldError):
        GridSpec(0.0, 11)
    with pytest.raises(FieldError):
        GridSpec(1.0, 2)


def test_sample_homogeneous_is_e3():
    n = sample(sol.homogeneous(), GridSpec(5.0, 17))
    assert np.array_equal(n.values, np.broadcast_to([0.0, 0.0, 1.0], (17, 17, 3)))


def test_sample_skyrmion_at_origin_and_unit_radius():
    spec = GridSpec(20.0, 201)  # spacing 0.2 so (2, 0) is a node
    n = sample(sol.skyrmion(1.0), spec)
    np.testing.assert_allclose(n.values[100, 100], [0, 0, -1], atol=1e-15)
    np.testing.assert_allclose(n.values[100, 110], [0, 1, 0], atol=1e-12)


def test_field_rejects_bad_shapes_and_nan():
    spec = GridSpec(1.0, 5)
    with pytest.raises(FieldError):
        SphereField(spec, np.zeros((4, 5, 3)))
    vals = np.broadcast_to([0.0, 0.0, 1.0], (5, 5, 3)).copy()
    vals[1, 3] = np.nan
    with pytest.raises(g.NonFiniteError, match=r"\(1, 3\)"):
        SphereField(spec, vals)


def test_field_values_unit_and_read_only():
    n = sample(sol.skyrmion(0.5), GridSpec(8.0, 65))
    assert np.abs(np.linalg.norm(n.values, axis=-1) - 1).max() < 1e-12
    with pytest.raises(ValueError):
        n.values[0, 0, 0] = 1.0


def test_evaluation_outside_grid_is_exactly_e3():
    n = sample(sol.skyrmion(1.0), GridSpec(4.0, 33))
    out = n.at(np.array([5.0, -100.0, 0.0]), np.array([0.0, 3.0, 4.5]))
    assert np.array_equal(out, np.tile([0.0, 0.0, 1.0], (3, 1)))
    np.testing.assert_allclose(n.at(0.0, 0.0), [0, 0, -1], atol=1e-12)


def test_binary_round_trip(tmp_path):
    n = sample(sol.skyrmion(0.7), GridSpec(6.0, 33))
    path = tmp_path / "f.sfld"
    n.save(path)
    data = path.read_bytes()
    assert data[:4] == b"SFLD"
    assert len(data) == 32 + 33 * 33 * 3 * 8
    m = SphereField.load(path)
    assert m.spec == n.spec
    assert np.array_equal(m.values, n.values)
    path.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(FieldError, match="magic"):
        SphereField.load(path)


def test_csv_export(tmp_path):
    n = sample(sol.skyrmion(1.0), GridSpec(2.0, 5))
    path = tmp_path / "f.csv"
    n.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x1,x2,n1,n2,n3"
    assert len(lines) == 26
    row = np.array([float(x) for x in lines[13].split(",")])
    np.testing.assert_allclose(row, [0, 0, 0, 0, -1], atol=1e-15)


# -- charts ------------------------------------------------------------------------

def test_north_chart_examples():
    np.testing.assert_allclose(g.north_chart_to_sphere(0), [0, 0, -1])
    np.testing.assert_allclose(g.north_chart_to_sphere(np.inf), [0, 0, 1])
    np.testing.assert_allclose(g.north_chart_to_sphere(1), [1, 0, 0], atol=1e-15)


def test_south_chart_examples():
    np.testing.assert_allclose(g.south_chart_to_sphere(0), [0, 0, 1])
    assert abs(g.south_chart_to_sphere(1)[2]) < 1e-15
    v = 2j
    np.testing.assert_allclose(g.south_chart_to_sphere(1 / v), g.north_chart_to_sphere(v), atol=1e-15)


def test_chart_overlap_random_points():
    rng = np.random.default_rng(7)
    mod = 10 ** rng.uniform(-3, 3, size=100)
    v = mod * np.exp(2j * np.pi * rng.uniform(size=100))
    # evaluate the north chart with its raw formula, bypassing the overflow guard
    s = np.abs(v) ** 2 + 1
    north = np.stack([2 * v.real / s, -2 * v.imag / s, (np.abs(v) ** 2 - 1) / s], -1)
    south = g.south_chart_to_sphere(1 / v)
    assert np.abs(north - south).max() < 1e-12
    assert np.abs(g.north_chart_to_sphere(v) - south).max() < 1e-12


@given(st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_chart_inverses(v):
    n = g.north_chart_to_sphere(v)
    assert abs(np.linalg.norm(n) - 1) < 1e-12
    assert abs(g.sphere_to_north_chart(n) - v) <= 1e-9 * max(1.0, abs(v))
    w = g.sphere_to_south_chart(n)
    assert abs(w * v - 1) < 1e-9


# -- identities and quadrature -------------------------------------------------------

unit_vectors = st.tuples(*[st.floats(-1, 1) for _ in range(3)]).filter(
    lambda t: 0.1 < math.sqrt(sum(x * x for x in t)))


@given(unit_vectors)
def test_sphere_identity_pointwise(t):
    n = np.array(t) / np.linalg.norm(t)
    lhs = 2 * (1 - n[2])
    rhs = np.sum((n - [0, 0, 1]) ** 2)
    assert abs(lhs - rhs) < 1e-15 * 8


def test_sphere_identity_on_sampled_fields():
    for name, amap in sol.builtin_families().items():
        n = sample(amap, GridSpec(amap.default_grid().half_width, 65))
        lhs = 2 * (1 - n.n3)
        rhs = np.sum((n.values - [0, 0, 1]) ** 2, -1)
        assert np.abs(lhs - rhs).max() < 1e-14, name


def test_dirichlet_quadrature_convergence_order():
    sky = sol.skyrmion(1.0)
    vals = []
    for N in (129, 257, 513):
        n = sample(sky, GridSpec(40.0, N))
        d1, d2 = n.gradients()
        vals.append(n.integrate(np.sum(d1 ** 2, -1) + np.sum(d2 ** 2, -1)))
    order = math.log2(abs(vals[0] - vals[1]) / abs(vals[1] - vals[2]))
    assert order >= 1.8


def test_difference_stencil_orders():
    for N in (3, 4, 5, 9, 33):
        x = np.linspace(0, 1, N)
        D = g.diff_matrix(N, x[1] - x[0])
        np.testing.assert_allclose(D @ (3 * x + 1), 3.0, atol=1e-10)
        np.testing.assert_allclose(D @ x ** 2, 2 * x, atol=1e-10)


def test_trapezoid_integrates_gaussian():
    spec = GridSpec(8.0, 129)
    X1, X2 = spec.mesh()
    n = SphereField.homogeneous(spec)
    assert n.integrate(np.exp(-(X1 ** 2 + X2 ** 2))) == pytest.approx(math.pi, rel=1e-12)


def test_reduce_sum_independent_of_threads(monkeypatch):
    a = np.random.default_rng(1).normal(size=(700, 300)) * 1e6
    monkeypatch.setenv("SKYRMION_LAB_THREADS", "1")
    one = g.reduce_sum(a)
    monkeypatch.setenv("SKYRMION_LAB_THREADS", "7")
    many = g.reduce_sum(a)
    assert one == many


# -- metrics -----------------------------------------------------------------------

def test_metrics_identity_and_positivity():
    spec = GridSpec(20.0, 129)
    sky = sample(sol.skyrmion(1.0), spec)
    e3 = SphereField.homogeneous(spec)
    assert g.metric_dM(sky, sky) == 0.0
    assert g.metric_dMprime(sky, sky) == 0.0
    d = g.metric_dM(e3, sky)
    assert 0 < d < np.inf
    with pytest.raises(FieldError):
        g.metric_dM(sky, sample(sol.skyrmion(1.0), GridSpec(20.0, 65)))


def test_metric_cutoff_decreasing_in_R():
    spec = GridSpec(40.0, 401)
    sky = sample(sol.skyrmion(1.0), spec)
    d = [g.metric_dM(sample(sol.cutoff_skyrmion(1.0, R), spec), sky) for R in (5, 10, 20)]
    assert d[0] > d[1] > d[2] > 0


def test_metric_dMprime_is_linear_in_small_amplitude():
    spec = GridSpec(8.0, 129)
    e3 = SphereField.homogeneous(spec)
    X1, X2 = spec.mesh()
    bump = np.exp(-(X1 ** 2 + X2 ** 2))
    phi = np.stack([bump, 0.5 * bump, np.zeros_like(bump)], -1)
    ratios = []
    for t in (1e-2, 5e-3, 2.5e-3):
        n = SphereField(spec, np.array([0, 0, 1.0]) + t * phi)
        ratios.append(g.metric_dMprime(n, e3) / t)
    assert ratios[0] == pytest.approx(ratios[2], rel=1e-3)


def test_ladyzhenskaya_ratio_over_gaussian_widths():
    # for exp(-|x|^2 / 2 sigma^2) the ratio is (2 pi)^(-1/4) independent of sigma
    expect = (2 * math.pi) ** -0.25
    worst = 0.0
    for sigma in (0.5, 1.0, 2.0, 4.0, 8.0):
        spec = GridSpec(10 * sigma, 257)
        X1, X2 = spec.mesh()
        f = np.exp(-(X1 ** 2 + X2 ** 2) / (2 * sigma ** 2))
        ratio = g.ladyzhenskaya_ratio(f, spec)
        assert ratio == pytest.approx(expect, rel=1e-4)
        worst = max(worst, ratio)
    assert worst < 1.0


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 8.0), st.floats(0.2, 3.0))
def test_ladyzhenskaya_ratio_bounded_for_elliptic_bumps(sigma, aspect):
    spec = GridSpec(10 * sigma * max(aspect, 1), 257)
    X1, X2 = spec.mesh()
    f = np.exp(-(X1 ** 2 / aspect ** 2 + X2 ** 2) / (2 * sigma ** 2))
    assert g.ladyzhenskaya_ratio(f, spec) < 1.0
