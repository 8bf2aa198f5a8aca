import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skyrmion_lab import energy as en
from skyrmion_lab import solutions as sol
from skyrmion_lab.grid import GridSpec, SphereField, sample

FOUR_PI = 4 * math.pi


@pytest.fixture(scope="module")
def sky_half():
    return sample(sol.skyrmion(0.5), GridSpec(20.0, 513))


@pytest.fixture(scope="module")
def family_breakdowns():
    return {name: en.evaluate_map(m, 1.0) for name, m in sol.builtin_families().items()}


def test_homogeneous_breakdown_is_zero():
    b = en.evaluate(SphereField.homogeneous(GridSpec(10.0, 65)), 0.5, 0.0)
    for key in ("D", "H", "H_direct", "V", "Z", "A", "E_r", "E_rh", "Q_raw"):
        assert getattr(b, key) == 0.0
    assert b.Q_int == 0


def test_skyrmion_energy_half(sky_half):
    b = en.evaluate(sky_half, 0.5)
    assert b.D == pytest.approx(FOUR_PI, rel=1e-2)
    assert b.E_r == pytest.approx(2 * math.pi, rel=1e-2)
    assert b.E_rh == b.E_r
    assert b.E_r == b.D + 0.5 * b.H + b.V


def test_anti_skyrmion_terms():
    b = en.evaluate_map(sol.anti_skyrmion(1.0), 0.5)
    assert b.D == pytest.approx(FOUR_PI, rel=1e-2)
    assert abs(b.H) < 1e-2 * FOUR_PI
    assert b.V == pytest.approx(2 * FOUR_PI, rel=1e-2)


def test_skyrmion_helicity_at_unit_r():
    b = en.evaluate_map(sol.skyrmion(1.0), 1.0)
    assert b.H == pytest.approx(-16 * math.pi, rel=1e-2)


def test_zeeman_term_enters_linearly():
    n = sample(sol.skyrmion(0.5), GridSpec(10.0, 129))
    b0, b1 = en.evaluate(n, 0.5, 0.0), en.evaluate(n, 0.5, 0.3)
    assert b1.E_rh - b0.E_rh == pytest.approx(0.3 * b0.Z, rel=1e-12)


def test_evaluate_reports_nonfinite_node():
    class Bad(sol.Homogeneous):
        def evaluate(self, x1, x2):
            out = super().evaluate(x1, x2)
            out[0, 0] = np.nan
            return out
    from skyrmion_lab.grid import NonFiniteError
    with pytest.raises(NonFiniteError, match="node"):
        sample(Bad(), GridSpec(1.0, 5))


# -- helicity estimators -----------------------------------------------------------

def test_helicity_forms_vanish_on_e3():
    e3 = SphereField.homogeneous(GridSpec(5.0, 33))
    assert en.helicity_direct(e3) == 0.0
    assert en.helicity_ibp(e3) == 0.0


def test_helicity_forms_agree_on_compact_field():
    n = sample(sol.cutoff_skyrmion(1.0, 10.0), GridSpec(12.0, 257))
    hd, hi = en.helicity_direct(n), en.helicity_ibp(n)
    assert abs(hd - hi) < 1e-6 * (1 + abs(hi))


def test_helicity_forms_agree_on_skyrmion_after_tail_estimate():
    # the two forms differ by a boundary term; extrapolate each from S and 2S
    # at fixed spacing with the 1/S^2 decay of the truncated tails
    vals = {}
    for S in (40.0, 80.0):
        n = sample(sol.skyrmion(1.0), GridSpec.with_spacing(S, 0.125))
        vals[S] = (en.helicity_direct(n), en.helicity_ibp(n))
    hd = (4 * vals[80.0][0] - vals[40.0][0]) / 3
    hi = (4 * vals[80.0][1] - vals[40.0][1]) / 3
    assert abs(hd - hi) < 1e-3 * (1 + abs(hi))
    # the whole-plane tiling agrees as well
    b = en.evaluate_map(sol.skyrmion(1.0), 1.0)
    assert abs(b.H - b.H_direct) < 1e-3 * (1 + abs(b.H))


# -- degree -----------------------------------------------------------------------

def test_degree_examples(sky_half):
    assert en.degree(SphereField.homogeneous(GridSpec(3.0, 9))) == (0.0, 0)
    q, qi = en.degree(sky_half)
    assert qi == -1 and abs(q + 1) < 0.02
    anti = sample(sol.anti_skyrmion(0.5), GridSpec(20.0, 513))
    assert en.degree(anti)[1] == 1


def test_distorted_degrees_flip():
    for a, expect in ((0.25, -1), (0.75, 1)):
        m = sol.distorted(a)
        q, qi = en.degree(sample(m, m.default_grid()))
        assert qi == expect and abs(q - expect) < 0.02


def test_degree_warns_when_unresolved():
    coarse = sample(sol.skyrmion(0.5), GridSpec(40.0, 21))
    with pytest.warns(en.ResolutionWarning):
        en.degree(coarse)


def test_equivariant_degree_examples():
    assert en.equivariant_degree(math.pi, 0.0, 2 * math.pi) == pytest.approx(-1)
    assert en.equivariant_degree(math.pi, 0.0, -2 * math.pi) == pytest.approx(1)
    assert en.equivariant_degree(0.0, 0.0, 6 * math.pi) == 0
    with pytest.raises(ValueError, match="multiple of pi"):
        en.equivariant_degree(1.0, 0.0, 2 * math.pi)
    with pytest.raises(ValueError, match="multiple of 2 pi"):
        en.equivariant_degree(math.pi, math.pi, 2 * math.pi)


# -- Bogomol'nyi residual and identities ---------------------------------------------

def test_residual_of_e3_is_zero():
    e3 = SphereField.homogeneous(GridSpec(5.0, 33))
    for r in (0.3, 1.0, 2.0):
        assert en.bogomolnyi_residual(e3, r) == 0.0


def test_residual_of_skyrmion_shrinks_with_resolution():
    res = [en.bogomolnyi_residual(sample(sol.skyrmion(0.5), GridSpec(10.0, N)), 0.5)
           for N in (65, 129, 257)]
    assert res[0] > 3.5 * res[1] > 3.5 ** 2 * res[2]
    assert res[2] < 1e-4


def test_residual_of_anti_skyrmion():
    b = en.evaluate_map(sol.anti_skyrmion(1.0), 1.0)
    assert b.bogomolnyi_residual == pytest.approx(2 * FOUR_PI, rel=2e-2)


def test_factorization_gap_examples():
    e3 = SphereField.homogeneous(GridSpec(5.0, 33))
    assert en.factorization_gap(e3, 0.7) == 0.0
    n = sample(sol.skyrmion(1.0), GridSpec(40.0, 513))
    b = en.evaluate(n, 0.5)
    assert abs(en.factorization_gap(n, 0.5)) < 1e-2 * (1 + abs(b.E_r))
    m = sol.distorted(0.75)
    d = sample(m, GridSpec(m.default_grid().half_width, 513))
    bd = en.evaluate(d, 1.0)
    assert abs(en.factorization_gap(d, 1.0)) < 1e-2 * (1 + abs(bd.E_r))


def test_factorization_gap_shrinks_under_refinement():
    n = sample(sol.cutoff_skyrmion(0.5, 8.0), GridSpec(4.5, 65))
    coarse = abs(en.factorization_gap(n, 0.5))
    fine = abs(en.factorization_gap(sample(sol.cutoff_skyrmion(0.5, 8.0), n.spec.refined()), 0.5))
    assert fine < coarse / 3.5


def test_dirichlet_identity_sign():
    # D = 1/2 int |d1 n - n x d2 n|^2 - 4 pi Q; the skyrmion makes the first term vanish
    ints = en.map_integrals(sol.skyrmion(1.0))[0]
    assert ints.dir_minus < 1e-3
    assert ints.D == pytest.approx(-FOUR_PI * ints.Q, rel=1e-3)
    assert ints.D == pytest.approx(ints.dir_plus + FOUR_PI * ints.Q, rel=1e-3)


def test_helical_identity_examples(sky_half):
    e3 = SphereField.homogeneous(GridSpec(5.0, 33))
    assert en.helical_identity_gap(e3, 0.8) == 0.0
    b = en.evaluate(sky_half, 0.5)
    assert abs(en.helical_identity_gap(sky_half, 0.5)) < 1e-2 * (1 + b.D)
    m = sol.meromorphic(2, 0.1j)
    n = sample(m, m.default_grid())
    bm = en.evaluate(n, 1.0)
    assert abs(bm.helical_identity_gap) < 2e-2 * (1 + bm.D)


# -- BRS correction -----------------------------------------------------------------

def test_brs_corrections():
    r2 = en.brs_energy(sol.meromorphic(2, 0.1j))
    assert abs(r2.correction) < 1e-2
    assert r2.energy == pytest.approx(r2.E1)
    rm2 = en.brs_energy(sol.meromorphic(-2, 8j / 27))
    assert rm2.correction == pytest.approx(2 * FOUR_PI, rel=1e-2)
    rs = en.brs_energy(sol.skyrmion(1.0))
    assert rs.correction == pytest.approx(2 * FOUR_PI, rel=1e-2)
    assert rs.converged


def test_contour_correction_matches_area_integral():
    # Stokes: the contour value equals int_{|x|<R} e3 . curl n computed on a grid
    amap = sol.skyrmion(1.0)
    R = 6.0
    n = sample(amap, GridSpec(R, 481))
    d1, d2 = n.gradients()
    X1, X2 = n.spec.mesh()
    inside = (X1 ** 2 + X2 ** 2 < R * R).astype(float)
    area = n.integrate(inside * (d1[..., 1] - d2[..., 0]))
    assert en.contour_helicity_correction(amap, R) == pytest.approx(area, rel=2e-2)


# -- invariants over the built-in families ----------------------------------------

def test_potential_split_is_exact(family_breakdowns):
    for name, b in family_breakdowns.items():
        assert abs(b.V - (b.Z - b.A)) <= 1e-12 * (1 + b.Z), name


@given(st.floats(-1.0, 1.0))
def test_potential_split_pointwise(n3):
    lhs = 0.5 * (1 - n3) ** 2
    rhs = (1 - n3) - 0.5 * (1 - n3 * n3)
    assert abs(lhs - rhs) < 4e-16


def test_energy_lower_bounds(family_breakdowns):
    ints = {name: en.map_integrals(m)[0] for name, m in sol.builtin_families().items()}
    for r in (0.25, 0.5, 0.75, 1.0):
        for name, it in ints.items():
            b = it.breakdown(r)
            eps = abs(b.factorization_gap) + 1e-6 * (1 + abs(b.E_r))
            assert b.E_r >= FOUR_PI * r * r * b.Q_raw + (1 - r * r) * b.D - eps, (name, r)
            assert b.D >= FOUR_PI * abs(b.Q_raw) - b.dirichlet_gap - 1e-6, name


def test_degree_quantization_on_sampled_families():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", en.ResolutionWarning)
        for name, m in sol.builtin_families().items():
            spec = m.default_grid()
            assert spec.samples_per_axis >= 257
            q, qi = en.degree(sample(m, spec))
            assert abs(q - qi) < 0.02, name


def _symmetry_field():
    return sample(sol.cutoff_skyrmion(0.7, 6.0), GridSpec(5.0, 121))


@pytest.mark.parametrize("cells", [(3, 0), (0, -5), (4, 7)])
def test_invariance_under_grid_translation(cells):
    n = _symmetry_field()
    b0 = en.evaluate(n, 0.7)
    b1 = en.evaluate(n.shifted(*cells), 0.7)
    assert b1.E_r == pytest.approx(b0.E_r, rel=1e-6)
    assert b1.Q_raw == pytest.approx(b0.Q_raw, rel=1e-6)


def test_invariance_under_quarter_rotation():
    n = _symmetry_field()
    b0 = en.evaluate(n, 0.7)
    m = n
    for _ in range(4):
        m = m.rotated_quarter()
        b = en.evaluate(m, 0.7)
        assert b.E_r == pytest.approx(b0.E_r, rel=1e-6)
        assert b.Q_raw == pytest.approx(b0.Q_raw, rel=1e-6)
    assert np.allclose(m.values, n.values, atol=1e-15)


def test_rotation_of_a_non_symmetric_field():
    m = sol.meromorphic(2, 0.1j)
    n = sample(m, GridSpec(12.0, 121))
    b0 = en.evaluate(n, 1.0)
    b1 = en.evaluate(n.rotated_quarter(), 1.0)
    assert b1.E_r == pytest.approx(b0.E_r, rel=1e-6)
    assert b1.Q_raw == pytest.approx(b0.Q_raw, rel=1e-6)


# -- whole-plane evaluation -----------------------------------------------------------

def test_exact_and_fd_derivatives_agree_on_patches():
    for m in (sol.skyrmion(0.5), sol.distorted(0.25), sol.cutoff_skyrmion(1.0, 16.0)):
        a = en.evaluate_map(m, 0.8, derivatives="fd")
        b = en.evaluate_map(m, 0.8, derivatives="exact")
        assert a.E_r == pytest.approx(b.E_r, rel=1e-3)
        assert a.Q_raw == pytest.approx(b.Q_raw, abs=1e-4)
        a2 = en.evaluate_map(m, 0.8, derivatives="fd", refine=2)
        b2 = en.evaluate_map(m, 0.8, derivatives="exact", refine=2)
        assert abs(a2.E_r - b2.E_r) < abs(a.E_r - b.E_r) / 3  # at least second order


def test_tail_estimate_present_for_noncompact_maps():
    b = en.evaluate_map(sol.skyrmion(1.0), 1.0)
    assert 0 < b.tail["D"] < 1e-2
    assert en.evaluate_map(sol.cutoff_skyrmion(1.0, 8.0), 1.0).tail == {}


# -- JSON ---------------------------------------------------------------------------

def test_json_keys_and_round_trip(sky_half):
    b = en.evaluate(sky_half, 0.5, 0.1)
    d = json.loads(b.to_json())
    assert set(d) == {"D", "H_ibp", "H_direct", "V", "Z", "A", "E_r", "E_rh", "Q_raw", "Q_int",
                      "residual", "fact_gap", "r", "h", "N", "S"}
    back = en.EnergyBreakdown.from_json(b.to_json())
    for k, v in back.to_json_dict().items():
        assert v == d[k]
    with pytest.raises(ValueError):
        en.EnergyBreakdown.from_json(json.dumps({**d, "extra": 1}))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(-1.0, 1.0))
def test_breakdown_construction_identities(r, h):
    ints = en.map_integrals(sol.cutoff_skyrmion(0.6, 8.0), refine=0.5)[0]
    b = ints.breakdown(r, h)
    assert b.E_r == ints.D + r * ints.H_ibp + ints.V
    assert b.E_rh == b.E_r + h * ints.Z
    assert b.bogomolnyi_residual >= 0
