import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eitmono.errors import ParameterError
from eitmono.forward import assemble_ntd
from eitmono.geometry import IndicatorField
from eitmono.locpot import (
    classify,
    conductivity_independence_check,
    energy_form,
    locpot_dichotomy_sweep,
    localized_potential,
    reachable,
    region_from_shapes,
)
from eitmono.mesh import ball_to_region


@pytest.fixture(scope="module")
def sigma4(mesh4):
    return np.where(np.hypot(*(mesh4.centroids - [-0.3, 0.1]).T) < 0.3, 2.0, 1.0)


class TestEnergyForm:
    def test_empty_region(self, mesh4, basis4):
        assert np.all(energy_form(mesh4, 1.0, basis4, []).matrix == 0)

    def test_full_region_is_ntd(self, mesh4, basis4):
        e = energy_form(mesh4, 1.0, basis4, np.arange(mesh4.n_triangles)).matrix
        a = assemble_ntd(mesh4, 1.0, basis4).values
        assert np.abs(e - a).max() <= 1e-9 * np.abs(a).max()

    def test_weighted_full_region_is_ntd(self, mesh4, basis4, sigma4):
        e = energy_form(mesh4, sigma4, basis4, np.arange(mesh4.n_triangles), weighted=True)
        a = assemble_ntd(mesh4, sigma4, basis4).values
        assert np.abs(e.matrix - a).max() <= 1e-9 * np.abs(a).max()

    def test_additive(self, mesh4, basis4, sigma4):
        r1 = ball_to_region(mesh4, (0.3, 0.0), 0.3)
        r2 = np.setdiff1d(np.arange(mesh4.n_triangles), r1)
        whole = energy_form(mesh4, sigma4, basis4, np.arange(mesh4.n_triangles)).matrix
        parts = (energy_form(mesh4, sigma4, basis4, r1).matrix
                 + energy_form(mesh4, sigma4, basis4, r2).matrix)
        assert np.abs(whole - parts).max() <= 1e-12 * np.abs(whole).max()

    def test_psd(self, mesh4, basis4, sigma4):
        m = energy_form(mesh4, sigma4, basis4, ball_to_region(mesh4, (0, 0.4), 0.2)).matrix
        assert np.linalg.eigvalsh(m).min() >= -1e-12 * np.trace(m)

    def test_bad_region(self, mesh4, basis4):
        with pytest.raises(ParameterError):
            energy_form(mesh4, 1.0, basis4, [mesh4.n_triangles])


def _random_psd(r, n, rank=None):
    x = r.standard_normal((n, rank or n))
    return x @ x.T


class TestLocalizedPotential:
    def test_equal_forms(self, rng):
        a = _random_psd(rng, 6)
        p = localized_potential(a, a, 1e-8)
        assert p.ratio <= 1.0 + 1e-12

    def test_zero_numerator(self, rng):
        p = localized_potential(np.zeros((5, 5)), _random_psd(rng, 5), 1e-8)
        assert abs(p.ratio) < 1e-12

    def test_normalization(self, rng):
        a1, a2 = _random_psd(rng, 6), _random_psd(rng, 6, 3)
        eps = 1e-6
        p = localized_potential(a1, a2, eps)
        g = p.coefficients
        assert g @ (a2 + eps * np.eye(6)) @ g == pytest.approx(1.0, rel=1e-9)
        assert p.e1 == pytest.approx(p.ratio, rel=1e-9)

    def test_maximizes(self, rng):
        a1, a2 = _random_psd(rng, 5), _random_psd(rng, 5)
        p = localized_potential(a1, a2, 1e-8)
        for _ in range(200):
            g = rng.standard_normal(5)
            assert g @ a1 @ g / (g @ (a2 + 1e-8 * np.eye(5)) @ g) <= p.ratio * (1 + 1e-10)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_congruence_invariant(self, seed):
        r = np.random.default_rng(seed)
        a1, a2 = _random_psd(r, 5), _random_psd(r, 5)
        q, _ = np.linalg.qr(r.standard_normal((5, 5)))
        p = localized_potential(a1, a2, 1e-8)
        pq = localized_potential(q.T @ a1 @ q, q.T @ a2 @ q, 1e-8)
        assert pq.ratio == pytest.approx(p.ratio, rel=1e-8)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_antitone_in_eps(self, seed):
        r = np.random.default_rng(seed)
        a1, a2 = _random_psd(r, 5), _random_psd(r, 5, 2)
        vals = [localized_potential(a1, a2, e).ratio for e in (1e-6, 1e-4, 1e-2)]
        assert vals[0] >= vals[1] >= vals[2]

    def test_bad_eps_and_shape(self):
        with pytest.raises(ParameterError):
            localized_potential(np.eye(2), np.eye(2), 0.0)
        with pytest.raises(ParameterError):
            localized_potential(np.eye(2), np.eye(3))


@pytest.mark.parametrize("values,expected", [
    ([1.0, 5.0, 20.0], "blow-up"),
    ([1.0, 1.2, 1.1], "bounded"),
    ([1.0, 3.0, 5.0], "indeterminate"),
    ([0.0, 1.0], "indeterminate"),
    ([1.0], "indeterminate"),
])
def test_classify(values, expected):
    assert classify(values) == expected


class TestRegions:
    def test_annulus(self, mesh4):
        reg = region_from_shapes(mesh4, [{"kind": "annulus", "center": [0, 0],
                                          "inner": 0.3, "outer": 0.5}])
        r = np.hypot(*mesh4.centroids[reg].T)
        assert np.all((r > 0.3) & (r < 0.5))

    def test_contrast_ignored(self, mesh4):
        a = region_from_shapes(mesh4, [{"kind": "disk", "center": [0, 0], "radius": 0.3}])
        b = region_from_shapes(mesh4, [{"kind": "disk", "center": [0, 0], "radius": 0.3,
                                        "contrast": 2.0}])
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("bad", [
        {"kind": "annulus", "center": [0, 0], "inner": 0.5, "outer": 0.3},
        {"kind": "annulus", "center": [0.8, 0], "inner": 0.1, "outer": 0.3},
        {"kind": "annulus", "center": [0, 0], "inner": 0.1, "outer": 0.3, "x": 1},
    ])
    def test_bad_annulus(self, mesh4, bad):
        with pytest.raises(ParameterError):
            region_from_shapes(mesh4, [bad])

    def test_reachable(self, grid16):
        r = np.hypot(*grid16.centers.T)
        ring = IndicatorField(grid16, (r > 0.4) & (r < 0.6))
        inner = IndicatorField(grid16, r < 0.2)
        outer = IndicatorField(grid16, r > 0.75)
        assert not reachable(inner, ring)
        assert reachable(outer, ring)


class TestSweep:
    def test_reachable_grows_shielded_flat(self, mesh4):
        d1 = ball_to_region(mesh4, (0.0, 0.0), 0.15)
        side = ball_to_region(mesh4, (0.0, 0.55), 0.2)
        ring = region_from_shapes(mesh4, [{"kind": "annulus", "center": [0, 0],
                                           "inner": 0.25, "outer": 0.45}])
        open_ = locpot_dichotomy_sweep(mesh4, 1.0, d1, side, [2, 4, 6])
        shut = locpot_dichotomy_sweep(mesh4, 1.0, d1, ring, [2, 4, 6])
        assert np.all(np.diff(open_.ratio) > 0)
        assert open_.classification() == "blow-up"
        assert shut.classification() == "bounded"

    def test_csv(self, tmp_path, mesh4):
        d1 = ball_to_region(mesh4, (0.0, 0.0), 0.15)
        d2 = ball_to_region(mesh4, (0.0, 0.55), 0.2)
        res = locpot_dichotomy_sweep(mesh4, 1.0, d1, d2, [2, 3])
        p = tmp_path / "l.csv"
        res.to_csv(p)
        lines = p.read_text().splitlines()
        assert lines[0] == "order,E1,E2,ratio" and len(lines) == 3

    def test_empty_orders(self, mesh4):
        with pytest.raises(ParameterError):
            locpot_dichotomy_sweep(mesh4, 1.0, [0], [1], [])


class TestIndependence:
    def test_identical_conductivities(self, mesh4, sigma4):
        d1 = ball_to_region(mesh4, (0.0, -0.4), 0.15)
        d2 = ball_to_region(mesh4, (-0.3, 0.1), 0.3)
        rep = conductivity_independence_check(mesh4, sigma4, sigma4, d1, d2, [2, 4])
        assert np.array_equal(rep.e1_sigma, rep.e1_tau)
        assert np.array_equal(rep.e2_sigma, rep.e2_tau)
        assert rep.e2_constant == 1.0

    def test_support_violation(self, mesh4, sigma4):
        d2 = ball_to_region(mesh4, (0.3, 0.3), 0.1)
        with pytest.raises(ParameterError):
            conductivity_independence_check(mesh4, sigma4, 1.0, [0], d2, [2])


def test_swapped_reachable_fixture_reads_bounded(mesh5):
    # D1 is large and close to the boundary, so the ratio saturates near 1e6 from the
    # smallest order on; it still increases, but by less than the 2x bounded threshold
    big = region_from_shapes(mesh5, [{"kind": "disk", "center": [-0.4, 0], "radius": 0.3}])
    small = region_from_shapes(mesh5, [{"kind": "disk", "center": [0.6, 0], "radius": 0.15}])
    res = locpot_dichotomy_sweep(mesh5, 1.0, big, small, [4, 6, 8, 10, 12, 14, 16])
    assert res.classification() == "bounded"
    assert res.ratio[0] > 1e5 and np.all(np.diff(res.ratio) > 0)
