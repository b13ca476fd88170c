import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from conftest import TWO_MODE, make_spec
from fbm_slowfast.errors import ParameterError, SizeError, StructureError
from fbm_slowfast.noise import sample_fast_ou_field, sample_q_fwiener
from fbm_slowfast.rough import (RoughLift, build_y_path, chen_defect, default_p,
                                level2_variation, levy_area, lift_canonical, lift_distance,
                                max_chen_defect, p_variation, p_variation_2index,
                                symmetric_defect, urd_apply_1, urd_apply_2)
from fbm_slowfast.spectral import nonlinearity_b, random_field


def brute_force_pvar(x, p):
    """Max over all 2^(n-2) partitions, summed left to right.

    Interval powers use the same vectorized expression as the library, since
    vectorized and scalar ``pow`` may differ in the last bit.
    """
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    n = x.shape[0]
    powers = {j: np.sqrt(np.sum((x[j] - x[:j]) ** 2, axis=1)) ** p for j in range(1, n)}
    best = 0.0
    for mask in range(2 ** (n - 2)):
        pts = [0] + [k + 1 for k in range(n - 2) if mask >> k & 1] + [n - 1]
        s = 0.0
        for a, b in zip(pts[:-1], pts[1:]):
            s = s + powers[b][a]
        best = max(best, s)
    return best ** (1.0 / p)


def shoelace_area(xy):
    """Signed area swept by a polygonal planar path relative to its start."""
    d = xy - xy[0]
    return 0.5 * np.sum(d[:-1, 0] * d[1:, 1] - d[:-1, 1] * d[1:, 0])


paths = st.integers(3, 12).flatmap(
    lambda n: st.lists(st.floats(-5, 5, allow_nan=False), min_size=2 * n, max_size=2 * n)
    .map(lambda v: np.array(v).reshape(n, 2)))


class TestPVariation:
    @given(paths, st.floats(1.0, 4.0))
    @settings(max_examples=60, deadline=None)
    def test_matches_brute_force_exactly(self, x, p):
        assert p_variation(x, p) == brute_force_pvar(x, p)

    def test_monotone_path_one_variation(self):
        x = np.cumsum(np.abs(np.random.default_rng(0).standard_normal(50)))
        assert p_variation(x, 1.0) == pytest.approx(x[-1] - x[0])

    def test_zigzag(self):
        # alternating +-1: the finest partition wins for p >= 1
        x = np.array([0, 1, 0, 1, 0], dtype=float)
        assert p_variation(x, 2.0) == pytest.approx(2.0)

    def test_cap(self):
        with pytest.raises(SizeError):
            p_variation(np.zeros(11), 2.0, cap=10)

    def test_p_below_one(self):
        with pytest.raises(ParameterError):
            p_variation(np.zeros(3), 0.5)

    def test_two_index_reduces_to_path(self):
        x = np.random.default_rng(1).standard_normal(9)
        v = p_variation_2index(lambda j: np.abs(x[j] - x[:j]), 9, 2.5)
        assert v == p_variation(x, 2.5)

    @pytest.mark.parametrize("H,expected", [(0.7, 1 / 0.7 + 0.05), (0.4, 2.55)])
    def test_default_p(self, H, expected):
        assert default_p(H) == pytest.approx(expected)

    def test_default_p_clamped(self):
        p = default_p(0.34)
        assert 1 / 0.34 < p < 3

    def test_default_p_needs_h_above_third(self):
        with pytest.raises(ParameterError):
            default_p(0.3)


def random_lift(seed, n=30, m=3):
    y = np.random.default_rng(seed).standard_normal((n, m)).cumsum(axis=0)
    return lift_canonical(y, p=2.5, times=np.linspace(0, 1, n))


class TestCanonicalLift:
    @given(st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_chen_on_all_triples(self, seed):
        assert max_chen_defect(random_lift(seed, n=15)) <= 1e-10

    def test_chen_pointwise(self):
        L = random_lift(0)
        t = L.times
        assert chen_defect(L, t[2], t[11], t[27]) < 1e-12

    @given(st.integers(0, 10_000))
    @settings(max_examples=20, deadline=None)
    def test_symmetric_part(self, seed):
        L = random_lift(seed)
        for i, j in [(0, 29), (3, 17), (10, 11)]:
            assert symmetric_defect(L, i, j) < 1e-10

    def test_levy_area_shoelace(self):
        xy = np.random.default_rng(5).standard_normal((40, 2)).cumsum(axis=0)
        L = lift_canonical(xy, times=np.linspace(0, 1, 40))
        area = levy_area(L, 0, 39)
        assert area[0, 1] == pytest.approx(shoelace_area(xy), rel=1e-12)
        assert area[0, 1] == -area[1, 0]

    def test_smooth_path_iterated_integral(self):
        # Y2_{0,1}[0,1] = int_0^1 (y1_r - y1_0) dy2_r for y = (sin t, t^2)
        t = np.linspace(0, 1, 4001)
        L = lift_canonical(np.stack([np.sin(t), t**2], axis=1), times=t)
        exact, _ = integrate.quad(lambda r: np.sin(r) * 2 * r, 0, 1)
        assert L.level2_at(0, t.size - 1)[0, 1] == pytest.approx(exact, rel=1e-6)

    def test_perturbation_breaks_chen(self):
        L = random_lift(2).perturbed(3, 10, np.eye(3) * 1e-3)
        assert max_chen_defect(L) > 1e-4

    def test_scaled(self):
        L = random_lift(3)
        S = L.scaled(2.0)
        assert np.allclose(S.level2_at(1, 20), 4 * L.level2_at(1, 20))

    def test_off_grid_time(self):
        with pytest.raises(StructureError):
            random_lift(0).index(0.01234)

    def test_shape_checks(self):
        with pytest.raises(StructureError):
            RoughLift(np.linspace(0, 1, 3), np.zeros((3, 2)), np.zeros((3, 2, 2)), 2.0)
        with pytest.raises(StructureError):
            lift_canonical(np.zeros((3, 2)))


class TestDistances:
    def test_distance_to_self(self):
        L = random_lift(4)
        assert lift_distance(L, L) == (0.0, 0.0)

    def test_distance_to_zero_is_variation(self):
        L = random_lift(4)
        d1, d2 = lift_distance(L, L.scaled(0.0))
        assert d1 == pytest.approx(p_variation(L.level1 - L.level1[0], L.p))
        assert d2 == pytest.approx(level2_variation(L))

    def test_grid_mismatch(self):
        with pytest.raises(StructureError):
            lift_distance(random_lift(0, n=10), random_lift(0, n=11))


class TestScaling:
    def test_y_path_rescaling_is_exact(self):
        spec = make_spec(TWO_MODE, hurst=0.4)
        grid = np.linspace(0, 1, 201)
        eps = 0.1
        w = sample_fast_ou_field(spec, eps, grid, 0)
        y_half = build_y_path(w, eps, 0.9)
        y_one = build_y_path(w, eps, 1.0)
        assert np.allclose(y_half.coeffs, eps**0.1 * y_one.coeffs, rtol=1e-13)
        L_half, L_one = lift_canonical(y_half), lift_canonical(y_one)
        r1 = p_variation(L_half.level1, L_half.p) / p_variation(L_one.level1, L_half.p)
        r2 = level2_variation(L_half) / level2_variation(L_one)
        assert r1 == pytest.approx(eps**0.1, rel=1e-12)
        assert r2 == pytest.approx(eps**0.2, rel=1e-12)


class TestDriver:
    def test_level1_is_transport_by_increment(self, spec2, rng):
        W = sample_q_fwiener(spec2, np.linspace(0, 1, 5), 0)
        L = lift_canonical(W)
        phi = random_field(16, rng, kmax=3)
        expect = nonlinearity_b(spec2.synthesize(W.coeffs[3] - W.coeffs[1]), phi)
        assert (urd_apply_1(L, 0.25, 0.75, phi, spec2) - expect).norm() < 1e-14

    def test_level2_contraction(self, spec2, rng):
        W = sample_q_fwiener(spec2, np.linspace(0, 1, 5), 1)
        L = lift_canonical(W)
        phi = random_field(16, rng, kmax=3)
        Y2 = L.level2_at(0, 4)
        e = [md.field for md in spec2.modes]
        expect = None
        for i, j in itertools.product(range(2), range(2)):
            term = nonlinearity_b(e[j], nonlinearity_b(e[i], phi)) * Y2[i, j]
            expect = term if expect is None else expect + term
        assert (urd_apply_2(L, 0.0, 1.0, phi, spec2) - expect).norm() < 1e-13

    def test_mode_count_mismatch(self, spec2, rng):
        L = random_lift(0, n=5, m=3)
        with pytest.raises(StructureError):
            urd_apply_1(L, 0.0, 1.0, random_field(16, rng), spec2)
