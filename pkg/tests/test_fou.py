import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import SHEAR, TWO_MODE, make_spec
from fbm_slowfast.fou import (DriftResult, drift_distance, fou_second_moment,
                              ito_stokes_drift_ergodic, ito_stokes_drift_mc,
                              ito_stokes_drift_spectral, limit_variance, mean_convergence_gap,
                              time_average_quadratic)
from fbm_slowfast.noise import FouParams, ScalarPath
from fbm_slowfast.spectral import nonlinearity_b

# E[X_t^2] from X_t = x0 e^{-lam t} + sigma (B_t - lam int_0^t e^{-lam (t-s)} B_s ds),
# evaluated with scipy quad/dblquad on the fBm covariance
ORACLE = [
    ((1.0, 1.0, 0.75, 0.0), 1.0, 0.4116568083776589),
    ((1.0, 1.0, 0.35, 0.0), 1.0, 0.45275882602826556),
    ((2.0, 0.5, 0.6, 1.0), 0.7, 0.11322997694792221),
    ((0.5, 1.3, 0.3, -0.5), 3.0, 1.1926592261045523),
]


def brownian_moment(lam, sigma, x0, t):
    return sigma**2 * (1 - math.exp(-2 * lam * t)) / (2 * lam) + math.exp(-2 * lam * t) * x0**2


class TestSecondMoment:
    @pytest.mark.parametrize("args,t,expected", ORACLE)
    def test_against_integration_by_parts_oracle(self, args, t, expected):
        assert fou_second_moment(FouParams(*args), t) == pytest.approx(expected, rel=1e-10)

    def test_single_row_value(self):
        assert fou_second_moment(FouParams(1, 1, 0.5), 1) == pytest.approx(0.4323324, abs=1e-7)

    @given(st.floats(0.1, 5), st.floats(0, 3), st.floats(-2, 2), st.floats(0.01, 10))
    @settings(max_examples=40, deadline=None)
    def test_brownian_reduction(self, lam, sigma, x0, t):
        got = fou_second_moment(FouParams(lam, sigma, 0.5, x0), t)
        assert got == pytest.approx(brownian_moment(lam, sigma, x0, t), rel=1e-9, abs=1e-14)

    @given(st.floats(0.2, 3), st.floats(0.3, 0.95), st.floats(0.01, 20), st.floats(0.1, 3))
    @settings(max_examples=30, deadline=None)
    def test_quadratic_in_sigma(self, lam, H, t, sigma):
        one = fou_second_moment(FouParams(lam, 1.0, H), t)
        assert fou_second_moment(FouParams(lam, sigma, H), t) == pytest.approx(sigma**2 * one,
                                                                               rel=1e-10)
        assert one > 0

    def test_time_zero(self):
        assert fou_second_moment(FouParams(1, 1, 0.7, 2.0), 0) == 4.0

    def test_negative_time(self):
        with pytest.raises(ValueError):
            fou_second_moment(FouParams(1, 1, 0.7), -1)


class TestLimitVariance:
    def test_brownian(self):
        assert limit_variance(FouParams(2.0, 3.0, 0.5)) == pytest.approx(9.0 / 4.0)

    @pytest.mark.parametrize("H", [0.3, 0.5, 0.8])
    def test_long_time(self, H):
        p = FouParams(1.0, 1.0, H)
        assert fou_second_moment(p, 30) == pytest.approx(limit_variance(p), rel=1e-4)

    @pytest.mark.parametrize("t", [0.0, 0.5, 2.0, 6.0])
    def test_gap_matches_difference(self, t):
        p = FouParams(1.3, 0.9, 0.65, 0.4)
        diff = abs(fou_second_moment(p, t) - limit_variance(p))
        assert mean_convergence_gap(p, t) == pytest.approx(diff, rel=1e-8, abs=1e-15)

    def test_gap_decays(self):
        p = FouParams(1.0, 1.0, 0.3)
        gaps = [mean_convergence_gap(p, t) for t in (2, 5, 10, 20)]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))


class TestTimeAverage:
    def test_constant(self):
        t = np.linspace(0, 4, 9)
        assert time_average_quadratic(ScalarPath(t, np.full(9, 3.0))) == pytest.approx(9.0)

    def test_linear(self):
        t = np.linspace(0, 1, 2001)
        assert time_average_quadratic((t, t)) == pytest.approx(1 / 3, rel=1e-6)

    def test_replica_axes(self):
        t = np.linspace(0, 1, 3)
        vals = np.array([[1.0, 1, 1], [2, 2, 2]])
        assert np.allclose(time_average_quadratic((t, vals)), [1.0, 4.0])


class TestDrift:
    def test_shear_noise_gives_zero(self):
        spec = make_spec(SHEAR, n=8)
        for r in (ito_stokes_drift_spectral(spec), ito_stokes_drift_mc(spec, 1000, 0),
                  ito_stokes_drift_ergodic(spec, 10, 0.1, 0, batches=5)):
            assert r.total.norm() == 0.0

    def test_zero_sigma_gives_zero(self):
        entries = [dict(e, sigma=0.0) for e in TWO_MODE]
        spec = make_spec(entries, n=8)
        assert ito_stokes_drift_spectral(spec).total.norm() == 0.0
        assert ito_stokes_drift_mc(spec, 100, 0).total.norm() == 0.0

    def test_spectral_closed_form(self, spec2):
        H = spec2.hurst
        acc = None
        for md in spec2.modes:
            var = md.sigma**2 * math.gamma(2 * H + 1) / (2 * abs(md.lam) ** (2 * H))
            term = spec2.neg_c_inverse(nonlinearity_b(md.field, md.field)) * var
            acc = term if acc is None else acc + term
        r = ito_stokes_drift_spectral(spec2)
        assert acc.norm() > 0.1
        assert (r.total - acc).norm() < 1e-14

    def test_complement_scaling(self):
        a = ito_stokes_drift_spectral(make_spec(TWO_MODE, complement_lambda=-1.0))
        b = ito_stokes_drift_spectral(make_spec(TWO_MODE, complement_lambda=-4.0))
        assert (a.field - b.field).norm() < 1e-15
        assert b.unresolved_mass == pytest.approx(a.unresolved_mass / 4)

    def test_mc_agrees_with_spectral(self, spec2):
        spec = ito_stokes_drift_spectral(spec2)
        mc = ito_stokes_drift_mc(spec2, 20000, 1)
        d, se = drift_distance(spec, mc)
        assert se > 0 and d < 4 * se

    def test_ergodic_agrees_with_spectral(self, spec2):
        erg = ito_stokes_drift_ergodic(spec2, 50, 0.05, 2, batches=10)
        d, se = drift_distance(ito_stokes_drift_spectral(spec2), erg)
        assert d < 4 * se

    def test_mc_deterministic(self, spec2):
        a, b = ito_stokes_drift_mc(spec2, 500, 3), ito_stokes_drift_mc(spec2, 500, 3)
        assert np.array_equal(a.total.coeffs, b.total.coeffs)

    def test_to_dict(self, spec2):
        d = ito_stokes_drift_spectral(spec2).to_dict(spec2)
        assert d["method"] == "spectral" and len(d["mode_coefficients"]) == 2
        assert all({"component", "k", "re", "im", "stderr"} <= set(c) for c in d["coefficients"])

    def test_bad_sample_count(self, spec2):
        with pytest.raises(ValueError):
            ito_stokes_drift_mc(spec2, 0, 0)

    def test_result_total(self, spec2):
        r = ito_stokes_drift_spectral(spec2)
        assert isinstance(r, DriftResult)
        assert (r.total - r.field - r.unresolved).norm() == 0.0
