import math

import numpy as np
import pytest

from conftest import TWO_MODE, make_spec
from fbm_slowfast.errors import CFLError, ParameterError, StructureError
from fbm_slowfast.noise import sample_fast_ou_field, sample_q_fwiener
from fbm_slowfast.rough import build_y_path
from fbm_slowfast.slowfast import (SlowFastParams, check_cfl, default_initial,
                                   dissipation_increment, energy_report, initial_state, integrate,
                                   resolve_alpha, simulate)
from fbm_slowfast.spectral import random_field, stokes_exp, trig_mode

N = 16


def quiet_spec(hurst=0.7):
    return make_spec([dict(e, sigma=0.0) for e in TWO_MODE], hurst=hurst)


class TestAlpha:
    def test_auto(self):
        assert resolve_alpha("auto", 0.4) == pytest.approx(0.9)
        assert resolve_alpha("auto", 0.7) == 1.0

    def test_explicit(self):
        assert resolve_alpha(1, 0.4) == 1.0
        assert resolve_alpha(0.9, 0.4) == 0.9

    def test_other_values_rejected(self):
        with pytest.raises(ParameterError):
            resolve_alpha(0.8, 0.4)

    def test_params_validation(self, spec2):
        with pytest.raises(ParameterError):
            SlowFastParams(0.0, 0.1, spec2)
        with pytest.raises(ParameterError):
            SlowFastParams(0.5, 0.0, spec2)


class TestStep:
    def test_stokes_decay_is_exact(self):
        # a shear mode with no noise: b(u, u) = 0, so u(t) = e^{-nu |k|^2 t} u0
        e = trig_mode(N, (2, 1))
        params = SlowFastParams(1.0, 0.1, quiet_spec())
        traj, _ = simulate(params, 1.0, 0.05, 0, u0=e)
        assert (traj.final.u - e * math.exp(-0.5)).norm() < 1e-14
        assert traj.final.r.norm() == 0.0

    def test_fast_process_matches_sampler_bitwise(self, spec2):
        params = SlowFastParams(0.2, 0.1, spec2)
        traj, W = simulate(params, 0.4, 0.01, 7)
        w = sample_fast_ou_field(spec2, 0.2, W.times, 7)
        got = np.array([snap[2] for snap in traj.snapshots])
        assert np.array_equal(got, w.coeffs)

    def test_restart_is_bit_identical(self, spec2):
        params = SlowFastParams(0.2, 0.1, spec2)
        grid = np.linspace(0, 0.3, 31)
        W = sample_q_fwiener(spec2, grid, 3)
        s0 = initial_state(default_initial(N), spec2)
        full = integrate(s0, W, params, 0, 30)
        head = integrate(s0, W, params, 0, 12)
        tail = integrate(head.final, W, params, 12, 30,
                         enstrophy0=head.diagnostics[-1][2])
        joined = head.extend(tail)
        assert np.array_equal(joined.final.u.coeffs, full.final.u.coeffs)
        assert np.array_equal(joined.final.r.coeffs, full.final.r.coeffs)
        assert joined.diagnostics == full.diagnostics

    def test_time_mismatch(self, spec2):
        params = SlowFastParams(0.2, 0.1, spec2)
        W = sample_q_fwiener(spec2, np.linspace(0, 0.1, 11), 0)
        s = initial_state(default_initial(N), spec2)
        s.t = 0.05
        with pytest.raises(StructureError):
            integrate(s, W, params, 0, 5)

    def test_dt_must_resolve_fast_scale(self, spec2):
        with pytest.raises(ParameterError):
            simulate(SlowFastParams(0.1, 0.1, spec2), 0.1, 0.05, 0)

    def test_second_order_in_time(self):
        rng = np.random.default_rng(0)
        u0 = random_field(N, rng, kmax=3) * 0.5
        r0 = random_field(N, rng, kmax=3) * 0.3
        params = SlowFastParams(1.0, 0.05, quiet_spec())

        def run(dt):
            traj, _ = simulate(params, 0.4, dt, 0, u0=u0, r0=r0)
            return traj.final.u

        ref = run(0.4 / 512)
        errs = [(run(dt) - ref).norm() for dt in (0.4 / 16, 0.4 / 32, 0.4 / 64)]
        orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
        assert min(orders) >= 1.7


class TestCfl:
    def test_courant_number(self):
        # max |e| = sqrt2 for a trig mode
        e = trig_mode(N, (1, 0))
        c = check_cfl(e, 0.1)
        assert c == pytest.approx(math.sqrt(2) * 0.1 * N / (2 * math.pi), rel=1e-12)

    def test_rejection_suggests_step(self):
        big = trig_mode(N, (1, 0)) * 100
        with pytest.raises(CFLError) as info:
            check_cfl(big, 0.1)
        assert check_cfl(big, info.value.suggested_dt) <= 1.0


class TestEnergy:
    def test_dissipation_exact_for_heat_flow(self, rng):
        u0 = random_field(N, rng)
        u1 = stokes_exp(u0, 0.1 * 0.3)
        d = dissipation_increment(u0, u1, 0.1, 0.3)
        assert d == pytest.approx(u0.norm() ** 2 - u1.norm() ** 2, rel=1e-13)

    @pytest.mark.parametrize("hurst,eps", [(0.4, 0.2), (0.7, 0.1)])
    def test_energy_inequality(self, hurst, eps):
        spec = make_spec(TWO_MODE, hurst=hurst)
        params = SlowFastParams(eps, 0.1, spec)
        traj, _ = simulate(params, 0.5, 0.01, 1)
        rep = energy_report(traj)
        assert rep.satisfies_bound()
        assert rep.scheme_error < 1e-2
        assert max(row[4] for row in traj.diagnostics) < 1e-10

    def test_energy_sum_constant_without_noise(self):
        rng = np.random.default_rng(2)
        params = SlowFastParams(1.0, 0.1, quiet_spec())
        traj, _ = simulate(params, 0.5, 0.01, 0, u0=random_field(N, rng, kmax=3) * 0.5)
        rep = energy_report(traj)
        assert np.allclose(rep.energy_sum, rep.energy_sum[0], rtol=1e-4)

    def test_report_needs_two_samples(self, spec2):
        params = SlowFastParams(0.2, 0.1, spec2)
        W = sample_q_fwiener(spec2, np.linspace(0, 0.1, 11), 0)
        traj = integrate(initial_state(default_initial(N), spec2), W, params, 0, 0)
        with pytest.raises(StructureError):
            energy_report(traj)


class TestIntegratedFastProcess:
    def test_alpha_one_identity(self, spec2):
        # y = (-C)^{-1} (W - eps^H w) up to the trapezoidal error
        eps, H = 0.4, spec2.hurst
        grid = np.linspace(0, 2, 801)
        w, W = sample_fast_ou_field(spec2, eps, grid, 0, return_noise=True)
        y = build_y_path(w, eps, 1.0)
        rhs = (W.coeffs - eps**H * w.coeffs) / np.abs(spec2.lambdas)
        assert np.max(np.abs(y.coeffs - rhs)) < 1e-3
