"""Time integration of the coupled slow-fast system for ``(u, w, r)``.

    du/dt = nu A u - b(u + v, u)
    dw    = eps^{-1} C w dt + eps^{-H} dW^H
    dr/dt = eps^{-1} C r + nu A v - b(u + v, v),      v = eps^{-alpha + H} w + r

``w`` lives in the span of the noise basis and is advanced exactly mode by
mode, so the coupled run reproduces :func:`sample_fast_ou_field` bit for bit.
``u`` and ``r`` use an integrating-factor Heun scheme.  For ``u`` the factor
is the exact heat semigroup.  For ``r`` the factor is the Strang product
``e^{h C / 2 eps} e^{h nu A} e^{h C / 2 eps}``: ``C`` and ``A`` only fail to
commute on basis fields that mix wavenumber shells, and there the splitting
error is ``O(h^3 nu / eps)`` per step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CFLError, NumericalError, ParameterError, StructureError
from .noise import (FieldPath, NoiseSpec, _uniform_step, fast_ou_coefficients,
                    sample_q_fwiener)
from .spectral import (SpectralField, leray_project, nonlinearity_b,
                       stokes_apply, stokes_exp, trig_mode, wavenumbers)

DT_FACTOR = 0.1
CFL_LIMIT = 1.0


def resolve_alpha(alpha, H):
    """``"auto"`` becomes ``min(1, 1/2 + H)``; numbers must equal 1 or ``1/2 + H``."""
    if alpha == "auto":
        return min(1.0, 0.5 + H)
    alpha = float(alpha)
    if not (math.isclose(alpha, 1.0, abs_tol=1e-12) or math.isclose(alpha, 0.5 + H, abs_tol=1e-12)):
        raise ParameterError(f"alpha must be 1 or 1/2 + H = {0.5 + H}, got {alpha}")
    return alpha


@dataclass
class SlowFastParams:
    eps: float
    nu: float
    spec: NoiseSpec
    alpha: object = "auto"
    dt_factor: float = DT_FACTOR
    cfl_limit: float = CFL_LIMIT

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise ParameterError(f"eps must lie in (0, 1], got {self.eps}")
        if not self.nu > 0:
            raise ParameterError(f"viscosity must be positive, got {self.nu}")
        self.alpha = resolve_alpha(self.alpha, self.hurst)

    @property
    def hurst(self):
        return self.spec.hurst

    @property
    def scale(self):
        """``eps^{-alpha + H}``, the weight of ``w`` in ``v``."""
        return self.eps ** (self.hurst - self.alpha)


@dataclass
class SlowFastState:
    u: SpectralField
    w: np.ndarray
    r: SpectralField
    t: float = 0.0

    def copy(self):
        return SlowFastState(self.u.copy(), np.array(self.w, dtype=float), self.r.copy(), self.t)

    def v(self, params):
        """``v = eps^{-alpha + H} w + r``."""
        return params.spec.synthesize(params.scale * self.w) + self.r if params.spec.m else self.r


def default_initial(n):
    """Two-mode divergence-free field of unit norm used when no ``u0`` is given."""
    f = trig_mode(n, (1, 1), "sin") + 0.5 * trig_mode(n, (2, -1), "cos")
    return f / f.norm()


def initial_state(u0, spec, r0=None):
    r0 = SpectralField.zeros(u0.n) if r0 is None else r0
    return SlowFastState(leray_project(u0), np.zeros(spec.m), leray_project(r0), 0.0)


# --------------------------------------------------------------------------
# one step


def max_speed(f: SpectralField):
    """Largest pointwise speed ``max_x |f(x)|``."""
    x = f.to_physical()
    return float(np.sqrt(np.max(x[0] ** 2 + x[1] ** 2)))


def check_cfl(advecting: SpectralField, dt, limit=CFL_LIMIT):
    """Courant number ``max|v| dt / dx`` with ``dx = 2 pi / n``; raises above ``limit``."""
    n = advecting.n
    vmax = max_speed(advecting)
    courant = vmax * dt * n / (2 * np.pi)
    if courant > limit:
        suggested = 0.9 * limit * 2 * np.pi / (n * vmax)
        raise CFLError(f"Courant number {courant:.3g} exceeds {limit} (dt={dt:.3g}); "
                       f"try dt <= {suggested:.3g}", courant, suggested)
    return courant


def _r_propagator(params, h):
    spec, eps = params.spec, params.eps

    def half(f):
        return spec.c_multiplier(f, lambda lam: np.exp(0.5 * h * lam / eps))

    return lambda f: half(stokes_exp(half(f), params.nu * h))


def _rhs(u, r, wf, params):
    sw = params.scale * wf
    v = sw + r
    adv = u + v
    du = -nonlinearity_b(adv, u)
    dr = params.nu * stokes_apply(sw) - nonlinearity_b(adv, v)
    return du, dr


def step(state: SlowFastState, dt, dW, params: SlowFastParams, check=True):
    """Advance by ``dt`` given the increments ``dW`` of the noise coefficients ``sigma_i B^i``."""
    spec = params.spec
    if dt > params.dt_factor * params.eps * (1 + 1e-9):
        raise ParameterError(
            f"dt={dt} does not resolve the fast scale (need dt <= {params.dt_factor} * eps)")
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (spec.m,):
        raise StructureError(f"expected {spec.m} noise increments, got shape {dW.shape}")
    a, gain = fast_ou_coefficients(spec, params.eps, dt)
    w0 = state.w
    w1 = a * w0 + gain * dW
    wf0 = spec.synthesize(w0) if spec.m else SpectralField.zeros(state.u.n)
    wf1 = spec.synthesize(w1) if spec.m else SpectralField.zeros(state.u.n)
    if check:
        check_cfl(state.u + params.scale * wf0 + state.r, dt, params.cfl_limit)

    Eu = lambda f: stokes_exp(f, params.nu * dt)  # noqa: E731
    Er = _r_propagator(params, dt)
    k1u, k1r = _rhs(state.u, state.r, wf0, params)
    u_star = Eu(state.u + dt * k1u)
    r_star = Er(state.r + dt * k1r)
    k2u, k2r = _rhs(u_star, r_star, wf1, params)
    u1 = leray_project(Eu(state.u + 0.5 * dt * k1u) + 0.5 * dt * k2u)
    r1 = leray_project(Er(state.r + 0.5 * dt * k1r) + 0.5 * dt * k2r)
    if not (np.all(np.isfinite(u1.coeffs)) and np.all(np.isfinite(r1.coeffs))):
        raise NumericalError(f"non-finite state at t={state.t + dt}")
    return SlowFastState(u1, w1, r1, state.t + dt)


# --------------------------------------------------------------------------
# trajectories


def dissipation_increment(u0: SpectralField, u1: SpectralField, nu, h):
    """``2 nu int ||grad u||^2`` over one step, mode by mode with the logarithmic mean.

    Each Fourier amplitude is interpolated exponentially between the two
    samples, so the rule is exact for the heat semigroup.
    """
    _, _, k2 = wavenumbers(u0.n)
    a = np.sum(np.abs(u0.coeffs) ** 2, axis=0)
    b = np.sum(np.abs(u1.coeffs) ** 2, axis=0)
    logmean = 0.5 * (a + b)
    ok = (a > 0) & (b > 0) & (np.abs(a - b) > 1e-12 * (a + b))
    logmean[ok] = (b[ok] - a[ok]) / np.log(b[ok] / a[ok])
    return float(2 * nu * h * np.sum(k2 * logmean))


@dataclass
class Trajectory:
    """Output of :func:`integrate`.

    ``times``/``energy``/``dissipation`` cover every step; ``snapshots`` holds
    ``(t, u, w, r)`` at the output indices.  ``diagnostics`` rows follow the
    CSV layout of :data:`DIAGNOSTIC_COLUMNS`.
    """

    times: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    nu: float = 0.0
    final: SlowFastState = None

    def extend(self, other):
        """Append a continuation (the first entry of ``other`` repeats our last)."""
        if not self.times:
            return other
        last = self.times[-1]
        self.times += other.times[1:]
        self.energy += other.energy[1:]
        self.dissipation += other.dissipation
        self.snapshots += [s for s in other.snapshots if s[0] > last]
        self.diagnostics += other.diagnostics[1:]
        self.final = other.final
        return self


DIAGNOSTIC_COLUMNS = ("t", "energy_u", "enstrophy_int", "energy_sum", "div_defect",
                      "norm_w", "norm_r_scaled")


def _div_defect(*fields):
    out = 0.0
    for f in fields:
        nrm = f.norm()
        if nrm > 0:
            out = max(out, f.divergence_defect() / nrm)
    return out


def integrate(state: SlowFastState, noise: FieldPath, params: SlowFastParams, k0, k1,
              output_every=1, enstrophy0=0.0, check_cfl=True):
    """Step from grid index ``k0`` to ``k1`` along a sampled noise path.

    ``noise`` holds ``W^H`` coefficients on the solver grid (as returned by
    :func:`sample_q_fwiener`); ``state.t`` must equal ``noise.times[k0]``.
    ``enstrophy0`` carries the accumulated dissipation into a continuation.
    """
    times = noise.times
    dt = _uniform_step(times)
    if not 0 <= k0 <= k1 < times.size:
        raise StructureError(f"step range [{k0}, {k1}] outside the noise grid")
    if abs(state.t - times[k0]) > 1e-9 * max(1.0, abs(times[k0])):
        raise StructureError(f"state time {state.t} does not match grid time {times[k0]}")
    traj = Trajectory(nu=params.nu)
    cum = enstrophy0

    def record(k, s):
        e = s.u.norm() ** 2
        traj.times.append(float(times[k]))
        traj.energy.append(e)
        traj.diagnostics.append((float(times[k]), e, cum, e + cum, _div_defect(s.u, s.r),
                                 float(np.linalg.norm(s.w)),
                                 math.sqrt(params.eps) * s.r.norm()))
        if (k - k0) % output_every == 0 or k == k1:
            traj.snapshots.append((float(times[k]), s.u.copy(), np.array(s.w), s.r.copy()))

    s = state.copy()
    s.t = float(times[k0])
    record(k0, s)
    for k in range(k0, k1):
        nxt = step(s, dt, noise.coeffs[k + 1] - noise.coeffs[k], params, check=check_cfl)
        nxt.t = float(times[k + 1])
        d = dissipation_increment(s.u, nxt.u, params.nu, dt)
        cum += d
        traj.dissipation.append(d)
        s = nxt
        record(k + 1, s)
    traj.final = s
    return traj


def simulate(params: SlowFastParams, T, dt, seed, u0=None, r0=None, output_every=1,
             noise=None, check_cfl=True):
    """Run the coupled system on ``[0, T]`` with the noise of ``seed`` on the grid ``dt``.

    Returns ``(trajectory, noise)``; ``noise`` is the ``W^H`` path used, so
    limit solvers can be driven by the same realization.
    """
    steps = int(round(T / dt))
    if steps < 0 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ParameterError(f"T={T} is not a multiple of dt={dt}")
    grid = np.linspace(0.0, steps * dt, steps + 1)
    if noise is None:
        noise = sample_q_fwiener(params.spec, grid, seed)
    u0 = default_initial(params.spec.n) if u0 is None else u0
    state = initial_state(u0, params.spec, r0)
    traj = integrate(state, noise, params, 0, steps, output_every, check_cfl=check_cfl)
    return traj, noise


# --------------------------------------------------------------------------
# energy ledger


@dataclass
class EnergyReport:
    initial_energy: float
    sup_energy: float
    dissipation_total: float
    energy_sum: np.ndarray
    bound_lhs: float
    residuals: np.ndarray
    scheme_error: float

    def satisfies_bound(self, factor=2.0, slack=10.0):
        """``sup ||u||^2 + 2 nu int ||grad u||^2 <= factor ||u0||^2 (1 + slack * scheme_error)``."""
        return self.bound_lhs <= factor * self.initial_energy * (1 + slack * self.scheme_error)

    def to_dict(self):
        return {
            "initial_energy": self.initial_energy,
            "sup_energy": self.sup_energy,
            "dissipation_total": self.dissipation_total,
            "bound_lhs": self.bound_lhs,
            "final_energy_sum": float(self.energy_sum[-1]),
            "scheme_error": self.scheme_error,
        }


def energy_report(traj: Trajectory):
    """Energy balance of the ``u`` equation along a trajectory.

    ``energy_sum[k] = ||u_k||^2 + 2 nu int_0^{t_k} ||grad u||^2``, which the
    continuous dynamics keep equal to ``||u_0||^2``; ``bound_lhs`` is
    ``sup ||u||^2 + 2 nu int_0^T ||grad u||^2``.  The per-step residuals of the
    balance, summed and divided by ``||u_0||^2``, form the scheme-error
    estimate.
    """
    if len(traj.times) < 2:
        raise StructureError("energy report needs at least two samples")
    e = np.asarray(traj.energy)
    d = np.asarray(traj.dissipation)
    cum = np.concatenate([[0.0], np.cumsum(d)])
    total = e + cum
    residuals = np.diff(e) + d
    e0 = e[0]
    err = float(np.sum(np.abs(residuals)) / e0) if e0 > 0 else 0.0
    return EnergyReport(float(e0), float(e.max()), float(cum[-1]), total,
                        float(e.max() + cum[-1]), residuals, err)


def energy_report_from_fields(times, fields, nu):
    """Same ledger for a plain list of ``u`` samples."""
    traj = Trajectory(nu=nu)
    traj.times = list(times)
    traj.energy = [f.norm() ** 2 for f in fields]
    traj.dissipation = [dissipation_increment(a, b, nu, t1 - t0)
                        for a, b, t0, t1 in zip(fields[:-1], fields[1:], times[:-1], times[1:])]
    return energy_report(traj)
