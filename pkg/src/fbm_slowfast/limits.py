"""Limit equations of the slow-fast system and the remainder of the Davie expansion.

Drift limit:      du/dt = nu A u - b(u + r_bar, u)
Transport limit:  du = (nu A u - b(u, u)) dt - b(dY, u),  Y = (-C)^{-1} W^H

Both use the integrating-factor Heun scheme of :mod:`slowfast`.  The
transport solver adds the rough terms of the Davie expansion,
``-A^1_{t,t+h} u_t + A^2_{t,t+h} u_t``, inside the factor, so a zero lift
reproduces the drift solver with ``r_bar = 0`` exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as sp_integrate

from .errors import NumericalError, ParameterError, StructureError
from .rough import RoughLift, p_variation_2index, urd_apply_1, urd_apply_2
from .slowfast import CFL_LIMIT, Trajectory, check_cfl, dissipation_increment
from .spectral import (SpectralField, leray_project, nonlinearity_b, sobolev_norm,
                       stokes_apply, stokes_exp)

# the rough terms enter as u_{s,t} ~ ... - b(Y^1_{s,t}, u_s) + b^(2)(Y^2_{s,t}, u_s)
SIGN_LEVEL1 = -1.0
SIGN_LEVEL2 = 1.0
BLOWUP_NORM = 1e6


def _heun_step(u, h, nu, forcing, rough=None):
    """One IF-Heun step for ``du/dt = nu A u + forcing(u)`` plus an optional rough increment."""
    E = lambda f: stokes_exp(f, nu * h)  # noqa: E731
    k1 = forcing(u)
    base = u if rough is None else u + rough
    u_star = E(base + h * k1)
    k2 = forcing(u_star)
    return leray_project(E(base + 0.5 * h * k1) + 0.5 * h * k2)


def _grid(T, dt):
    steps = int(round(T / dt))
    if steps < 0 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ParameterError(f"T={T} is not a multiple of dt={dt}")
    return np.linspace(0.0, steps * dt, steps + 1)


def _finish(traj, times, fields, nu):
    traj.times = [float(t) for t in times]
    traj.energy = [f.norm() ** 2 for f in fields]
    traj.dissipation = [dissipation_increment(a, b, nu, t1 - t0)
                        for a, b, t0, t1 in zip(fields[:-1], fields[1:], times[:-1], times[1:])]
    traj.snapshots = [(float(t), f, None, None) for t, f in zip(times, fields)]
    traj.nu = nu
    return traj


@dataclass
class LimitTrajectory(Trajectory):
    """Trajectory of a limit solver; ``fields`` lists ``u`` at every grid time."""

    fields: list = None

    @property
    def u_final(self):
        return self.fields[-1]


def solve_drift_limit(u0: SpectralField, rbar: SpectralField, nu, T, dt, cfl_limit=CFL_LIMIT):
    """Deterministic Navier-Stokes with the extra transport ``-b(r_bar, u)``."""
    if not nu > 0:
        raise ParameterError(f"viscosity must be positive, got {nu}")
    rbar = leray_project(rbar)
    times = _grid(T, dt)
    u = leray_project(u0)
    fields = [u]
    for _ in range(times.size - 1):
        check_cfl(u + rbar, dt, cfl_limit)
        u = _heun_step(u, dt, nu, lambda f: -nonlinearity_b(f + rbar, f))
        _check_finite(u)
        fields.append(u)
    return _finish(LimitTrajectory(fields=fields), times, fields, nu)


def _check_finite(u):
    if not np.all(np.isfinite(u.coeffs)) or u.norm() > BLOWUP_NORM:
        raise NumericalError("solution blew up")


def davie_increment(lift: RoughLift, s, t, u, spec):
    """``-A^1_{s,t} u + A^2_{s,t} u``."""
    return (SIGN_LEVEL1 * urd_apply_1(lift, s, t, u, spec)
            + SIGN_LEVEL2 * urd_apply_2(lift, s, t, u, spec))


def solve_transport_limit(u0: SpectralField, lift: RoughLift, spec, nu, T=None, grid=None,
                          cfl_limit=CFL_LIMIT):
    """Navier-Stokes with rough transport noise given by ``lift``.

    ``grid`` (default: the lift grid, cut at ``T``) must consist of lift grid
    points.  The step applies the exact heat factor to
    ``u_t + h N(u_t) - A^1 u_t + A^2 u_t`` and corrects the drift with Heun.
    """
    if not nu > 0:
        raise ParameterError(f"viscosity must be positive, got {nu}")
    if grid is None:
        grid = lift.times if T is None else lift.times[lift.times <= T + 1e-12]
    grid = np.asarray(grid, dtype=float)
    for t in grid:
        lift.index(t)
    u = leray_project(u0)
    fields = [u]
    for s, t in zip(grid[:-1], grid[1:]):
        rough = davie_increment(lift, s, t, u, spec)
        check_cfl(u, t - s, cfl_limit)
        u = _heun_step(u, t - s, nu, lambda f: -nonlinearity_b(f, f), rough)
        _check_finite(u)
        fields.append(u)
    return _finish(LimitTrajectory(fields=fields), grid, fields, nu)


# --------------------------------------------------------------------------
# remainder of the Davie expansion


def _cumulative_drift(fields, times, nu, rbar):
    """Cumulative trapezoidal ``int_0^{t_k} nu A u - b(u + r_bar, u)`` at every sample."""
    vals = []
    for f in fields:
        adv = f if rbar is None else f + rbar
        vals.append((nu * stokes_apply(f) - nonlinearity_b(adv, f)).coeffs)
    return sp_integrate.cumulative_trapezoid(np.stack(vals), times, axis=0, initial=0.0)


@dataclass
class RemainderReport:
    rows: list                # (s, t, defect_Hm3, interval_length)
    exponent: float           # fitted slope of log(mean defect) against log(length)
    threshold: float          # (N + 1) / p
    variation: float          # p / (N + 1) variation over the stride grid
    levels: list              # (length, mean defect) per dyadic level

    def passes(self):
        return self.exponent > self.threshold


def _remainder(fields, times, cum, lift, spec, i, j):
    inc = fields[j] - fields[i]
    drift = SpectralField(cum[j] - cum[i])
    if lift is None:
        return inc - drift
    return inc - drift - davie_increment(lift, times[i], times[j], fields[i], spec)


def remainder_defect(traj, lift: RoughLift, spec, nu, levels=None, variation_stride=None,
                     rbar=None):
    """``H^{-3}`` norms of ``u^natural_{s,t}`` on dyadic intervals.

    ``u^natural_{s,t} = u_{s,t} - int_s^t (nu A u - b(u, u)) + A^1_{s,t} u_s - A^2_{s,t} u_s``.
    Intervals of ``2^l`` grid steps, ``l`` in ``levels`` (default: up to an
    eighth of the trajectory), are tiled across the grid; the exponent is the
    least-squares slope of ``log(mean defect)`` against ``log(length)``.  The
    threshold uses ``N = floor(p)``, the level of the driver in use.  The
    ``p/(N+1)``-variation is taken over grid points every
    ``variation_stride`` steps (default: about 40 points).
    """
    fields = traj.fields if hasattr(traj, "fields") else [snap[1] for snap in traj.snapshots]
    times = np.asarray(traj.times, dtype=float)
    if len(fields) != times.size:
        raise StructureError("trajectory samples and times differ in length")
    n_int = times.size - 1
    if lift is not None:
        for t in times:
            lift.index(t)
    p = lift.p if lift is not None else 2.0
    N = min(2, int(math.floor(p)))
    if levels is None:
        top = max(1, int(math.floor(math.log2(max(n_int // 8, 1)))))
        levels = list(range(0, top + 1))
    cum = _cumulative_drift(fields, times, nu, rbar)
    rows, summary = [], []
    for lev in levels:
        width = 2**lev
        vals = []
        for i in range(0, n_int - width + 1, width):
            j = i + width
            d = sobolev_norm(_remainder(fields, times, cum, lift, spec, i, j), -3)
            rows.append((float(times[i]), float(times[j]), d, float(times[j] - times[i])))
            vals.append(d)
        if vals:
            summary.append((float(width * (times[1] - times[0])), float(np.mean(vals))))
    L = np.array([s[0] for s in summary])
    D = np.array([s[1] for s in summary])
    good = D > 0
    exponent = float(np.polyfit(np.log(L[good]), np.log(D[good]), 1)[0]) if good.sum() >= 2 else math.nan

    stride = variation_stride or max(1, n_int // 40)
    idx = np.arange(0, times.size, stride)
    if idx[-1] != n_int:
        idx = np.append(idx, n_int)
    table = np.zeros((idx.size, idx.size))
    for b in range(1, idx.size):
        for a in range(b):
            table[a, b] = sobolev_norm(
                _remainder(fields, times, cum, lift, spec, idx[a], idx[b]), -3)
    q = p / (N + 1)
    variation = p_variation_2index(lambda j: table[:j, j], idx.size, q)
    return RemainderReport(rows, exponent, (N + 1) / p, variation, summary)


def effective_drift(result):
    """Field that advects ``u`` in the drift limit, as produced by the coupled system.

    Balancing ``eps dr/dt = C r - eps^{2H - 2 alpha + 1} b(w, w)`` gives
    ``r ~ -(-C)^{-1} b(w, w)``, so the averaged transport velocity is the
    negative of the Gaussian average ``r_bar`` returned by the drift
    estimators.  The coupled runs confirm that the time mean of ``r`` tends
    to ``-r_bar``.
    """
    return -result.total
