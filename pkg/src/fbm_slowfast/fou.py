"""Long-time statistics of fractional OU processes and the Ito-Stokes drift."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import NumericalError, StructureError
from .noise import FouParams, NoiseSpec, _uniform_step, sample_fast_ou_field
from .rng import GAUSS, substream
from .spectral import SpectralField, nonlinearity_b

QUAD_RTOL = 1e-10


# --------------------------------------------------------------------------
# one-dimensional fOU


def _singular_integral(t, H, rate, shift):
    """``int_0^t exp(rate * (z - shift)) z^{2H-1} dz`` for ``rate`` of either sign.

    The first panel ``[0, a]`` is integrated term by term from the power
    series of the exponential (``int_0^a z^{2H-1+k} dz = a^{2H+k}/(2H+k)``),
    which removes the endpoint singularity; the rest goes to adaptive
    Gauss-Kronrod quadrature.
    """
    if t <= 0:
        return 0.0
    a = min(t, 1.0 / max(abs(rate), 1e-300))
    two_h = 2.0 * H
    head, term, k = 0.0, 1.0, 0
    while True:
        contrib = term * a ** (two_h + k) / (two_h + k)
        head += contrib
        if abs(contrib) <= 1e-17 * abs(head) or k > 200:
            break
        k += 1
        term *= rate / k
    head *= math.exp(-rate * shift)
    if a >= t:
        return head
    tail, err = integrate.quad(lambda z: math.exp(rate * (z - shift)) * z ** (two_h - 1.0),
                               a, t, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)
    if err > 1e-8 * max(abs(tail), 1e-300) and err > 1e-14:
        raise NumericalError(f"quadrature did not converge (error estimate {err:.2e})")
    return head + tail


def fou_second_moment(params: FouParams, t):
    """``E[X_t^2]`` in closed form up to two one-dimensional integrals.

    ``e^{-2 lam t} x0^2 + sigma^2 H (I_1(t) + e^{-lam t} I_2(t))`` with
    ``I_1 = int_0^t e^{-lam z} z^{2H-1} dz`` and
    ``I_2 = int_0^t e^{-lam (t - z)} z^{2H-1} dz``.
    """
    lam, sig, H, x0 = params.lam, params.sigma, params.hurst, params.x0
    t = float(t)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return x0 * x0
    i1 = _singular_integral(t, H, -lam, 0.0)
    i2 = _singular_integral(t, H, lam, t)
    return math.exp(-2 * lam * t) * x0 * x0 + sig * sig * H * (i1 + math.exp(-lam * t) * i2)


def limit_variance(params: FouParams):
    """Stationary variance ``sigma^2 Gamma(2H+1) / (2 lam^{2H})``."""
    H = params.hurst
    return params.sigma**2 * math.gamma(2 * H + 1) / (2 * params.lam ** (2 * H))


def mean_convergence_gap(params: FouParams, t):
    """``|E[X_t^2] - limit_variance|`` evaluated without cancellation.

    Uses ``sigma_bar^2 - sigma^2 H I_1(t) = sigma^2 H lam^{-2H} Gamma(2H) Q(2H, lam t)``
    with ``Q`` the regularized upper incomplete gamma function.
    """
    lam, sig, H, x0 = params.lam, params.sigma, params.hurst, params.x0
    t = float(t)
    if t == 0:
        return abs(x0 * x0 - limit_variance(params))
    tail = math.gamma(2 * H) * special.gammaincc(2 * H, lam * t) / lam ** (2 * H)
    i2 = _singular_integral(t, H, lam, t)
    return abs(math.exp(-2 * lam * t) * x0 * x0
               + sig * sig * H * (math.exp(-lam * t) * i2 - tail))


def time_average_quadratic(path):
    """Trapezoidal ``(1/T) int_0^T X_s^2 ds`` over a uniform-grid path.

    ``path`` is a :class:`ScalarPath` or a ``(times, values)`` pair; ``values``
    may carry leading replica axes.
    """
    times, values = (path.times, path.values) if hasattr(path, "times") else path
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size == 0:
        raise StructureError("empty path")
    if times.size == 1:
        return values[..., 0] ** 2
    _uniform_step(times)
    return integrate.trapezoid(values**2, times, axis=-1) / (times[-1] - times[0])


# --------------------------------------------------------------------------
# Ito-Stokes drift


@dataclass
class DriftResult:
    """Drift ``r_bar`` split into the part resolved by the noise basis and the rest.

    ``field`` is ``(-C)^{-1}`` applied on the span of the basis;
    ``unresolved`` is the part of the averaged self-advection orthogonal to
    that span, scaled by ``1/|complement_lambda|``.  ``stderr`` holds per
    coefficient standard errors of ``field`` and ``unresolved`` (zeros for
    the closed form).
    """

    field: SpectralField
    unresolved: SpectralField
    method: str
    stderr: np.ndarray
    stderr_unresolved: np.ndarray
    error: float = 0.0

    @property
    def total(self):
        return self.field + self.unresolved

    @property
    def unresolved_mass(self):
        return self.unresolved.norm()

    def to_dict(self, spec=None):
        d = {
            "method": self.method,
            "error": float(self.error),
            "norm": self.field.norm(),
            "unresolved_mass": self.unresolved_mass,
        }
        if spec is not None and spec.m:
            d["mode_coefficients"] = [float(c) for c in spec.project(self.field)]
        total = self.total.coeffs
        se = np.sqrt(self.stderr**2 + self.stderr_unresolved**2)
        nz = np.argwhere((np.abs(total) > 1e-14) | (se > 0))
        d["coefficients"] = [
            {"component": int(c), "k": _signed_k(i, j, self.field.n),
             "re": float(total[c, i, j].real), "im": float(total[c, i, j].imag),
             "stderr": float(se[c, i, j])}
            for c, i, j in nz
        ]
        return d


def _signed_k(i, j, n):
    return [int(i if i < n // 2 else i - n), int(j if j < n // 2 else j - n)]


def _stationary_variances(spec):
    H = spec.hurst
    return spec.sigmas**2 * math.gamma(2 * H + 1) / (2 * np.abs(spec.lambdas) ** (2 * H))


def _b_table(spec):
    """``b(e_i, e_j)`` for all mode pairs, shape ``(m, m, 2, n, n)``."""
    m = spec.m
    out = np.zeros((m, m, 2, spec.n, spec.n), dtype=np.complex128)
    for i in range(m):
        for j in range(m):
            out[i, j] = nonlinearity_b(spec.modes[i].field, spec.modes[j].field).coeffs
    return out


def _split_neg_c_inverse(spec, coeffs):
    """Split fields (last 3 axes) into basis span / complement and apply ``(-C)^{-1}``.

    Returns ``(resolved, unresolved)`` coefficient arrays of the input shape.
    """
    flat = coeffs.reshape(coeffs.shape[:-3] + (-1,))
    basis = spec.basis.reshape(spec.m, -1)
    proj = np.real(flat @ np.conj(basis).T)
    in_span = (proj @ basis).reshape(coeffs.shape)
    resolved = ((proj / np.abs(spec.lambdas)) @ basis).reshape(coeffs.shape)
    unresolved = (coeffs - in_span) / abs(spec.complement_lambda)
    return resolved, unresolved


def ito_stokes_drift_spectral(spec: NoiseSpec):
    """Closed form ``sum_i sigma_bar_i^2 (-C)^{-1} b(e_i, e_i)``."""
    n = spec.n
    zero = np.zeros((2, n, n))
    if spec.m == 0:
        z = SpectralField.zeros(n)
        return DriftResult(z, z.copy(), "spectral", zero, zero)
    var = _stationary_variances(spec)
    acc = np.zeros((2, n, n), dtype=np.complex128)
    for i, md in enumerate(spec.modes):
        if var[i] > 0:
            acc += var[i] * nonlinearity_b(md.field, md.field).coeffs
    res, unres = _split_neg_c_inverse(spec, acc)
    return DriftResult(SpectralField(res), SpectralField(unres), "spectral", zero, zero)


def _pair_maps(spec, table):
    """Linear maps from mode-pair products ``g_i g_j`` to (resolved, unresolved) coefficients."""
    m = spec.m
    res, unres = _split_neg_c_inverse(spec, table)
    return res.reshape(m * m, -1), unres.reshape(m * m, -1)


def _result_from_pairs(spec, table, mean_pair, cov_mean, method):
    """Build a DriftResult from the mean of ``g_i g_j`` and the covariance of that mean."""
    n = spec.n
    out, se = [], []
    for lin in _pair_maps(spec, table):
        out.append(SpectralField((mean_pair @ lin).reshape(2, n, n)))
        var = (np.einsum("ak,ab,bk->k", lin.real, cov_mean, lin.real)
               + np.einsum("ak,ab,bk->k", lin.imag, cov_mean, lin.imag))
        se.append(np.sqrt(np.maximum(var, 0.0)).reshape(2, n, n))
    result = DriftResult(out[0], out[1], method, se[0], se[1])
    result.error = float(np.sqrt(np.sum(se[0] ** 2) + np.sum(se[1] ** 2)))
    return result


def _zero_result(spec, method):
    z = SpectralField.zeros(spec.n)
    zero = np.zeros((2, spec.n, spec.n))
    return DriftResult(z, z.copy(), method, zero, zero)


def ito_stokes_drift_mc(spec: NoiseSpec, samples, seed):
    """Monte Carlo over the invariant Gaussian measure ``r = sum g_i e_i``, ``g_i ~ N(0, sigma_bar_i^2)``.

    ``b(r, r)`` is evaluated through the precomputed table of ``b(e_i, e_j)``
    (bilinearity), so each sample costs ``O(m^2)``.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if spec.m == 0:
        return _zero_result(spec, "monte_carlo")
    m = spec.m
    sd = np.sqrt(_stationary_variances(spec))
    g = substream(seed, GAUSS).standard_normal((int(samples), m)) * sd
    pair = np.einsum("ni,nj->nij", g, g).reshape(g.shape[0], m * m)
    if samples > 1:
        cov_mean = np.atleast_2d(np.cov(pair, rowvar=False, ddof=1)) / samples
    else:
        cov_mean = np.zeros((m * m, m * m))
    return _result_from_pairs(spec, _b_table(spec), pair.mean(axis=0), cov_mean, "monte_carlo")


def ito_stokes_drift_ergodic(spec: NoiseSpec, T, dt, seed, batches=20, substeps=1):
    """Time average of ``(-C)^{-1} b(w_s, w_s)`` along one unit-rate fOU trajectory.

    ``w`` starts at 0.  Standard errors come from ``batches`` equal-length
    batch means.
    """
    if spec.m == 0:
        return _zero_result(spec, "ergodic")
    m = spec.m
    steps = int(round(T / dt))
    if steps < batches:
        raise ValueError("need at least one step per batch")
    grid = np.linspace(0.0, steps * dt, steps + 1)
    g = sample_fast_ou_field(spec, 1.0, grid, seed, substeps=substeps).coeffs
    pair = np.einsum("ni,nj->nij", g, g).reshape(g.shape[0], m * m)
    edges = np.linspace(0, steps, batches + 1).round().astype(int)
    lengths = np.diff(edges) * dt
    batch_means = np.array([
        integrate.trapezoid(pair[a:b + 1], dx=dt, axis=0) / L
        for a, b, L in zip(edges[:-1], edges[1:], lengths)
    ])
    mean_pair = lengths @ batch_means / lengths.sum()
    cov_mean = np.atleast_2d(np.cov(batch_means, rowvar=False, ddof=1)) / batches
    return _result_from_pairs(spec, _b_table(spec), mean_pair, cov_mean, "ergodic")


def drift_distance(a: DriftResult, b: DriftResult):
    """``(||a - b||, combined standard error)`` on the total drift fields."""
    diff = (a.total - b.total).norm()
    se = math.sqrt(a.error**2 + b.error**2)
    return diff, se
