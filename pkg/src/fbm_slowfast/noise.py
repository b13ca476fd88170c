"""Exact Gaussian samplers: fBm, the Q-fractional Wiener process and fOU paths."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg, signal

from .errors import NumericalError, ParameterError, SizeError, StructureError
from .rng import FBM, replica_normals, substream
from .spectral import SpectralField, sobolev_norm, trig_mode

CHOLESKY_CAP = 4096
JITTER = 1e-12


def _check_hurst(H, lo=0.25):
    if not lo < H < 1:
        raise ParameterError(f"Hurst index must lie in ({lo}, 1), got {H}")


# --------------------------------------------------------------------------
# domain types


@dataclass
class ScalarPath:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape[:1]:
            raise StructureError("times and values have different lengths")
        if self.times.size and self.times[0] != 0.0:
            raise StructureError("paths start at t = 0")


@dataclass
class FouParams:
    """Parameters of ``dX = -lam X dt + sigma dB^H``, ``X_0 = x0``."""

    lam: float
    sigma: float
    hurst: float
    x0: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterError(f"decay rate must be positive, got {self.lam}")
        if self.sigma < 0:
            raise ParameterError(f"sigma must be nonnegative, got {self.sigma}")
        _check_hurst(self.hurst)


@dataclass
class NoiseMode:
    field: SpectralField
    sigma: float
    lam: float
    label: str = ""


@dataclass
class NoiseSpec:
    """Finite noise basis ``(e_i, sigma_i, lambda_i)`` with Hurst index and regularity.

    ``C`` acts as ``lambda_i`` on ``e_i`` and as ``complement_lambda`` on the
    orthogonal complement of the basis span; ``Q = sum sigma_i^2 e_i (x) e_i``.
    """

    modes: list
    hurst: float
    n: int
    xi: float = 3.5
    complement_lambda: float = -1.0
    _basis: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_hurst(self.hurst)
        for m in self.modes:
            if m.field.n != self.n:
                raise StructureError(f"mode {m.label!r} lives on n={m.field.n}, spec has n={self.n}")
            if not m.lam < 0:
                raise ParameterError(f"C eigenvalues must be negative, got {m.lam}")
            if m.sigma < 0:
                raise ParameterError(f"sigma must be nonnegative, got {m.sigma}")
        if not self.complement_lambda < 0:
            raise ParameterError("complement_lambda must be negative")

    @property
    def m(self):
        return len(self.modes)

    @property
    def sigmas(self):
        return np.array([m.sigma for m in self.modes], dtype=float)

    @property
    def lambdas(self):
        return np.array([m.lam for m in self.modes], dtype=float)

    @property
    def basis(self):
        """Array of basis coefficients, shape ``(m, 2, n, n)``."""
        if self._basis is None or self._basis.shape[0] != self.m:
            if self.m:
                self._basis = np.stack([md.field.coeffs for md in self.modes])
            else:
                self._basis = np.zeros((0, 2, self.n, self.n), dtype=np.complex128)
        return self._basis

    def validate(self, tol=1e-10):
        """Check orthonormality, divergence-freeness and the spectral gap of ``C``."""
        for md in self.modes:
            md.field.check()
        if self.m:
            flat = self.basis.reshape(self.m, -1)
            gram = np.real(np.conj(flat) @ flat.T)
            if np.max(np.abs(gram - np.eye(self.m))) > tol:
                raise StructureError("noise basis is not orthonormal")
            if np.max(self.lambdas) >= 0:
                raise ParameterError("sup lambda_i must be negative")
        return self

    def synthesize(self, coeffs):
        """``sum_i c_i e_i``; a ``(T, m)`` array gives an array of fields ``(T, 2, n, n)``."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != self.m:
            raise StructureError(f"expected {self.m} coefficients, got {coeffs.shape[-1]}")
        if coeffs.ndim == 1:
            return SpectralField(np.tensordot(coeffs, self.basis, axes=1))
        return np.tensordot(coeffs, self.basis, axes=1)

    def project(self, f):
        """Coefficients ``<f, e_i>``."""
        flat = self.basis.reshape(self.m, -1)
        return np.real(np.conj(flat) @ f.coeffs.reshape(-1))

    def split(self, f):
        """Return ``(coeffs, remainder)`` with ``f = synthesize(coeffs) + remainder``."""
        c = self.project(f) if self.m else np.zeros(0)
        rest = f - self.synthesize(c) if self.m else f
        return c, rest

    def c_multiplier(self, f, fn):
        """Apply ``fn(C)`` for a scalar function ``fn`` of the eigenvalues."""
        c, rest = self.split(f)
        out = rest * fn(self.complement_lambda)
        if self.m:
            out = out + self.synthesize(c * fn(self.lambdas))
        return out

    def apply_c(self, f):
        return self.c_multiplier(f, lambda lam: lam)

    def neg_c_inverse(self, f):
        return self.c_multiplier(f, lambda lam: 1.0 / np.abs(lam))

    def hxi_mass(self):
        """``sum_i sigma_i^2 ||e_i||_{H^xi}^2``."""
        return float(sum(md.sigma**2 * sobolev_norm(md.field, self.xi) ** 2 for md in self.modes))

    def summability(self, p):
        """Partial sum ``sum_i (sigma_i ||e_i||_{H^xi})^{p/2}`` (reported, not graded)."""
        return float(sum((md.sigma * sobolev_norm(md.field, self.xi)) ** (p / 2.0)
                         for md in self.modes))

    @classmethod
    def from_entries(cls, n, entries, hurst, xi=3.5, complement_lambda=-1.0):
        """Build a spec from config-style dicts.

        Each entry has ``sigma``, ``lambda`` and either ``k`` + ``parity`` (a
        single trigonometric mode) or ``components``: a list of
        ``{"k", "parity", "weight"}`` combined and normalized to unit norm.
        """
        modes = []
        for entry in entries:
            if "components" in entry:
                f = SpectralField.zeros(n)
                parts = []
                for comp in entry["components"]:
                    w = float(comp.get("weight", 1.0))
                    f = f + w * trig_mode(n, comp["k"], comp.get("parity", "sin"))
                    parts.append(_mode_label(comp))
                nrm = f.norm()
                if nrm == 0:
                    raise StructureError("composite noise mode has zero norm")
                f = f / nrm
                label = "+".join(parts)
            else:
                f = trig_mode(n, entry["k"], entry.get("parity", "sin"))
                label = _mode_label(entry)
            modes.append(NoiseMode(f, float(entry["sigma"]), float(entry["lambda"]), label))
        return cls(modes, hurst, n, xi=xi, complement_lambda=complement_lambda).validate()


def _mode_label(entry):
    """CSV-safe label such as ``sin_1_-2``."""
    kx, ky = entry["k"]
    return f"{entry.get('parity', 'sin')}_{int(kx)}_{int(ky)}"


@dataclass
class FieldPath:
    """Path in the span of a noise basis: ``values(t) = sum_i coeffs[t, i] e_i``."""

    times: np.ndarray
    coeffs: np.ndarray
    spec: NoiseSpec

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 2 or self.coeffs.shape != (self.times.size, self.spec.m):
            raise StructureError(
                f"coefficients of shape {self.coeffs.shape} do not match "
                f"{self.times.size} times x {self.spec.m} modes")

    def __len__(self):
        return self.times.size

    def field(self, i):
        return self.spec.synthesize(self.coeffs[i])

    def with_coeffs(self, coeffs):
        return FieldPath(self.times, coeffs, self.spec)

    def neg_c_inverse(self):
        """``(-C)^{-1}`` applied pointwise (mode-wise division by ``|lambda_i|``)."""
        return self.with_coeffs(self.coeffs / np.abs(self.spec.lambdas))

    def subsample(self, stride):
        return FieldPath(self.times[::stride], self.coeffs[::stride], self.spec)


# --------------------------------------------------------------------------
# fBm


def fbm_covariance(s, t, H):
    """``E[B_s B_t] = (s^{2H} + t^{2H} - |t - s|^{2H}) / 2``."""
    if not 0 < H < 1:
        raise ParameterError(f"Hurst index must lie in (0, 1), got {H}")
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise ParameterError("fBm covariance needs nonnegative times")
    out = 0.5 * (s ** (2 * H) + t ** (2 * H) - np.abs(t - s) ** (2 * H))
    return float(out) if out.ndim == 0 else out


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise StructureError("time grid must be a nonempty 1D array")
    if grid[0] != 0.0:
        raise StructureError("time grid must start at 0")
    if np.any(np.diff(grid) <= 0):
        raise StructureError("time grid must be strictly increasing")
    if grid.size > CHOLESKY_CAP:
        raise SizeError(f"grid has {grid.size} points, cap is {CHOLESKY_CAP}")
    return grid


@lru_cache(maxsize=8)
def _cholesky_cached(grid_bytes, H):
    t = np.frombuffer(grid_bytes, dtype=float)[1:]
    cov = fbm_covariance(t[:, None], t[None, :], H)
    cov[np.diag_indices_from(cov)] += JITTER
    try:
        L = linalg.cholesky(cov, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericalError(
            f"fBm covariance not positive definite after jitter {JITTER} (H={H})") from exc
    L.setflags(write=False)
    return L


def fbm_cholesky(grid, H):
    """Lower Cholesky factor of the fBm covariance on ``grid[1:]``."""
    grid = _check_grid(grid)
    if not 0 < H < 1:
        raise ParameterError(f"Hurst index must lie in (0, 1), got {H}")
    return _cholesky_cached(grid.tobytes(), float(H))


def _fbm_from_normals(grid, H, z):
    out = np.zeros(z.shape[:-1] + (grid.size,))
    if grid.size > 1:
        L = fbm_cholesky(grid, H)
        out[..., 1:] = z @ L.T
    return out


def sample_fbm(grid, H, seed, stream=(FBM, 0)):
    """Exact fBm sample on ``grid`` (Cholesky), ``B_0 = 0``."""
    grid = _check_grid(grid)
    z = substream(seed, *stream).standard_normal(grid.size - 1)
    return ScalarPath(grid, _fbm_from_normals(grid, H, z))


def sample_fbm_ensemble(grid, H, seed, replicas, tag=0):
    """fBm replicas as an array ``(len(replicas), len(grid))``; replica ``r`` has its own substream."""
    grid = _check_grid(grid)
    replicas = range(replicas) if isinstance(replicas, int) else replicas
    z = replica_normals(seed, tag, replicas, grid.size - 1)
    return _fbm_from_normals(grid, H, z)


def sample_q_fwiener(spec, grid, seed):
    """``W^H_t = sum_i sigma_i e_i W^{H,i}_t`` with mode ``i`` on substream ``(FBM, i)``."""
    grid = _check_grid(grid)
    coeffs = np.zeros((grid.size, spec.m))
    for i, md in enumerate(spec.modes):
        coeffs[:, i] = md.sigma * sample_fbm(grid, spec.hurst, seed, stream=(FBM, i)).values
    return FieldPath(grid, coeffs, spec)


# --------------------------------------------------------------------------
# fractional OU by exponential quadrature


def _uniform_step(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        return 0.0
    h = np.diff(grid)
    if np.max(np.abs(h - h[0])) > 1e-9 * max(h[0], 1.0):
        raise StructureError("grid must be uniform")
    return float(h[0])


def refine_grid(grid, substeps):
    if int(substeps) != substeps or substeps < 1:
        raise ParameterError(f"substeps must be a positive integer, got {substeps}")
    grid = np.asarray(grid, dtype=float)
    _uniform_step(grid)
    return np.linspace(grid[0], grid[-1], (grid.size - 1) * int(substeps) + 1)


def ou_coefficients(dt, lam, amplitude):
    """One-step factors ``(e^{-lam dt}, amplitude * phi(lam dt))`` of :func:`ou_filter`.

    ``a * x + gain * dn`` reproduces one filter step bit for bit.
    """
    z = lam * dt
    phi = -np.expm1(-z) / z if z > 0 else 1.0
    return np.exp(-lam * dt), amplitude * phi


def fast_ou_coefficients(spec, eps, dt):
    """Per-mode ``(a_i, gain_i)`` arrays for ``dw = eps^{-1} C w dt + eps^{-H} dW``."""
    pairs = [ou_coefficients(dt, abs(lam) / eps, eps ** (-spec.hurst)) for lam in spec.lambdas]
    if not pairs:
        return np.zeros(0), np.zeros(0)
    a, gain = zip(*pairs)
    return np.array(a), np.array(gain)


def ou_filter(noise, dt, lam, amplitude, x0=0.0):
    """Solve ``dX = -lam X dt + amplitude dN`` along sampled noise ``N`` (last axis).

    The noise is taken piecewise linear between samples, for which the
    variation-of-constants formula is exact:
    ``X_{j+1} = e^{-lam dt} X_j + amplitude * phi(lam dt) * dN_j`` with
    ``phi(z) = (1 - e^{-z}) / z``.
    """
    noise = np.asarray(noise, dtype=float)
    a, gain = ou_coefficients(dt, lam, amplitude)
    dn = np.diff(noise, axis=-1)
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), noise.shape[:-1])
    zi = (a * x0)[..., None]
    y, _ = signal.lfilter([gain], [1.0, -a], dn, axis=-1, zi=zi)
    out = np.empty_like(noise)
    out[..., 0] = x0
    out[..., 1:] = y
    return out


def sample_fou(params, grid, seed, substeps=1, stream=(FBM, 0)):
    """fOU path on a uniform ``grid`` with fBm sampled on the refined grid."""
    fine = refine_grid(grid, substeps)
    B = sample_fbm(fine, params.hurst, seed, stream=stream).values
    X = ou_filter(B, _uniform_step(fine), params.lam, params.sigma, params.x0)
    return ScalarPath(np.asarray(grid, dtype=float), X[::int(substeps)])


def sample_fou_ensemble(params, grid, seed, replicas, substeps=1, tag=0):
    """Ensemble of fOU paths, array ``(replicas, len(grid))``."""
    fine = refine_grid(grid, substeps)
    B = sample_fbm_ensemble(fine, params.hurst, seed, replicas, tag=tag)
    X = ou_filter(B, _uniform_step(fine), params.lam, params.sigma, params.x0)
    return X[:, ::int(substeps)]


def fast_ou_from_noise(W, eps, substeps=1):
    """Mode-wise ``dw = eps^{-1} C w dt + eps^{-H} dW``, ``w(0) = 0``, driven by a given path.

    ``W`` is a :class:`FieldPath` on the refined grid; the result is returned
    on every ``substeps``-th point.
    """
    spec = W.spec
    dt = _uniform_step(W.times)
    w = np.zeros_like(W.coeffs)
    for i, lam in enumerate(spec.lambdas):
        w[:, i] = ou_filter(W.coeffs[:, i], dt, abs(lam) / eps, eps ** (-spec.hurst))
    return FieldPath(W.times, w, spec).subsample(int(substeps))


def sample_fast_ou_field(spec, eps, grid, seed, substeps=1, return_noise=False):
    """Fast fOU field ``w^eps`` on ``grid``.

    The driving ``W^H`` is exactly ``sample_q_fwiener(spec, refined grid, seed)``,
    so runs sharing a seed share their noise bit for bit.  With
    ``return_noise=True`` returns ``(w, W)`` with ``W`` subsampled to ``grid``.
    """
    if not 0 < eps <= 1:
        raise ParameterError(f"eps must lie in (0, 1], got {eps}")
    fine = refine_grid(grid, substeps)
    W = sample_q_fwiener(spec, fine, seed)
    w = fast_ou_from_noise(W, eps, substeps)
    if return_noise:
        return w, W.subsample(int(substeps))
    return w
