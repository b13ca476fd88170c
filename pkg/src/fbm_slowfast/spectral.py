"""Divergence-free vector fields on the 2D torus in Fourier form.

Conventions
-----------
The torus is ``[0, 2*pi)^2`` sampled on an ``n x n`` grid.  A physical field is
an array ``u[c, i, j]`` with component ``c`` (0 = x, 1 = y) evaluated at
``x = 2*pi*i/n, y = 2*pi*j/n``.  Spectral coefficients use the numpy FFT
ordering along both axes (``numpy.fft.fftfreq(n, 1/n)``), so axis 1 carries
``kx`` and axis 2 carries ``ky``.

The forward transform carries the ``1/n^2`` factor (numpy ``norm="forward"``),
hence ``coeffs[:, 0, 0]`` is the spatial mean and Parseval reads

    mean over the torus of |u|^2 = sum_k |u_hat(k)|^2.

All norms and inner products in this package use that normalization.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import StructureError

NORMALIZATION = "forward"
D = 2


@lru_cache(maxsize=16)
def wavenumbers(n):
    """Integer wavevector grids ``(kx, ky, k2)`` of shape ``(n, n)``."""
    k = np.fft.fftfreq(n, 1.0 / n)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    k2 = kx**2 + ky**2
    for a in (kx, ky, k2):
        a.setflags(write=False)
    return kx, ky, k2


@lru_cache(maxsize=16)
def dealias_mask(n):
    """Boolean 2/3-rule mask: keep modes with ``|kx|, |ky| < n/3``."""
    kx, ky, _ = wavenumbers(n)
    mask = (np.abs(kx) < n / 3.0) & (np.abs(ky) < n / 3.0)
    mask.setflags(write=False)
    return mask


def _reflect(a):
    """Return ``a[..., -k]`` for arrays indexed by FFT-ordered wavevectors."""
    return np.roll(np.flip(a, axis=(-2, -1)), 1, axis=(-2, -1))


class SpectralField:
    """Real vector field on the 2D torus stored by its Fourier coefficients.

    ``coeffs`` has shape ``(2, n, n)`` and dtype complex128.  The constructor
    does not enforce the divergence-free invariant; use :func:`leray_project`
    or :meth:`check` for that.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.ndim != 3 or coeffs.shape[0] != D or coeffs.shape[1] != coeffs.shape[2]:
            raise StructureError(
                f"expected coefficients of shape (2, n, n), got {coeffs.shape}")
        if coeffs.shape[1] % 2:
            raise StructureError(f"grid resolution must be even, got {coeffs.shape[1]}")
        self.coeffs = coeffs

    @property
    def n(self):
        return self.coeffs.shape[1]

    @property
    def d(self):
        return D

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros((D, n, n), dtype=np.complex128))

    @classmethod
    def from_physical(cls, u):
        u = np.asarray(u, dtype=float)
        return cls(np.fft.fft2(u, axes=(-2, -1), norm=NORMALIZATION))

    def to_physical(self):
        return np.fft.ifft2(self.coeffs, axes=(-2, -1), norm=NORMALIZATION).real

    def copy(self):
        return SpectralField(self.coeffs.copy())

    def __add__(self, other):
        _check_same_grid(self, other)
        return SpectralField(self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return SpectralField(self.coeffs - other.coeffs)

    def __neg__(self):
        return SpectralField(-self.coeffs)

    def __mul__(self, scalar):
        return SpectralField(self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SpectralField(self.coeffs / scalar)

    def __repr__(self):
        return f"SpectralField(n={self.n}, norm={self.norm():.6g})"

    def inner(self, other):
        """L2 inner product (mean over the torus of ``u . v``)."""
        _check_same_grid(self, other)
        return float(np.vdot(self.coeffs, other.coeffs).real)

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def symmetry_defect(self):
        """Max of ``|u_hat(-k) - conj(u_hat(k))|``."""
        return float(np.max(np.abs(_reflect(self.coeffs) - np.conj(self.coeffs))))

    def divergence_defect(self):
        """Max over k of ``|k . u_hat(k)|``."""
        kx, ky, _ = wavenumbers(self.n)
        return float(np.max(np.abs(kx * self.coeffs[0] + ky * self.coeffs[1])))

    def check(self, rtol=1e-12):
        """Raise :class:`StructureError` unless all field invariants hold."""
        scale = max(self.norm(), 1.0)
        if self.symmetry_defect() > rtol * scale:
            raise StructureError("field is not real-valued (conjugate symmetry broken)")
        if np.max(np.abs(self.coeffs[:, 0, 0])) > rtol * scale:
            raise StructureError("field does not have zero mean")
        if self.divergence_defect() > rtol * scale * self.n:
            raise StructureError("field is not divergence-free")
        return self


def _check_same_grid(*fields):
    n = fields[0].n
    for f in fields[1:]:
        if f.n != n:
            raise StructureError(f"grid mismatch: {n} vs {f.n}")


def _as_coeffs(f):
    if isinstance(f, SpectralField):
        return f.coeffs
    c = np.asarray(f, dtype=np.complex128)
    if c.ndim != 3 or c.shape[0] != D:
        raise StructureError(f"expected 2 components on an (n, n) grid, got shape {c.shape}")
    return c


def leray_project(f):
    """Project onto zero-mean divergence-free fields: ``u - k (k.u)/|k|^2``."""
    c = _as_coeffs(f)
    n = c.shape[-1]
    kx, ky, k2 = wavenumbers(n)
    safe = np.where(k2 == 0, 1.0, k2)
    kdotu = (kx * c[0] + ky * c[1]) / safe
    out = np.empty_like(c)
    out[0] = c[0] - kx * kdotu
    out[1] = c[1] - ky * kdotu
    out[:, 0, 0] = 0.0
    return SpectralField(out)


def stokes_apply(u):
    """Stokes operator ``A = Pi Delta``; on divergence-free input it is ``-|k|^2``."""
    _, _, k2 = wavenumbers(u.n)
    return SpectralField(-k2 * u.coeffs)


def stokes_exp(u, t):
    """Heat semigroup ``exp(t A) u``."""
    _, _, k2 = wavenumbers(u.n)
    return SpectralField(np.exp(-t * k2) * u.coeffs)


def gradient_norm_sq(u):
    """``||grad u||^2 = sum |k|^2 |u_hat|^2``."""
    _, _, k2 = wavenumbers(u.n)
    return float(np.sum(k2 * np.abs(u.coeffs) ** 2))


def dealias(u):
    return SpectralField(u.coeffs * dealias_mask(u.n))


def nonlinearity_b(u, v):
    """Dealiased ``b(u, v) = Pi (u . grad) v``.

    Both inputs are truncated to the 2/3-rule mask before the products are
    formed, so the result is the exact Galerkin nonlinearity on the retained
    modes.  Bilinear in ``(u, v)``.
    """
    _check_same_grid(u, v)
    n = u.n
    mask = dealias_mask(n)
    kx, ky, _ = wavenumbers(n)
    uh = u.coeffs * mask
    vh = v.coeffs * mask
    up = np.fft.ifft2(uh, axes=(-2, -1), norm=NORMALIZATION).real
    # grad v: dv_c/dx and dv_c/dy for c = 0, 1
    dx = np.fft.ifft2(1j * kx * vh, axes=(-2, -1), norm=NORMALIZATION).real
    dy = np.fft.ifft2(1j * ky * vh, axes=(-2, -1), norm=NORMALIZATION).real
    adv = up[0] * dx + up[1] * dy
    adv_hat = np.fft.fft2(adv, axes=(-2, -1), norm=NORMALIZATION) * mask
    return leray_project(adv_hat)


def b2_apply(f1, f2, phi):
    """Second-order driver kernel ``b(f2, b(f1, phi))``."""
    _check_same_grid(f1, f2, phi)
    return nonlinearity_b(f2, nonlinearity_b(f1, phi))


def sobolev_norm(u, s):
    """``sqrt(sum_{k != 0} |k|^{2s} |u_hat(k)|^2)``; ``s = 0`` is the L2 norm."""
    s = float(s)
    if not np.isfinite(s):
        raise ValueError("Sobolev index must be finite")
    _, _, k2 = wavenumbers(u.n)
    weight = np.zeros_like(k2)
    nz = k2 > 0
    weight[nz] = k2[nz] ** s
    return float(np.sqrt(np.sum(weight * np.abs(u.coeffs) ** 2)))


def trig_mode(n, k, parity="sin"):
    """Unit-norm divergence-free mode ``sqrt(2) a_perp(k) sin(k.x)`` (or cos).

    ``a_perp(k) = (-ky, kx)/|k|``.  These fields are shear flows, so
    ``b(e, e) = 0`` for each of them.
    """
    kx_, ky_ = int(k[0]), int(k[1])
    if kx_ == 0 and ky_ == 0:
        raise ValueError("wavevector must be nonzero")
    if max(abs(kx_), abs(ky_)) >= n // 2:
        raise StructureError(f"wavevector {k} not resolved on an n={n} grid")
    norm_k = np.hypot(kx_, ky_)
    a = np.array([-ky_, kx_]) / norm_k
    if parity == "sin":
        cp, cm = -0.5j, 0.5j
    elif parity == "cos":
        cp, cm = 0.5, 0.5
    else:
        raise ValueError(f"parity must be 'sin' or 'cos', got {parity!r}")
    c = np.zeros((D, n, n), dtype=np.complex128)
    ip, jp = kx_ % n, ky_ % n
    im, jm = (-kx_) % n, (-ky_) % n
    for comp in range(D):
        c[comp, ip, jp] += np.sqrt(2.0) * a[comp] * cp
        c[comp, im, jm] += np.sqrt(2.0) * a[comp] * cm
    return SpectralField(c)


def taylor_green(n, amplitude=1.0):
    """Taylor-Green cell ``(sin x cos y, -cos x sin y)`` scaled to unit norm."""
    x = 2 * np.pi * np.arange(n) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    u = np.stack([np.sin(X) * np.cos(Y), -np.cos(X) * np.sin(Y)])
    f = SpectralField.from_physical(u)
    return f * (amplitude / f.norm())


def random_field(n, rng, kmax=None, slope=1.0):
    """Random real divergence-free field supported in ``|k|_inf <= kmax``.

    Coefficients decay like ``|k|^-slope``.  Used by tests and examples.
    """
    kmax = n // 3 - 1 if kmax is None else int(kmax)
    kx, ky, k2 = wavenumbers(n)
    support = (np.abs(kx) <= kmax) & (np.abs(ky) <= kmax) & (k2 > 0)
    amp = np.where(support, np.maximum(k2, 1.0) ** (-slope / 2.0), 0.0)
    c = (rng.standard_normal((D, n, n)) + 1j * rng.standard_normal((D, n, n))) * amp
    c = 0.5 * (c + np.conj(_reflect(c)))
    return leray_project(c)
