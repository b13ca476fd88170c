"""Canonical rough-path lifts of finite-dimensional paths, p-variation and driver operators.

Paths live in the coefficient space of a :class:`NoiseSpec` basis.  A lift
stores the path values ``y`` (level 1, cumulative) and the adjacent-interval
level-2 tensors; any ``Y^2_{s,t}`` is reconstructed through Chen's relation.
For the piecewise-linear interpolant of the stored samples the trapezoidal
rule for ``int (y_r - y_s) (x) dy_r`` is exact, so every lift built here is
the canonical (geometric) lift of that interpolant.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ParameterError, SizeError, StructureError
from .noise import FieldPath, _uniform_step
from .spectral import SpectralField, nonlinearity_b

PVAR_CAP = 4000


def default_p(H):
    """``1/H + 0.05`` clamped into the open interval ``(1/H, 3)``."""
    lo = 1.0 / H
    if lo >= 3:
        raise ParameterError(f"need H > 1/3 for a level-2 lift, got {H}")
    p = lo + 0.05
    if p >= 3:
        p = 0.5 * (lo + 3.0)
    return p


# --------------------------------------------------------------------------
# integrated fast process


def build_y_path(w: FieldPath, eps, alpha, H=None):
    """``y_t = eps^{-alpha + H} int_0^t w_r dr`` by the cumulative trapezoidal rule."""
    H = w.spec.hurst if H is None else H
    _uniform_step(w.times)
    if w.times.size < 2:
        return w.with_coeffs(np.zeros_like(w.coeffs))
    y = integrate.cumulative_trapezoid(w.coeffs, w.times, axis=0, initial=0.0)
    return w.with_coeffs(eps ** (H - alpha) * y)


# --------------------------------------------------------------------------
# lifts


@dataclass
class RoughLift:
    """Level-1 path values and level-2 adjacent-interval tensors on a grid.

    ``level1`` has shape ``(T, m)``; ``level2`` has shape ``(T - 1, m, m)``
    with ``level2[k] = Y^2_{t_k, t_{k+1}}``.  ``overrides`` maps index pairs
    ``(i, j)`` to tensors replacing the reconstructed ``Y^2_{t_i, t_j}``; it
    exists to build deliberately non-multiplicative objects.
    """

    times: np.ndarray
    level1: np.ndarray
    level2: np.ndarray
    p: float
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.level1 = np.asarray(self.level1, dtype=float)
        self.level2 = np.asarray(self.level2, dtype=float)
        T = self.times.size
        if T < 2:
            raise StructureError("a lift needs at least two grid points")
        if self.level1.ndim != 2 or self.level1.shape[0] != T:
            raise StructureError(f"level1 shape {self.level1.shape} does not match {T} times")
        m = self.level1.shape[1]
        if self.level2.shape != (T - 1, m, m):
            raise StructureError(f"level2 shape {self.level2.shape}, expected {(T - 1, m, m)}")
        if not self.p >= 1:
            raise ParameterError(f"p must be at least 1, got {self.p}")
        # cumulative signature from t_0: S2[k] = Y^2_{0, k}
        a = self.level1[:-1] - self.level1[0]
        dy = np.diff(self.level1, axis=0)
        steps = self.level2 + a[:, :, None] * dy[:, None, :]
        self._s2 = np.concatenate([np.zeros((1, m, m)), np.cumsum(steps, axis=0)])

    @property
    def m(self):
        return self.level1.shape[1]

    def __len__(self):
        return self.times.size

    def index(self, t):
        """Grid index of time ``t``; raises for off-grid times."""
        k = int(np.searchsorted(self.times, t))
        for j in (k - 1, k):
            if 0 <= j < self.times.size and abs(self.times[j] - t) <= 1e-9 * max(1.0, abs(t)):
                return j
        raise StructureError(f"time {t} is not a grid point")

    def increment(self, i, j):
        """``Y^1_{t_i, t_j}`` by grid index."""
        return self.level1[j] - self.level1[i]

    def level2_at(self, i, j):
        """``Y^2_{t_i, t_j}`` by grid index, via Chen's relation from ``t_0``."""
        if (i, j) in self.overrides:
            return np.asarray(self.overrides[(i, j)], dtype=float)
        a = self.level1[i] - self.level1[0]
        return self._s2[j] - self._s2[i] - np.outer(a, self.level1[j] - self.level1[i])

    def level2_row(self, j):
        """``Y^2_{t_i, t_j}`` for all ``i < j``, shape ``(j, m, m)``; ignores overrides."""
        a = self.level1[:j] - self.level1[0]
        inc = self.level1[j] - self.level1[:j]
        return self._s2[j] - self._s2[:j] - a[:, :, None] * inc[:, None, :]

    def perturbed(self, i, j, delta):
        """Copy whose ``Y^2_{t_i, t_j}`` is shifted by ``delta``."""
        out = RoughLift(self.times, self.level1, self.level2, self.p, dict(self.overrides))
        out.overrides[(i, j)] = self.level2_at(i, j) + np.asarray(delta, dtype=float)
        return out

    def scaled(self, c):
        """Dilation: level 1 times ``c``, level 2 times ``c^2``."""
        return RoughLift(self.times, c * self.level1, c * c * self.level2, self.p,
                         {k: c * c * np.asarray(v) for k, v in self.overrides.items()})


def lift_canonical(y, p=None, times=None):
    """Canonical lift of the piecewise-linear interpolant of ``y``.

    ``y`` is a :class:`FieldPath` or a ``(T, m)`` array (then ``times`` is
    required).  On every grid interval the trapezoidal rule for
    ``int (y_r - y_s) (x) dy_r`` gives ``dy (x) dy / 2``, and longer intervals
    follow from Chen's relation.
    """
    if isinstance(y, FieldPath):
        times, values = y.times, y.coeffs
        p = default_p(y.spec.hurst) if p is None else p
    else:
        values = np.asarray(y, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times is None:
            raise StructureError("times are required for array input")
        p = 2.0 if p is None else p
    times = np.asarray(times, dtype=float)
    if times.size < 2:
        raise StructureError("grid too coarse: need at least two points")
    dy = np.diff(values, axis=0)
    level2 = 0.5 * dy[:, :, None] * dy[:, None, :]
    return RoughLift(times, values, level2, p)


def chen_defect(L: RoughLift, s, u, t):
    """Frobenius norm of ``Y^2_{s,t} - Y^2_{s,u} - Y^2_{u,t} - Y^1_{s,u} (x) Y^1_{u,t}``."""
    i, k, j = L.index(s), L.index(u), L.index(t)
    if not i <= k <= j:
        raise StructureError("need s <= u <= t")
    return _chen(L, i, k, j)


def _chen(L, i, k, j):
    d = (L.level2_at(i, j) - L.level2_at(i, k) - L.level2_at(k, j)
         - np.outer(L.increment(i, k), L.increment(k, j)))
    return float(np.linalg.norm(d))


def max_chen_defect(L: RoughLift, stride=1):
    """Largest Chen defect over all triples of grid points taken every ``stride`` points.

    Vectorized over the middle index; triples touching ``overrides`` are
    checked individually.
    """
    idx = np.arange(0, len(L), stride)
    if idx[-1] != len(L) - 1:
        idx = np.append(idx, len(L) - 1)
    y, s2, m = L.level1, L._s2, L.m
    worst = 0.0
    for a, i in enumerate(idx):
        for j in idx[a + 2:]:
            ks = idx[(idx > i) & (idx < j)]
            a_i, a_k = y[i] - y[0], y[ks] - y[0]
            y2_ij = s2[j] - s2[i] - np.outer(a_i, y[j] - y[i])
            y2_ik = s2[ks] - s2[i] - a_i[None, :, None] * (y[ks] - y[i])[:, None, :]
            y2_kj = s2[j] - s2[ks] - a_k[:, :, None] * (y[j] - y[ks])[:, None, :]
            cross = (y[ks] - y[i])[:, :, None] * (y[j] - y[ks])[:, None, :]
            d = y2_ij - y2_ik - y2_kj - cross
            worst = max(worst, float(np.max(np.sqrt(np.sum(d.reshape(-1, m * m) ** 2, axis=1)))))
    for (i, j) in L.overrides:
        for k in range(len(L)):
            if i <= k <= j:
                worst = max(worst, _chen(L, i, k, j))
            elif k < i:
                worst = max(worst, _chen(L, k, i, j))
            else:
                worst = max(worst, _chen(L, i, j, k))
    return worst


def symmetric_defect(L: RoughLift, i, j):
    """``||Sym(Y^2_{s,t}) - Y^1_{s,t} (x) Y^1_{s,t} / 2||`` by grid index."""
    Y2 = L.level2_at(i, j)
    inc = L.increment(i, j)
    return float(np.linalg.norm(0.5 * (Y2 + Y2.T) - 0.5 * np.outer(inc, inc)))


def levy_area(L: RoughLift, i, j):
    """Antisymmetric part ``(Y^2 - Y^2^T) / 2`` of ``Y^2_{t_i, t_j}``."""
    Y2 = L.level2_at(i, j)
    return 0.5 * (Y2 - Y2.T)


# --------------------------------------------------------------------------
# p-variation


def _pvar_dp(n, row, q):
    """``max over partitions 0 = k_0 < ... < k_r = n-1 of sum row(k_{l+1})[k_l]^q``.

    ``row(j)`` returns the distances ``|X(t_i, t_j)|`` for all ``i < j``.
    """
    best = np.zeros(n)
    for j in range(1, n):
        best[j] = np.max(best[:j] + row(j) ** q)
    return best[-1]


def _check_size(n, cap):
    if n > cap:
        raise SizeError(f"p-variation of {n} points exceeds the cap of {cap}")


def p_variation(values, p, cap=PVAR_CAP):
    """Exact p-variation ``(sup over partitions of sum |x_{t_k t_{k+1}}|^p)^{1/p}``.

    ``values`` has shape ``(T,)`` or ``(T, d)``; the Euclidean norm is used.
    O(T^2) dynamic programming over partition endpoints.
    """
    if not p >= 1:
        raise ParameterError(f"p must be at least 1, got {p}")
    x = np.asarray(values, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    _check_size(n, cap)
    if n < 2:
        return 0.0
    x = x.reshape(n, -1)
    total = _pvar_dp(n, lambda j: np.sqrt(np.sum((x[j] - x[:j]) ** 2, axis=1)), p)
    return float(total ** (1.0 / p))


def p_variation_2index(row, n, q, cap=PVAR_CAP):
    """q-variation ``(sup sum |X_{t_k t_{k+1}}|^q)^{1/q}`` of a two-parameter family.

    ``row(j)`` returns ``|X_{t_i, t_j}|`` for ``i < j``.  ``q`` may be below 1.
    """
    if not q > 0:
        raise ParameterError(f"variation exponent must be positive, got {q}")
    _check_size(n, cap)
    if n < 2:
        return 0.0
    return float(_pvar_dp(n, row, q) ** (1.0 / q))


def level2_variation(L: RoughLift, q=None, cap=PVAR_CAP):
    """``(p/2)``-variation norm of ``Y^2``."""
    q = L.p / 2.0 if q is None else q
    m2 = L.m * L.m
    return p_variation_2index(
        lambda j: np.sqrt(np.sum(L.level2_row(j).reshape(j, m2) ** 2, axis=1)), len(L), q, cap)


def _check_same_grid(A, B):
    if A.times.shape != B.times.shape or np.max(np.abs(A.times - B.times)) > 1e-12:
        raise StructureError("lifts live on different grids")
    if A.m != B.m:
        raise StructureError(f"lifts have {A.m} and {B.m} modes")
    if A.p != B.p:
        raise StructureError(f"lifts use different p ({A.p} vs {B.p})")


def lift_distance(A: RoughLift, B: RoughLift, cap=PVAR_CAP):
    """``(d1, d2)``: p-variation of the level-1 difference and (p/2)-variation of level 2."""
    _check_same_grid(A, B)
    d1 = p_variation(A.level1 - B.level1, A.p, cap)
    m2 = A.m * A.m

    def row(j):
        diff = A.level2_row(j) - B.level2_row(j)
        return np.sqrt(np.sum(diff.reshape(j, m2) ** 2, axis=1))

    d2 = p_variation_2index(row, len(A), A.p / 2.0, cap)
    return d1, d2


# --------------------------------------------------------------------------
# unbounded rough driver


def urd_apply_1(L: RoughLift, s, t, phi: SpectralField, spec):
    """``b(Y^1_{s,t}, phi)`` with ``Y^1_{s,t} = sum_i (y_t - y_s)_i e_i``."""
    _check_modes(L, spec, phi)
    inc = L.increment(L.index(s), L.index(t))
    return nonlinearity_b(spec.synthesize(inc), phi)


def urd_apply_2(L: RoughLift, s, t, phi: SpectralField, spec):
    """``sum_{i,j} Y^2_{s,t}(i, j) b(e_j, b(e_i, phi))``.

    Evaluated as ``sum_j b(e_j, sum_i Y^2(i, j) b(e_i, phi))`` in fixed mode
    order, which needs ``2m`` nonlinearity calls instead of ``2m^2``.
    """
    _check_modes(L, spec, phi)
    Y2 = L.level2_at(L.index(s), L.index(t))
    return _contract_level2(Y2, phi, spec)


def _contract_level2(Y2, phi, spec):
    inner = np.stack([nonlinearity_b(md.field, phi).coeffs for md in spec.modes])
    out = SpectralField.zeros(phi.n)
    for j, md in enumerate(spec.modes):
        col = np.tensordot(Y2[:, j], inner, axes=1)
        if np.any(col):
            out = out + nonlinearity_b(md.field, SpectralField(col))
    return out


def _check_modes(L, spec, phi):
    if L.m != spec.m:
        raise StructureError(f"lift has {L.m} modes, spec has {spec.m}")
    if phi.n != spec.n:
        raise StructureError(f"field on n={phi.n}, spec on n={spec.n}")
