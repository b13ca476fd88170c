"""Binary, JSON and CSV layouts for fields, paths, lifts and drift results.

Binary layouts are little-endian with a fixed header; arrays follow in C
(row-major) order.

SpectralField ``.sfld``::

    magic   4s   b"SFLD"
    version u32  1
    n       u32  grid points per axis
    d       u32  components (2)
    norm    8s   transform normalization tag, b"forward\\0"
    coeffs  complex128[d, n, n]   FFT-ordered coefficients

FieldPath ``.fpth``::

    magic b"FPTH", version u32, T u32, m u32, n u32, hurst f64
    times   f64[T]
    coeffs  f64[T, m]             path coefficients in the noise basis
    sigma   f64[m], lambda f64[m]
    basis   complex128[m, 2, n, n]

RoughLift ``.rlft``::

    magic b"RLFT", version u32, T u32, m u32, p f64
    labels  u32 length + UTF-8 JSON list of mode labels
    times   f64[T]
    level1  f64[T, m]             path values
    level2  f64[T - 1, m, m]      adjacent-interval tensors
"""
from __future__ import annotations

import csv
import io as _io
import json
import struct

import numpy as np

from .errors import StructureError
from .noise import FieldPath, NoiseMode, NoiseSpec
from .rough import RoughLift, level2_variation, max_chen_defect, p_variation
from .spectral import D, NORMALIZATION, SpectralField

VERSION = 1
_FIELD_HEADER = struct.Struct("<4sIII8s")
_PATH_HEADER = struct.Struct("<4sIIIId")
_LIFT_HEADER = struct.Struct("<4sIIId")


def _norm_tag():
    return NORMALIZATION.encode("ascii").ljust(8, b"\0")


def _read_header(buf, header, magic):
    if len(buf) < header.size:
        raise StructureError("truncated header")
    values = header.unpack_from(buf, 0)
    if values[0] != magic:
        raise StructureError(f"bad magic {values[0]!r}, expected {magic!r}")
    if values[1] != VERSION:
        raise StructureError(f"unsupported layout version {values[1]}")
    return values, header.size


def _take(buf, offset, dtype, shape):
    count = int(np.prod(shape))
    nbytes = count * np.dtype(dtype).itemsize
    if offset + nbytes > len(buf):
        raise StructureError("truncated payload")
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=offset).reshape(shape)
    return arr.copy(), offset + nbytes


# --------------------------------------------------------------------------
# SpectralField


def field_to_bytes(f: SpectralField):
    head = _FIELD_HEADER.pack(b"SFLD", VERSION, f.n, D, _norm_tag())
    return head + np.ascontiguousarray(f.coeffs, dtype="<c16").tobytes()


def field_from_bytes(buf):
    (_, _, n, d, tag), off = _read_header(buf, _FIELD_HEADER, b"SFLD")
    if tag != _norm_tag():
        raise StructureError(f"normalization tag {tag!r} does not match {NORMALIZATION!r}")
    if d != D:
        raise StructureError(f"expected {D} components, got {d}")
    coeffs, _ = _take(buf, off, "<c16", (d, n, n))
    return SpectralField(coeffs)


def field_to_json(f: SpectralField):
    return {
        "n": f.n,
        "d": D,
        "normalization": NORMALIZATION,
        "re": f.coeffs.real.tolist(),
        "im": f.coeffs.imag.tolist(),
    }


def field_from_json(obj):
    if obj.get("normalization") != NORMALIZATION:
        raise StructureError(f"normalization must be {NORMALIZATION!r}")
    c = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
    if c.shape != (obj["d"], obj["n"], obj["n"]):
        raise StructureError(f"coefficient shape {c.shape} does not match header")
    return SpectralField(c)


def save_field(path, f):
    with open(path, "wb") as fh:
        fh.write(field_to_bytes(f))


def load_field(path):
    with open(path, "rb") as fh:
        return field_from_bytes(fh.read())


# --------------------------------------------------------------------------
# FieldPath


def path_to_bytes(p: FieldPath):
    spec = p.spec
    head = _PATH_HEADER.pack(b"FPTH", VERSION, len(p), spec.m, spec.n, spec.hurst)
    parts = [head, p.times.astype("<f8").tobytes(), p.coeffs.astype("<f8").tobytes(),
             spec.sigmas.astype("<f8").tobytes(), spec.lambdas.astype("<f8").tobytes(),
             np.ascontiguousarray(spec.basis, dtype="<c16").tobytes()]
    return b"".join(parts)


def path_from_bytes(buf, xi=3.5, complement_lambda=-1.0):
    (_, _, T, m, n, hurst), off = _read_header(buf, _PATH_HEADER, b"FPTH")
    times, off = _take(buf, off, "<f8", (T,))
    coeffs, off = _take(buf, off, "<f8", (T, m))
    sigma, off = _take(buf, off, "<f8", (m,))
    lam, off = _take(buf, off, "<f8", (m,))
    basis, off = _take(buf, off, "<c16", (m, 2, n, n))
    modes = [NoiseMode(SpectralField(basis[i]), float(sigma[i]), float(lam[i]), f"mode{i}")
             for i in range(m)]
    spec = NoiseSpec(modes, hurst, n, xi=xi, complement_lambda=complement_lambda)
    return FieldPath(times, coeffs, spec)


def write_csv(fh, header, rows):
    """Comma-separated, LF line endings, ``repr``-exact floats, header row first."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return v


def path_to_csv(p):
    """CSV text with columns ``t, <mode labels...>``; scalar paths use ``t, value``."""
    buf = _io.StringIO()
    if isinstance(p, FieldPath):
        labels = [md.label or f"mode{i}" for i, md in enumerate(p.spec.modes)]
        write_csv(buf, ["t"] + labels, [[t, *row] for t, row in zip(p.times, p.coeffs)])
    else:
        write_csv(buf, ["t", "value"], zip(p.times, p.values))
    return buf.getvalue()


# --------------------------------------------------------------------------
# RoughLift


def lift_to_bytes(L: RoughLift, labels=None):
    labels = labels or [f"mode{i}" for i in range(L.m)]
    if len(labels) != L.m:
        raise StructureError(f"{len(labels)} labels for {L.m} modes")
    lab = json.dumps(list(labels)).encode("utf-8")
    head = _LIFT_HEADER.pack(b"RLFT", VERSION, len(L), L.m, float(L.p))
    return b"".join([head, struct.pack("<I", len(lab)), lab,
                     L.times.astype("<f8").tobytes(), L.level1.astype("<f8").tobytes(),
                     L.level2.astype("<f8").tobytes()])


def lift_from_bytes(buf):
    """Returns ``(lift, labels)``."""
    (_, _, T, m, p), off = _read_header(buf, _LIFT_HEADER, b"RLFT")
    (nlab,) = struct.unpack_from("<I", buf, off)
    off += 4
    labels = json.loads(buf[off:off + nlab].decode("utf-8"))
    off += nlab
    times, off = _take(buf, off, "<f8", (T,))
    level1, off = _take(buf, off, "<f8", (T, m))
    level2, off = _take(buf, off, "<f8", (T - 1, m, m))
    return RoughLift(times, level1, level2, p), labels


def lift_summary(L: RoughLift, chen_stride=None):
    """JSON-ready summary: p, variation norms and the largest Chen defect."""
    stride = chen_stride or max(1, len(L) // 50)
    return {
        "p": float(L.p),
        "points": len(L),
        "modes": L.m,
        "pvar_level1": p_variation(L.level1, L.p),
        "pvar_level2": level2_variation(L),
        "chen_max": max_chen_defect(L, stride),
        "chen_stride": stride,
    }


# --------------------------------------------------------------------------
# DriftResult


def drift_to_json(result, spec=None):
    return result.to_dict(spec)
