import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbm_slowfast.errors import StructureError
from fbm_slowfast.fou import ito_stokes_drift_spectral
from fbm_slowfast.io import (drift_to_json, field_from_bytes, field_from_json, field_to_bytes,
                             field_to_json, lift_from_bytes, lift_summary, lift_to_bytes,
                             load_field, path_from_bytes, path_to_bytes, path_to_csv, save_field,
                             write_csv)
from fbm_slowfast.noise import ScalarPath, sample_q_fwiener
from fbm_slowfast.rough import lift_canonical
from fbm_slowfast.spectral import random_field


class TestField:
    @given(st.integers(0, 2**31 - 1), st.sampled_from([8, 12, 16]))
    @settings(max_examples=15, deadline=None)
    def test_bytes_roundtrip(self, seed, n):
        f = random_field(n, np.random.default_rng(seed))
        assert np.array_equal(field_from_bytes(field_to_bytes(f)).coeffs, f.coeffs)

    def test_header_layout(self):
        f = random_field(8, np.random.default_rng(0))
        buf = field_to_bytes(f)
        magic, version, n, d, tag = struct.unpack_from("<4sIII8s", buf)
        assert (magic, version, n, d) == (b"SFLD", 1, 8, 2)
        assert tag.rstrip(b"\0") == b"forward"
        assert len(buf) == 24 + 2 * 8 * 8 * 16

    def test_json_roundtrip(self, rng):
        f = random_field(8, rng)
        assert np.array_equal(field_from_json(field_to_json(f)).coeffs, f.coeffs)

    def test_file_roundtrip(self, tmp_path, rng):
        f = random_field(8, rng)
        save_field(tmp_path / "u.sfld", f)
        assert np.array_equal(load_field(tmp_path / "u.sfld").coeffs, f.coeffs)

    def test_bad_magic(self, rng):
        buf = bytearray(field_to_bytes(random_field(8, rng)))
        buf[:4] = b"XXXX"
        with pytest.raises(StructureError):
            field_from_bytes(bytes(buf))

    def test_truncated(self, rng):
        with pytest.raises(StructureError):
            field_from_bytes(field_to_bytes(random_field(8, rng))[:-8])

    def test_wrong_normalization(self, rng):
        obj = field_to_json(random_field(8, rng))
        obj["normalization"] = "backward"
        with pytest.raises(StructureError):
            field_from_json(obj)


class TestPath:
    def test_bytes_roundtrip(self, spec2):
        W = sample_q_fwiener(spec2, np.linspace(0, 1, 9), 0)
        back = path_from_bytes(path_to_bytes(W))
        assert np.array_equal(back.coeffs, W.coeffs)
        assert np.array_equal(back.times, W.times)
        assert np.array_equal(back.spec.basis, spec2.basis)
        assert back.spec.hurst == spec2.hurst

    def test_csv(self, spec2):
        W = sample_q_fwiener(spec2, np.linspace(0, 1, 3), 0)
        lines = path_to_csv(W).split("\n")
        assert lines[0].startswith("t,") and len(lines[0].split(",")) == 3
        assert lines[-1] == "" and "\r" not in path_to_csv(W)
        assert float(lines[2].split(",")[1]) == W.coeffs[1, 0]

    def test_scalar_csv(self):
        text = path_to_csv(ScalarPath([0.0, 0.5], [0.0, 0.1]))
        assert text == "t,value\n0.0,0.0\n0.5,0.1\n"


class TestCsv:
    def test_exact_floats_and_header(self):
        buf = io.StringIO()
        write_csv(buf, ["a", "b"], [[0.1 + 0.2, 3], [np.float64(1e-300), np.int64(-2)]])
        assert buf.getvalue() == "a,b\n0.30000000000000004,3\n1e-300,-2\n"

    def test_header_only(self):
        buf = io.StringIO()
        write_csv(buf, ["x"], [])
        assert buf.getvalue() == "x\n"


class TestLift:
    def test_roundtrip(self, spec2):
        W = sample_q_fwiener(spec2, np.linspace(0, 1, 11), 2)
        L = lift_canonical(W.neg_c_inverse())
        back, labels = lift_from_bytes(lift_to_bytes(L, ["a", "b"]))
        assert labels == ["a", "b"]
        assert back.p == L.p
        assert np.array_equal(back.level1, L.level1)
        assert np.array_equal(back.level2, L.level2)

    def test_label_count(self, spec2):
        L = lift_canonical(np.zeros((3, 2)), times=np.linspace(0, 1, 3))
        with pytest.raises(StructureError):
            lift_to_bytes(L, ["only-one"])

    def test_summary(self):
        L = lift_canonical(np.random.default_rng(0).standard_normal((20, 2)).cumsum(0),
                           times=np.linspace(0, 1, 20))
        s = lift_summary(L)
        assert s["chen_max"] < 1e-12 and s["points"] == 20


def test_drift_json(spec2):
    d = drift_to_json(ito_stokes_drift_spectral(spec2), spec2)
    assert d["method"] == "spectral" and d["error"] == 0.0
