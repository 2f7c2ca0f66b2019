"""Binary tensor-file format checks."""

import struct

import numpy as np
import pytest

from gcblocks import FeatureMap, FormatError, NumericError, read_tensor, write_tensor


def test_round_trip_bit_identical(tmp_path, rng):
    fmap = FeatureMap.from_grid(rng.standard_normal((5, 3, 4)).astype(np.float32))
    path = tmp_path / "x.gct"
    write_tensor(path, fmap)
    back = read_tensor(path)
    assert back.grid_shape == (3, 4)
    assert np.array_equal(back.data, fmap.data)
    write_tensor(tmp_path / "y.gct", back)
    assert (tmp_path / "y.gct").read_bytes() == path.read_bytes()


def test_round_trip_video_rank4(tmp_path, rng):
    fmap = FeatureMap.from_grid(rng.standard_normal((2, 3, 4, 5)).astype(np.float32))
    path = tmp_path / "v.gct"
    write_tensor(path, fmap)
    back = read_tensor(path)
    assert back.frames == 3
    assert back.positions == 60
    assert np.array_equal(back.data, fmap.data)


def test_float64_truncated_on_write(tmp_path):
    data = np.array([[1.0 / 3.0]], dtype=np.float64)
    fmap = FeatureMap(data, height=1, width=1)
    path = tmp_path / "t.gct"
    write_tensor(path, fmap)
    assert read_tensor(path).data[0, 0] == np.float32(1.0 / 3.0)


def test_header_layout(tmp_path):
    fmap = FeatureMap(np.zeros((2, 6), dtype=np.float32), height=2, width=3)
    path = tmp_path / "h.gct"
    write_tensor(path, fmap)
    raw = path.read_bytes()
    assert raw[:4] == b"GCT1"
    assert struct.unpack_from("<I", raw, 4)[0] == 3
    assert struct.unpack_from("<3Q", raw, 8) == (2, 2, 3)
    assert len(raw) == 8 + 24 + 4 * 12


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.gct"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(FormatError, match="magic"):
        read_tensor(path)


def test_bad_rank(tmp_path):
    path = tmp_path / "rank.gct"
    path.write_bytes(b"GCT1" + struct.pack("<I", 2) + struct.pack("<2Q", 2, 2) + b"\x00" * 16)
    with pytest.raises(FormatError, match="rank"):
        read_tensor(path)


def test_truncated_header(tmp_path):
    path = tmp_path / "short.gct"
    path.write_bytes(b"GCT1\x03")
    with pytest.raises(FormatError, match="truncated"):
        read_tensor(path)


def test_payload_length_mismatch(tmp_path):
    header = b"GCT1" + struct.pack("<I", 3) + struct.pack("<3Q", 2, 2, 2)
    path = tmp_path / "len.gct"
    path.write_bytes(header + b"\x00" * 12)  # needs 32 bytes
    with pytest.raises(FormatError, match="payload"):
        read_tensor(path)


def test_zero_dimension_rejected(tmp_path):
    header = b"GCT1" + struct.pack("<I", 3) + struct.pack("<3Q", 2, 0, 2)
    path = tmp_path / "dim.gct"
    path.write_bytes(header)
    with pytest.raises(FormatError, match="positive"):
        read_tensor(path)


def test_nonfinite_payload_rejected(tmp_path):
    header = b"GCT1" + struct.pack("<I", 3) + struct.pack("<3Q", 1, 1, 1)
    path = tmp_path / "inf.gct"
    path.write_bytes(header + struct.pack("<f", float("inf")))
    with pytest.raises(NumericError):
        read_tensor(path)
