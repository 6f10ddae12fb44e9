import numpy as np
import pytest

from facediff import paf
from facediff.numerics import make_rng


def test_round_trip_bitwise(tmp_path):
    rng = make_rng(0)
    arrays = {
        "scalar": np.float32(3.25),
        "vec": rng.normal(size=7).astype(np.float32),
        "mat": rng.normal(size=(5, 4)).astype(np.float32),
        "cube": rng.normal(size=(3, 5, 3)).astype(np.float32),
    }
    p = tmp_path / "t.paf"
    paf.write_paf(p, arrays)
    back = paf.read_paf(p)
    assert list(back) == list(arrays)
    for name in arrays:
        got = back[name]
        assert got.dtype == np.float32
        np.testing.assert_array_equal(got, np.asarray(arrays[name], np.float32))


def test_rank3_dims_preserved(tmp_path):
    arr = np.arange(2 * 4 * 3, dtype=np.float32).reshape(2, 4, 3)
    p = tmp_path / "m.paf"
    paf.write_paf(p, {"mesh": arr})
    assert paf.read_paf(p)["mesh"].shape == (2, 4, 3)


def test_flipped_magic_reports_offset_zero(tmp_path):
    p = tmp_path / "t.paf"
    paf.write_paf(p, {"x": np.ones(3, np.float32)})
    raw = bytearray(p.read_bytes())
    raw[0] ^= 0xFF
    p.write_bytes(bytes(raw))
    with pytest.raises(paf.PafError) as exc:
        paf.read_paf(p)
    assert exc.value.offset == 0


def test_truncated_payload_is_an_error(tmp_path):
    p = tmp_path / "t.paf"
    paf.write_paf(p, {"x": np.ones(100, np.float32)})
    raw = p.read_bytes()
    p.write_bytes(raw[:-10])
    with pytest.raises(paf.PafError):
        paf.read_paf(p)


def test_trailing_garbage_is_an_error(tmp_path):
    p = tmp_path / "t.paf"
    paf.write_paf(p, {"x": np.ones(2, np.float32)})
    p.write_bytes(p.read_bytes() + b"junk")
    with pytest.raises(paf.PafError):
        paf.read_paf(p)


def test_unknown_dtype_code_rejected(tmp_path):
    p = tmp_path / "t.paf"
    paf.write_paf(p, {"x": np.ones(2, np.float32)})
    raw = bytearray(p.read_bytes())
    # dtype code sits right after magic(4) + count(4) + name_len(4) + name(1)
    raw[13] = 9
    p.write_bytes(bytes(raw))
    with pytest.raises(paf.PafError):
        paf.read_paf(p)


def test_duplicate_names_rejected_on_write(tmp_path):
    pairs = [("x", np.ones(1, np.float32)), ("x", np.zeros(1, np.float32))]
    with pytest.raises(ValueError):
        paf.write_paf(tmp_path / "t.paf", pairs)


def test_duplicate_names_rejected_on_read(tmp_path):
    p = tmp_path / "t.paf"
    paf.write_paf(p, {"x": np.ones(2, np.float32)})
    raw = p.read_bytes()
    entry = raw[8:]  # single entry record
    doubled = raw[:4] + (2).to_bytes(4, "little") + entry + entry
    p.write_bytes(doubled)
    with pytest.raises(paf.PafError):
        paf.read_paf(p)
