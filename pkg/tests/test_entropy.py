import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compx import entropy


def bits_of(data: bytes) -> str:
    return "".join(f"{b:08b}" for b in data)


def test_zigzag_is_a_permutation():
    assert sorted(entropy.ZIGZAG.tolist()) == list(range(64))
    # standard scan prefix: DC, then the first anti-diagonal pair
    assert entropy.ZIGZAG[:4].tolist() == [0, 1, 8, 16]


def test_exp_golomb_hand_codes():
    # ue(0)='1', ue(1)='010', ue(2)='011', ue(3)='00100'
    assert bits_of(entropy.pack_codes(np.array([0]))).startswith("1")
    assert bits_of(entropy.pack_codes(np.array([1]))).startswith("010")
    assert bits_of(entropy.pack_codes(np.array([2]))).startswith("011")
    assert bits_of(entropy.pack_codes(np.array([3]))).startswith("00100")
    # concatenation: ue(0) ue(3) -> '1' + '00100'
    assert bits_of(entropy.pack_codes(np.array([0, 3]))).startswith("100100")


def test_pack_codes_empty():
    assert entropy.pack_codes(np.array([], dtype=np.int64)) == b""


def _random_blocks(rng, n_blocks, density=0.2, amplitude=40):
    levels = np.zeros((n_blocks, 3, 64), dtype=np.int32)
    mask = rng.random(levels.shape) < density
    vals = rng.integers(-amplitude, amplitude + 1, size=levels.shape)
    vals[vals == 0] = 1
    levels[mask] = vals[mask]
    q_idx = rng.integers(0, entropy.QIDX_MAX + 1, size=n_blocks).astype(np.int64)
    return levels, q_idx


def test_segment_round_trip():
    rng = np.random.default_rng(11)
    levels, q_idx = _random_blocks(rng, 17)
    payload = entropy.encode_segment(levels, q_idx)
    out_levels, out_q = entropy.decode_segment(payload, 17)
    assert np.array_equal(out_levels, levels)
    assert np.array_equal(out_q, q_idx)


def test_segment_all_zero_blocks():
    levels = np.zeros((4, 3, 64), dtype=np.int32)
    q_idx = np.full(4, entropy.QIDX_BASE, dtype=np.int64)
    payload = entropy.encode_segment(levels, q_idx)
    # 4 bits per block (se(0) + 3x ue(0)) -> 16 bits -> 2 bytes
    assert len(payload) == 2
    out_levels, out_q = entropy.decode_segment(payload, 4)
    assert np.array_equal(out_levels, levels)
    assert np.array_equal(out_q, q_idx)


def test_empty_segment():
    payload = entropy.encode_segment(np.zeros((0, 3, 64), dtype=np.int32),
                                     np.zeros(0, dtype=np.int64))
    assert payload == b""
    levels, q_idx = entropy.decode_segment(b"", 0)
    assert levels.shape == (0, 3, 64)
    assert q_idx.shape == (0,)


def test_decode_rejects_trailing_bytes():
    levels, q_idx = _random_blocks(np.random.default_rng(3), 2)
    payload = entropy.encode_segment(levels, q_idx)
    with pytest.raises(ValueError):
        entropy.decode_segment(payload + b"\x00", 2)


def test_decode_rejects_truncation():
    levels, q_idx = _random_blocks(np.random.default_rng(5), 8, density=0.5)
    payload = entropy.encode_segment(levels, q_idx)
    with pytest.raises(ValueError):
        entropy.decode_segment(payload[: len(payload) // 2], 8)


def test_decode_rejects_nonzero_padding():
    levels = np.zeros((1, 3, 64), dtype=np.int32)
    payload = entropy.encode_segment(levels, np.array([entropy.QIDX_BASE], dtype=np.int64))
    corrupted = bytes([payload[0] | 0x01])  # touch a padding bit
    with pytest.raises(ValueError):
        entropy.decode_segment(corrupted, 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 12))
def test_segment_round_trip_property(seed, n_blocks):
    rng = np.random.default_rng(seed)
    levels, q_idx = _random_blocks(rng, n_blocks, density=0.35, amplitude=900)
    payload = entropy.encode_segment(levels, q_idx)
    out_levels, out_q = entropy.decode_segment(payload, n_blocks)
    assert np.array_equal(out_levels, levels)
    assert np.array_equal(out_q, q_idx)
