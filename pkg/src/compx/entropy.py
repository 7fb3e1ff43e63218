"""Exp-Golomb entropy coding of quantized block coefficients.

Segment layout (bit-level, MSB-first within bytes, zero padding to a byte
boundary at segment end):

    per block, in ascending block index:
        se(q_delta)            12-bit quality index delta vs. previous block
                               (base 2048 for the first block of a segment)
        per channel Y, Cb, Cr:
            ue(n_nonzero)      nonzero coefficient count, 0..64
            n_nonzero times:
                ue(zero_run)   zeros preceding this coefficient (zigzag scan)
                se(level)      the nonzero quantized level

ue/se are the order-0 exponential-Golomb codes. Every segment is fully
self-contained: no state crosses segment boundaries.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# zigzag index table: position k in scan order -> raster index in the 8x8 block
def _build_zigzag() -> np.ndarray:
    cells = []
    for s in range(15):
        diag = [(r, s - r) for r in range(max(0, s - 7), min(7, s) + 1)]
        if s % 2 == 0:
            diag.reverse()
        cells.extend(diag)
    return np.array([r * 8 + c for r, c in cells], dtype=np.int64)


ZIGZAG = _build_zigzag()
INV_ZIGZAG = np.argsort(ZIGZAG)

QIDX_MAX = 4095  # 12-bit quality index
QIDX_BASE = 2048  # delta-chain base for the first block of each segment


def _signed_to_code(v: np.ndarray) -> np.ndarray:
    """Map signed values to exp-Golomb code numbers (1->1, -1->2, 2->3, ...)."""
    v = v.astype(np.int64)
    return np.where(v > 0, 2 * v - 1, -2 * v)


def pack_codes(code_nums: np.ndarray) -> bytes:
    """Pack order-0 exp-Golomb codes for ``code_nums`` into padded bytes."""
    if code_nums.size == 0:
        return b""
    values = code_nums.astype(np.int64) + 1
    # bit_length via frexp: exact for values < 2**53
    bit_len = np.frexp(values.astype(np.float64))[1].astype(np.int64)
    lengths = 2 * bit_len - 1
    total = int(lengths.sum())
    sym = np.repeat(np.arange(values.size, dtype=np.int64), lengths)
    starts = np.cumsum(lengths) - lengths
    offset = np.arange(total, dtype=np.int64) - starts[sym]
    shift = lengths[sym] - 1 - offset
    bits = ((values[sym] >> shift) & 1).astype(np.uint8)
    return np.packbits(bits).tobytes()


def encode_segment(levels_zz: np.ndarray, q_idx: np.ndarray) -> bytes:
    """Encode quantized blocks of one group into a byte-aligned segment.

    levels_zz: (n_blocks, 3, 64) int32, zigzag scan order.
    q_idx: (n_blocks,) quality indices in [0, QIDX_MAX].
    """
    nb = levels_zz.shape[0]
    if nb == 0:
        return b""
    mask = levels_zz != 0
    cnt = mask.sum(axis=2)  # (nb, 3)

    bi_idx, ch_idx, pos_idx = np.nonzero(mask)
    total_pairs = bi_idx.size
    pair_counts = cnt.ravel()
    pair_group_start = np.cumsum(pair_counts) - pair_counts
    group = bi_idx * 3 + ch_idx
    j = np.arange(total_pairs, dtype=np.int64) - pair_group_start[group]
    prev_pos = np.empty(total_pairs, dtype=np.int64)
    if total_pairs:
        prev_pos[1:] = pos_idx[:-1]
        prev_pos[0] = -1
    runs = np.where(j == 0, pos_idx, pos_idx - prev_pos - 1)
    levels = levels_zz[bi_idx, ch_idx, pos_idx]

    # scatter symbols into stream order
    ch_sym_counts = 1 + 2 * cnt  # ue(cnt) + pairs, per channel
    blk_sym_counts = 1 + ch_sym_counts.sum(axis=1)
    blk_start = np.cumsum(blk_sym_counts) - blk_sym_counts
    ch_prefix = np.cumsum(ch_sym_counts, axis=1) - ch_sym_counts
    cnt_pos = blk_start[:, None] + 1 + ch_prefix

    n_symbols = int(blk_sym_counts.sum())
    codes = np.empty(n_symbols, dtype=np.int64)
    q_delta = np.empty(nb, dtype=np.int64)
    q_delta[0] = int(q_idx[0]) - QIDX_BASE
    q_delta[1:] = np.diff(q_idx.astype(np.int64))
    codes[blk_start] = _signed_to_code(q_delta)
    codes[cnt_pos.ravel()] = cnt.ravel()
    if total_pairs:
        pair_base = cnt_pos[bi_idx, ch_idx] + 1 + 2 * j
        codes[pair_base] = runs
        codes[pair_base + 1] = _signed_to_code(levels)
    return pack_codes(codes)


@njit(cache=True)
def _parse_segment_bits(bits, n_blocks):  # pragma: no cover - compiled
    """Sequentially parse one segment's bitstream.

    Returns (levels_zz, q_idx, status): status 0 = ok, 1 = corrupt.
    """
    levels = np.zeros((n_blocks, 3, 64), dtype=np.int32)
    q_idx = np.zeros(n_blocks, dtype=np.int32)
    nbits = bits.shape[0]
    pos = 0
    prev_q = QIDX_BASE
    for bi in range(n_blocks):
        # se(q_delta)
        z = 0
        while pos < nbits and bits[pos] == 0:
            z += 1
            pos += 1
            if z > 31:
                return levels, q_idx, 1
        if pos + z + 1 > nbits:
            return levels, q_idx, 1
        v = 0
        for _ in range(z + 1):
            v = (v << 1) | bits[pos]
            pos += 1
        code = v - 1
        if code == 0:
            dq = 0
        elif code % 2 == 1:
            dq = (code + 1) // 2
        else:
            dq = -(code // 2)
        prev_q += dq
        if prev_q < 0 or prev_q > QIDX_MAX:
            return levels, q_idx, 1
        q_idx[bi] = prev_q
        for ch in range(3):
            # ue(count)
            z = 0
            while pos < nbits and bits[pos] == 0:
                z += 1
                pos += 1
                if z > 31:
                    return levels, q_idx, 1
            if pos + z + 1 > nbits:
                return levels, q_idx, 1
            v = 0
            for _ in range(z + 1):
                v = (v << 1) | bits[pos]
                pos += 1
            count = v - 1
            if count > 64:
                return levels, q_idx, 1
            coeff_at = 0
            for _ in range(count):
                # ue(run)
                z = 0
                while pos < nbits and bits[pos] == 0:
                    z += 1
                    pos += 1
                    if z > 31:
                        return levels, q_idx, 1
                if pos + z + 1 > nbits:
                    return levels, q_idx, 1
                v = 0
                for _ in range(z + 1):
                    v = (v << 1) | bits[pos]
                    pos += 1
                run = v - 1
                coeff_at += run
                if coeff_at >= 64:
                    return levels, q_idx, 1
                # se(level), must be nonzero
                z = 0
                while pos < nbits and bits[pos] == 0:
                    z += 1
                    pos += 1
                    if z > 31:
                        return levels, q_idx, 1
                if pos + z + 1 > nbits:
                    return levels, q_idx, 1
                v = 0
                for _ in range(z + 1):
                    v = (v << 1) | bits[pos]
                    pos += 1
                code = v - 1
                if code == 0:
                    return levels, q_idx, 1  # zero level is never encoded
                if code % 2 == 1:
                    level = (code + 1) // 2
                else:
                    level = -(code // 2)
                levels[bi, ch, coeff_at] = level
                coeff_at += 1
    # remaining bits are byte-boundary padding and must be zero
    if nbits - pos >= 8:
        return levels, q_idx, 1
    while pos < nbits:
        if bits[pos] != 0:
            return levels, q_idx, 1
        pos += 1
    return levels, q_idx, 0


def decode_segment(payload: bytes, n_blocks: int):
    """Decode a segment; returns (levels_zz, q_idx) or raises ValueError."""
    if n_blocks == 0:
        if payload:
            raise ValueError("nonempty payload for empty segment")
        return (
            np.zeros((0, 3, 64), dtype=np.int32),
            np.zeros(0, dtype=np.int32),
        )
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
    levels, q_idx, status = _parse_segment_bits(bits, n_blocks)
    if status != 0:
        raise ValueError("corrupt segment bitstream")
    return levels, q_idx
