"""Bit-exact serialization of the object-structured bitstream (.ssbx).

Byte layout, all integers little-endian:

    offset 0   magic          4 bytes  "SSBX"
           4   version        u8      (= 1)
           5   width          u32
           9   height         u32
          13   colorspace     u8      (1 = YCbCr BT.601 full-range 4:4:4)
          14   block_size     u8      (= 8)
          15   profile_kind   u8      (index into codec.PROFILE_KINDS)
          16   group_count    u16
          18   group table    per group: group_id u16, label_len u8,
                              label bytes (UTF-8), block_count u32,
                              payload_len u32
               block map      u16 per block, row-major, full resolution
               segments       payload bytes, concatenated in table order

The block map always covers every block, even after groups are dropped by
:func:`extract`; the decoder needs the omitted-block geometry to place the
neutral-gray fill. Segment payloads are opaque at this layer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagic,
    EmptySelection,
    InconsistentHeader,
    InvariantViolation,
    Truncated,
    UnknownGroup,
    UnsupportedVersion,
)

MAGIC = b"SSBX"
VERSION = 1
COLORSPACE_YCBCR601 = 1
BLOCK_SIZE = 8
MAX_DIM = 16384
N_PROFILE_KINDS = 6

FIXED_HEADER_LEN = 18


@dataclass
class GroupEntry:
    group_id: int
    label: str
    block_count: int
    payload_len: int

    def encoded_len(self) -> int:
        return 11 + len(self.label.encode("utf-8"))


@dataclass
class ContainerHeader:
    width: int
    height: int
    profile_kind: int
    group_table: list[GroupEntry] = field(default_factory=list)
    version: int = VERSION
    colorspace: int = COLORSPACE_YCBCR601
    block_size: int = BLOCK_SIZE

    @property
    def blocks_x(self) -> int:
        return (self.width + self.block_size - 1) // self.block_size

    @property
    def blocks_y(self) -> int:
        return (self.height + self.block_size - 1) // self.block_size

    @property
    def group_ids(self) -> list[int]:
        return [e.group_id for e in self.group_table]


@dataclass
class Container:
    header: ContainerHeader
    block_map: np.ndarray  # flat uint16, one id per block, row-major
    segments: list[bytes]

    def __post_init__(self):
        self.block_map = np.ascontiguousarray(self.block_map, dtype=np.uint16).ravel()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Container):
            return NotImplemented
        return serialize(self) == serialize(other)


def _validate(container: Container) -> None:
    h = container.header
    if not (1 <= h.width <= MAX_DIM and 1 <= h.height <= MAX_DIM):
        raise InvariantViolation(f"bad dimensions {h.width}x{h.height}")
    if h.version != VERSION:
        raise InvariantViolation(f"bad version {h.version}")
    if h.colorspace != COLORSPACE_YCBCR601 or h.block_size != BLOCK_SIZE:
        raise InvariantViolation("unsupported colorspace or block size")
    if not (0 <= h.profile_kind < N_PROFILE_KINDS):
        raise InvariantViolation(f"bad profile kind {h.profile_kind}")
    if not h.group_table:
        raise InvariantViolation("group table is empty")
    if len(h.group_table) > 0xFFFF:
        raise InvariantViolation("group table exceeds the u16 count field")
    ids = h.group_ids
    if any(b <= a for a, b in zip(ids, ids[1:])):
        raise InvariantViolation("group ids must be strictly increasing")
    if len(container.segments) != len(h.group_table):
        raise InvariantViolation("segment count does not match group table")
    n_blocks = h.blocks_x * h.blocks_y
    if container.block_map.size != n_blocks:
        raise InvariantViolation(
            f"block map has {container.block_map.size} entries, expected {n_blocks}"
        )
    counts = np.bincount(container.block_map, minlength=65536)
    for entry, segment in zip(h.group_table, container.segments):
        if not (0 <= entry.group_id <= 0xFFFF):
            raise InvariantViolation(f"group id {entry.group_id} out of range")
        if len(entry.label.encode("utf-8")) > 255:
            raise InvariantViolation("label longer than 255 bytes")
        if len(segment) != entry.payload_len:
            raise InvariantViolation(
                f"group {entry.group_id}: segment length {len(segment)} != "
                f"payload_len {entry.payload_len}"
            )
        if entry.block_count != int(counts[entry.group_id]):
            raise InvariantViolation(
                f"group {entry.group_id}: block_count {entry.block_count} does not "
                f"match block map"
            )
        if (entry.block_count > 0) != (entry.payload_len > 0):
            raise InvariantViolation(
                f"group {entry.group_id}: empty/nonempty payload mismatch"
            )


def serialize(container: Container) -> bytes:
    """Serialize a validated container to its canonical byte form."""
    _validate(container)
    h = container.header
    out = bytearray()
    out += MAGIC
    out += struct.pack("<BIIBBBH", h.version, h.width, h.height, h.colorspace,
                       h.block_size, h.profile_kind, len(h.group_table))
    for entry in h.group_table:
        label = entry.label.encode("utf-8")
        out += struct.pack("<HB", entry.group_id, len(label))
        out += label
        out += struct.pack("<II", entry.block_count, entry.payload_len)
    out += container.block_map.astype("<u2").tobytes()
    for segment in container.segments:
        out += segment
    return bytes(out)


class _Cursor:
    """Bounds-checked reader; every overread raises Truncated."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise Truncated(f"unexpected end of data while reading {what}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def parse(data: bytes) -> Container:
    """Parse and fully validate a serialized container.

    Never reads past the end of ``data``; all failures are typed errors.
    """
    cur = _Cursor(data)
    if cur.take(4, "magic") != MAGIC:
        raise BadMagic("not an SSBX stream")
    (version,) = cur.unpack("<B", "version")
    if version != VERSION:
        raise UnsupportedVersion(f"version {version} not supported")
    width, height, colorspace, block_size, profile_kind, group_count = cur.unpack(
        "<IIBBBH", "header fields"
    )
    if not (1 <= width <= MAX_DIM and 1 <= height <= MAX_DIM):
        raise InconsistentHeader(f"bad dimensions {width}x{height}")
    if colorspace != COLORSPACE_YCBCR601:
        raise InconsistentHeader(f"unknown colorspace {colorspace}")
    if block_size != BLOCK_SIZE:
        raise InconsistentHeader(f"unsupported block size {block_size}")
    if not (0 <= profile_kind < N_PROFILE_KINDS):
        raise InconsistentHeader(f"unknown profile kind {profile_kind}")
    if group_count < 1:
        raise InconsistentHeader("group table is empty")

    table: list[GroupEntry] = []
    for _ in range(group_count):
        group_id, label_len = cur.unpack("<HB", "group entry")
        raw_label = cur.take(label_len, "group label")
        try:
            label = raw_label.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InconsistentHeader(f"group {group_id}: label is not UTF-8") from exc
        block_count, payload_len = cur.unpack("<II", "group entry")
        table.append(GroupEntry(group_id, label, block_count, payload_len))

    ids = [e.group_id for e in table]
    if any(b <= a for a, b in zip(ids, ids[1:])):
        raise InconsistentHeader("group ids not strictly increasing")

    header = ContainerHeader(width=width, height=height, profile_kind=profile_kind,
                             group_table=table)
    n_blocks = header.blocks_x * header.blocks_y
    raw_map = cur.take(2 * n_blocks, "block map")
    block_map = np.frombuffer(raw_map, dtype="<u2").astype(np.uint16)

    counts = np.bincount(block_map, minlength=65536)
    for entry in table:
        if entry.block_count != int(counts[entry.group_id]):
            raise InconsistentHeader(
                f"group {entry.group_id}: block_count {entry.block_count} does not "
                f"match block map ({int(counts[entry.group_id])})"
            )
        if (entry.block_count > 0) != (entry.payload_len > 0):
            raise InconsistentHeader(
                f"group {entry.group_id}: empty/nonempty payload mismatch"
            )

    segments = [bytes(cur.take(e.payload_len, f"segment {e.group_id}")) for e in table]
    if cur.pos != len(data):
        raise InconsistentHeader(f"{len(data) - cur.pos} trailing bytes after segments")
    return Container(header=header, block_map=block_map, segments=segments)


def extract(container: Container, groups) -> Container:
    """Keep only the requested groups' segments; never re-encodes payload bytes."""
    groups = set(groups)
    if not groups:
        raise EmptySelection("no groups requested")
    have = set(container.header.group_ids)
    missing = groups - have
    if missing:
        raise UnknownGroup(f"groups not in container: {sorted(missing)}")
    kept = [
        (entry, segment)
        for entry, segment in zip(container.header.group_table, container.segments)
        if entry.group_id in groups
    ]
    header = ContainerHeader(
        width=container.header.width,
        height=container.header.height,
        profile_kind=container.header.profile_kind,
        group_table=[GroupEntry(e.group_id, e.label, e.block_count, e.payload_len)
                     for e, _ in kept],
    )
    return Container(
        header=header,
        block_map=container.block_map.copy(),
        segments=[seg for _, seg in kept],
    )
