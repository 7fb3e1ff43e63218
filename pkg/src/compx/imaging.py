"""Image buffers, color conversion, and PNG/PPM/PGM file I/O.

Pixel data is unsigned 8-bit, row-major, interleaved. Color math uses the
BT.601 full-range primaries with no chroma subsampling, so quality maps stay
aligned with the pixel grid.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ChannelMismatch, CorruptFile, IoError, NotFound, UnsupportedFormat

MAX_DIM = 16384

# BT.601 luma weights and full-range chroma scale factors.
_KR, _KG, _KB = 0.299, 0.587, 0.114
_CB_SCALE = 0.564
_CR_SCALE = 0.713


@dataclass
class ImageBuffer:
    """An 8-bit image: ``data`` has shape (height, width, channels)."""

    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        if self.width > MAX_DIM or self.height > MAX_DIM:
            raise ValueError(f"image dimensions must be <= {MAX_DIM}")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
        expected = (self.height, self.width, self.channels)
        if self.data.shape != expected:
            if self.data.size != self.height * self.width * self.channels:
                raise ValueError(f"data shape {self.data.shape} != {expected}")
            self.data = self.data.reshape(expected)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageBuffer":
        arr = np.asarray(arr, dtype=np.uint8)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        h, w, c = arr.shape
        return cls(width=w, height=h, channels=c, data=arr)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.channels == other.channels
            and np.array_equal(self.data, other.data)
        )


@dataclass
class PlanarF32:
    """Planar float32 Y/Cb/Cr working format: ``planes`` shape (3, h, w)."""

    width: int
    height: int
    planes: np.ndarray

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=np.float32)
        if self.planes.shape != (3, self.height, self.width):
            raise ValueError("planes must have shape (3, height, width)")


def _read_pnm(raw: bytes, path: str) -> ImageBuffer:
    magic = raw[:2]
    channels = 3 if magic == b"P6" else 1
    # header: magic, width, height, maxval -- separated by whitespace,
    # '#' comments allowed through the end of the line
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            nl = raw.find(b"\n", pos)
            if nl < 0:
                raise CorruptFile(f"{path}: unterminated comment in header")
            pos = nl + 1
            continue
        m = re.match(rb"\d+", raw[pos:])
        if not m:
            raise CorruptFile(f"{path}: malformed PNM header")
        fields.append(int(m.group()))
        pos += m.end()
    width, height, maxval = fields
    if maxval > 255:
        raise UnsupportedFormat(f"{path}: 16-bit PNM not supported")
    if maxval < 1:
        raise CorruptFile(f"{path}: bad maxval {maxval}")
    if not (1 <= width <= MAX_DIM and 1 <= height <= MAX_DIM):
        raise CorruptFile(f"{path}: bad dimensions {width}x{height}")
    pos += 1  # single whitespace byte before the payload
    need = width * height * channels
    payload = raw[pos : pos + need]
    if len(payload) < need:
        raise CorruptFile(f"{path}: truncated pixel data")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return ImageBuffer(width=width, height=height, channels=channels, data=data.copy())


def _read_png(raw: bytes, path: str) -> ImageBuffer:
    try:
        img = Image.open(io.BytesIO(raw))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    if img.mode in ("I", "I;16", "I;16B", "I;16L"):
        raise UnsupportedFormat(f"{path}: 16-bit PNG not supported")
    if img.mode == "L":
        arr = np.asarray(img, dtype=np.uint8)[:, :, None]
    elif img.mode in ("RGB", "RGBA", "P", "LA", "1"):
        arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    else:
        raise UnsupportedFormat(f"{path}: PNG mode {img.mode} not supported")
    h, w = arr.shape[:2]
    if not (1 <= w <= MAX_DIM and 1 <= h <= MAX_DIM):
        raise CorruptFile(f"{path}: bad dimensions {w}x{h}")
    return ImageBuffer.from_array(arr)


def load_image(path) -> ImageBuffer:
    """Decode a PNG, binary PPM (P6), or binary PGM (P5) file."""
    p = Path(path)
    if not p.is_file():
        raise NotFound(f"no such image file: {path}")
    raw = p.read_bytes()
    if raw[:8] == b"\x89PNG\r\n\x1a\n":
        return _read_png(raw, str(path))
    if raw[:2] in (b"P6", b"P5"):
        return _read_pnm(raw, str(path))
    if raw[:2] in (b"P1", b"P2", b"P3", b"P4"):
        raise UnsupportedFormat(f"{path}: only binary P5/P6 PNM variants supported")
    raise CorruptFile(f"{path}: unrecognized image magic")


def save_image(buffer: ImageBuffer, path, format: str | None = None) -> None:
    """Write ``buffer`` as PNG, PPM, or PGM (inferred from suffix if omitted)."""
    p = Path(path)
    fmt = (format or p.suffix.lstrip(".")).lower()
    if fmt not in ("png", "ppm", "pgm"):
        raise UnsupportedFormat(f"cannot write format {fmt!r}")
    if fmt == "ppm" and buffer.channels != 3:
        raise ChannelMismatch("PPM requires a 3-channel buffer")
    if fmt == "pgm" and buffer.channels != 1:
        raise ChannelMismatch("PGM requires a 1-channel buffer")
    try:
        if fmt == "png":
            mode = "RGB" if buffer.channels == 3 else "L"
            arr = buffer.data if buffer.channels == 3 else buffer.data[:, :, 0]
            Image.fromarray(arr, mode=mode).save(p, format="PNG")
        else:
            magic = b"P6" if fmt == "ppm" else b"P5"
            header = b"%s\n%d %d\n255\n" % (magic, buffer.width, buffer.height)
            p.write_bytes(header + buffer.data.tobytes())
    except OSError as exc:
        raise IoError(f"failed to write {path}: {exc}") from exc


def encode_png_bytes(buffer: ImageBuffer) -> bytes:
    """PNG-encode a buffer in memory (used by the HTTP service)."""
    mode = "RGB" if buffer.channels == 3 else "L"
    arr = buffer.data if buffer.channels == 3 else buffer.data[:, :, 0]
    out = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(out, format="PNG")
    return out.getvalue()


def ensure_rgb(buffer: ImageBuffer) -> ImageBuffer:
    """Return a 3-channel view of the buffer (grayscale replicated)."""
    if buffer.channels == 3:
        return buffer
    data = np.repeat(buffer.data, 3, axis=2)
    return ImageBuffer(width=buffer.width, height=buffer.height, channels=3, data=data)


def rgb_to_ycbcr(buffer: ImageBuffer) -> PlanarF32:
    """BT.601 full-range RGB -> YCbCr, planes clamped to [0, 255]."""
    if buffer.channels != 3:
        raise ChannelMismatch("rgb_to_ycbcr requires a 3-channel buffer")
    rgb = buffer.data.astype(np.float32)
    r, g, b = rgb[:, :, 0], rgb[:, :, 1], rgb[:, :, 2]
    y = _KR * r + _KG * g + _KB * b
    cb = 128.0 + (b - y) * _CB_SCALE
    cr = 128.0 + (r - y) * _CR_SCALE
    planes = np.clip(np.stack([y, cb, cr]), 0.0, 255.0).astype(np.float32)
    return PlanarF32(width=buffer.width, height=buffer.height, planes=planes)


def ycbcr_to_rgb(planar: PlanarF32) -> ImageBuffer:
    """Inverse of :func:`rgb_to_ycbcr`; clamps and rounds to 8 bits."""
    y = planar.planes[0].astype(np.float64)
    cb = planar.planes[1].astype(np.float64) - 128.0
    cr = planar.planes[2].astype(np.float64) - 128.0
    r = y + cr / _CR_SCALE
    b = y + cb / _CB_SCALE
    g = (y - _KR * r - _KB * b) / _KG
    rgb = np.stack([r, g, b], axis=-1)
    data = np.clip(np.round(rgb), 0, 255).astype(np.uint8)
    return ImageBuffer(width=planar.width, height=planar.height, channels=3, data=data)
