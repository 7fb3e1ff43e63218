"""Mask acquisition for RoI coding: file masks, a deterministic heuristic,
and an optional remote segmentation provider; plus quality-map synthesis.

The heuristic finds a generic foreground (it ignores target phrases); only
the remote provider honors text targeting like "screen".
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .codec import GroupMask, QualityMap
from .errors import DimensionMismatch, HttpError, RangeViolation, UnsupportedFormat
from .imaging import ImageBuffer, encode_png_bytes, load_image, rgb_to_ycbcr

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


@dataclass
class MaskSource:
    kind: str  # file | heuristic | remote
    locator: str | None = None

    def __post_init__(self):
        if self.kind not in ("file", "heuristic", "remote"):
            raise ValueError(f"unknown mask source kind {self.kind!r}")
        if self.kind in ("file", "remote") and not self.locator:
            raise ValueError(f"{self.kind} mask source needs a locator")


def mask_from_file(path, dims: tuple[int, int],
                   labels: dict[int, str] | None = None) -> GroupMask:
    """Read a grayscale mask image; distinct nonzero values become groups.

    Values are relabeled densely in ascending source-value order, 0 staying
    the background group.
    """
    img = load_image(path)
    if img.channels != 1:
        flat = img.data
        if not (np.array_equal(flat[:, :, 0], flat[:, :, 1])
                and np.array_equal(flat[:, :, 0], flat[:, :, 2])):
            raise UnsupportedFormat(f"{path}: mask must be grayscale")
        values = flat[:, :, 0]
    else:
        values = img.data[:, :, 0]
    if (img.width, img.height) != dims:
        raise DimensionMismatch(
            f"mask is {img.width}x{img.height}, expected {dims[0]}x{dims[1]}"
        )
    return GroupMask.from_ids(values, labels)


def _otsu_threshold(values: np.ndarray) -> float:
    """Otsu's threshold over a 256-bin histogram of the value range."""
    vmax = float(values.max())
    if vmax <= 0:
        return 0.0
    hist, edges = np.histogram(values, bins=256, range=(0.0, vmax))
    total = values.size
    weights = hist / total
    means = (edges[:-1] + edges[1:]) / 2.0
    w0 = np.cumsum(weights)
    w1 = 1.0 - w0
    mu0 = np.cumsum(weights * means)
    mu_total = mu0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_total * w0 - mu0) ** 2 / (w0 * w1)
    between[~np.isfinite(between)] = -1.0
    return float(edges[int(np.argmax(between)) + 1])


def _centered_box(width: int, height: int) -> np.ndarray:
    # fallback region: centered box covering ~50% of the image area
    scale = np.sqrt(0.5)
    bw = max(1, int(round(width * scale)))
    bh = max(1, int(round(height * scale)))
    x0 = (width - bw) // 2
    y0 = (height - bh) // 2
    ids = np.zeros((height, width), dtype=np.uint16)
    ids[y0 : y0 + bh, x0 : x0 + bw] = 1
    return ids


def heuristic_foreground(image: ImageBuffer) -> GroupMask:
    """Deterministic foreground finder: Sobel -> Otsu -> largest 4-connected
    component -> filled bounding region. Falls back to a centered 50%-area box
    when the component covers <2% or >98% of the pixels.
    """
    if image.channels == 3:
        luma = rgb_to_ycbcr(image).planes[0].astype(np.float64)
    else:
        luma = image.data[:, :, 0].astype(np.float64)
    gx = ndimage.sobel(luma, axis=1)
    gy = ndimage.sobel(luma, axis=0)
    magnitude = np.hypot(gx, gy)

    ids = None
    threshold = _otsu_threshold(magnitude)
    binary = magnitude > threshold
    if binary.any():
        labeled, n = ndimage.label(binary, structure=_FOUR_CONNECTED)
        sizes = np.bincount(labeled.ravel())
        sizes[0] = 0
        component = labeled == int(np.argmax(sizes))
        share = component.sum() / component.size
        if 0.02 <= share <= 0.98:
            ys, xs = np.nonzero(component)
            ids = np.zeros((image.height, image.width), dtype=np.uint16)
            ids[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1] = 1
    if ids is None or not ids.any():
        ids = _centered_box(image.width, image.height)
    return GroupMask(width=image.width, height=image.height, ids=ids,
                     labels={0: "background", 1: "foreground"})


def quality_map_from_mask(mask: GroupMask, q_roi: float, q_bg: float) -> QualityMap:
    """Two-valued quality map: nonzero groups get q_roi, background q_bg."""
    if not (0.0 <= q_bg <= q_roi <= 1.0):
        raise RangeViolation(f"need 0 <= q_bg <= q_roi <= 1, got ({q_roi}, {q_bg})")
    values = np.where(mask.ids != 0, np.float32(q_roi), np.float32(q_bg))
    return QualityMap(width=mask.width, height=mask.height, values=values)


class RemoteMaskProvider:
    """Client for an external segmentation service.

    Contract: POST {base_url}/segment, multipart fields ``image`` (PNG bytes)
    and ``phrase`` (target text); 200 response body is a grayscale PNG mask.
    """

    def __init__(self, base_url: str, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def segment(self, image: ImageBuffer, phrase: str) -> GroupMask:
        import httpx

        files = {"image": ("image.png", encode_png_bytes(image), "image/png")}
        data = {"phrase": phrase}
        try:
            response = httpx.post(f"{self.base_url}/segment", files=files,
                                  data=data, timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise HttpError(f"segmentation provider unreachable: {exc}") from exc
        if response.status_code != 200:
            raise HttpError(
                f"segmentation provider returned HTTP {response.status_code}"
            )
        from PIL import Image

        arr = np.asarray(Image.open(io.BytesIO(response.content)).convert("L"))
        if arr.shape != (image.height, image.width):
            raise DimensionMismatch("provider mask dimensions differ from image")
        ids = (arr != 0).astype(np.uint16)
        label = phrase.strip().lower() or "foreground"
        return GroupMask.from_ids(ids, labels={1: label})


def resolve_mask(source: MaskSource, image: ImageBuffer,
                 phrase: str | None = None) -> GroupMask:
    if source.kind == "file":
        return mask_from_file(source.locator, (image.width, image.height))
    if source.kind == "heuristic":
        return heuristic_foreground(image)
    provider = RemoteMaskProvider(source.locator)
    return provider.segment(image, phrase or "foreground")
