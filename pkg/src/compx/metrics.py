"""Quantitative evaluation: PSNR, region-weighted PSNR, bpp, and BD deltas.

Weighted PSNR uses a region-weighted mean squared error

    wMSE = (alpha * S_roi + beta * S_bg) / (alpha * n_roi + beta * n_bg)

where S_region is the sum of squared sample errors inside the region and
n_region the number of samples (pixels times channels) it contains. Reading
the numerator as region error sums makes the expression a weighted per-sample
mean; with alpha == beta it reduces exactly to plain MSE. An empty region
simply contributes zero to both sums.

BD deltas use a monotone piecewise-cubic (PCHIP) interpolant of metric versus
log10(bpp), averaged over the curves' overlapping range. Identical images are
reported as +inf dB, serialized as the string "inf" in reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import (
    DegenerateCurve,
    DimensionMismatch,
    NoOverlap,
    NonBinaryMask,
    ZeroDims,
)
from .imaging import ImageBuffer


@dataclass
class RoiWeights:
    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("weights must be nonnegative")
        if abs(self.alpha + self.beta - 1.0) > 1e-6:
            raise ValueError(f"weights must sum to 1, got {self.alpha + self.beta}")


@dataclass
class RdPoint:
    bpp: float
    metric: float

    def __post_init__(self):
        if self.bpp <= 0:
            raise ValueError("bpp must be positive")


@dataclass
class RdCurve:
    points: list[RdPoint]

    def __post_init__(self):
        if len(self.points) < 4:
            raise DegenerateCurve("an RD curve needs at least 4 points")
        bpps = [p.bpp for p in self.points]
        if any(b <= a for a, b in zip(bpps, bpps[1:])):
            raise DegenerateCurve("bpp values must be strictly increasing")
        metrics = [p.metric for p in self.points]
        if any(b < a - 0.1 for a, b in zip(metrics, metrics[1:])):
            raise DegenerateCurve("metric must be nondecreasing in bpp (0.1 dB slack)")

    @property
    def log_rates(self) -> np.ndarray:
        return np.log10([p.bpp for p in self.points])

    @property
    def metrics(self) -> np.ndarray:
        return np.array([p.metric for p in self.points], dtype=np.float64)


def _check_same_shape(a: ImageBuffer, b: ImageBuffer) -> None:
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels):
        raise DimensionMismatch("images have different dimensions or channels")


def psnr(a: ImageBuffer, b: ImageBuffer, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    _check_same_shape(a, b)
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def weighted_psnr(a: ImageBuffer, b: ImageBuffer, roi: np.ndarray,
                  weights: RoiWeights, peak: float = 255.0) -> float:
    """PSNR from the region-weighted MSE; ``roi`` is a {0,1} per-pixel mask."""
    _check_same_shape(a, b)
    roi = np.asarray(roi)
    if roi.shape != (a.height, a.width):
        raise DimensionMismatch("roi mask dimensions differ from images")
    if not np.isin(roi, (0, 1)).all():
        raise NonBinaryMask("roi mask must contain only 0 and 1")
    in_roi = roi.astype(bool)
    sq = (a.data.astype(np.float64) - b.data.astype(np.float64)) ** 2
    s_roi = float(sq[in_roi].sum())
    s_bg = float(sq[~in_roi].sum())
    n_roi = int(in_roi.sum()) * a.channels
    n_bg = int((~in_roi).sum()) * a.channels
    denom = weights.alpha * n_roi + weights.beta * n_bg
    wmse = (weights.alpha * s_roi + weights.beta * s_bg) / denom if denom > 0 else 0.0
    if wmse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / wmse)


def bpp(total_bits: int, width: int, height: int) -> float:
    """Bits per pixel: total bitstream bits over pixel count."""
    if width <= 0 or height <= 0:
        raise ZeroDims("image dimensions must be positive")
    if total_bits <= 0:
        raise ZeroDims("bit count must be positive")
    return total_bits / (width * height)


def container_bpp(stream: bytes, width: int, height: int) -> float:
    return bpp(8 * len(stream), width, height)


def _overlap(ref: np.ndarray, test: np.ndarray) -> tuple[float, float]:
    lo = max(ref.min(), test.min())
    hi = min(ref.max(), test.max())
    if hi <= lo:
        raise NoOverlap("curves share no rate range")
    return float(lo), float(hi)


def bd_delta(reference: RdCurve, test: RdCurve, mode: str = "psnr") -> float:
    """Average gap between two RD curves over their overlapping range.

    mode="psnr": mean vertical gap (test - reference) in dB.
    mode="rate": mean horizontal gap, as percent rate change.
    """
    if mode == "psnr":
        ref_fit = PchipInterpolator(reference.log_rates, reference.metrics)
        test_fit = PchipInterpolator(test.log_rates, test.metrics)
        lo, hi = _overlap(reference.log_rates, test.log_rates)
        area = test_fit.integrate(lo, hi) - ref_fit.integrate(lo, hi)
        return float(area / (hi - lo))
    if mode == "rate":
        for curve in (reference, test):
            m = curve.metrics
            if any(b <= a for a, b in zip(m, m[1:])):
                raise DegenerateCurve(
                    "BD-rate needs strictly increasing metric values"
                )
        ref_fit = PchipInterpolator(reference.metrics, reference.log_rates)
        test_fit = PchipInterpolator(test.metrics, test.log_rates)
        lo, hi = _overlap(reference.metrics, test.metrics)
        avg_log = (test_fit.integrate(lo, hi) - ref_fit.integrate(lo, hi)) / (hi - lo)
        return float((10.0 ** avg_log - 1.0) * 100.0)
    raise ValueError(f"unknown BD mode {mode!r}")


def format_db(value: float) -> str:
    """Render a dB value for reports; infinity becomes the string 'inf'."""
    if math.isinf(value):
        return "inf"
    return f"{value:.4f}"
