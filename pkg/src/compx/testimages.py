"""Deterministic synthetic test images.

The suite ships eight 128x128 photos-in-spirit (gradients, soft shapes, mild
texture) plus one 512x512 scene used by the rate-refinement tests. Content is
generated from fixed seeds so every checkout carries identical pixels without
binary blobs in the repository.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .imaging import ImageBuffer, save_image

N_TEST_IMAGES = 8


def _soft_disk(h, w, cy, cx, radius, sharpness=6.0):
    ys, xs = np.mgrid[0:h, 0:w]
    dist = np.hypot(ys - cy, xs - cx)
    return 1.0 / (1.0 + np.exp((dist - radius) / sharpness))


def _base_gradient(h, w, seed):
    rng = np.random.default_rng(seed)
    angle = rng.uniform(0, 2 * np.pi)
    ys, xs = np.mgrid[0:h, 0:w]
    ramp = (np.cos(angle) * xs / w + np.sin(angle) * ys / h)
    ramp = (ramp - ramp.min()) / max(float(np.ptp(ramp)), 1e-9)
    lo, hi = sorted(rng.uniform(30, 225, size=2))
    return lo + ramp * (hi - lo)


def synthetic_image(seed: int, width: int = 128, height: int = 128,
                    texture: float = 1.0) -> ImageBuffer:
    """One deterministic synthetic photo; different seeds differ in content.

    ``texture`` scales the high-frequency content (sinusoid bands and grain).
    """
    rng = np.random.default_rng(1000 + seed)
    channels = []
    for c in range(3):
        plane = _base_gradient(height, width, seed * 17 + c)
        for _ in range(int(rng.integers(2, 5))):
            cy = rng.uniform(0, height)
            cx = rng.uniform(0, width)
            radius = rng.uniform(min(width, height) * 0.1, min(width, height) * 0.35)
            amplitude = rng.uniform(-70, 70)
            softness = 6.0 + 6.0 / max(texture, 0.05)
            plane = plane + amplitude * _soft_disk(height, width, cy, cx, radius,
                                                   sharpness=softness)
        fy = rng.uniform(1.5, 4.0)
        fx = rng.uniform(1.5, 4.0)
        ys, xs = np.mgrid[0:height, 0:width]
        plane = plane + 6.0 * texture * np.sin(2 * np.pi * (fy * ys / height + fx * xs / width))
        plane = plane + rng.normal(0, 3.0 * texture, size=plane.shape)
        channels.append(plane)
    data = np.clip(np.stack(channels, axis=-1), 0, 255).astype(np.uint8)
    return ImageBuffer.from_array(data)


def bundled_test_images() -> list[ImageBuffer]:
    """The eight standard test images used across the metric/codec suites."""
    return [synthetic_image(i) for i in range(N_TEST_IMAGES)]


def convergence_image() -> ImageBuffer:
    """The 512x512 scene used by rate-refinement tests; mostly smooth content
    keeps the byte-vs-quality slope gentle enough for fine rate targeting."""
    return synthetic_image(seed=99, width=512, height=512, texture=0.0)


def write_test_images(directory) -> list[Path]:
    """Materialize the bundled images as PNG files (CLI and demo input)."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(bundled_test_images()):
        path = out / f"test_{i:02d}.png"
        save_image(img, path)
        paths.append(path)
    big = out / "scene_512.png"
    save_image(convergence_image(), big)
    paths.append(big)
    return paths
