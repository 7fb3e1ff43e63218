import numpy as np
import pytest

from compx.codec import GroupMask, QualityMap
from compx.imaging import ImageBuffer


def random_image(rng, width, height, channels=3):
    return ImageBuffer.from_array(
        rng.integers(0, 256, size=(height, width, channels)).astype(np.uint8)
    )


def random_mask(rng, width, height, max_groups=4):
    n = int(rng.integers(1, max_groups + 1))
    ids = rng.integers(0, n, size=(height, width))
    return GroupMask.from_ids(ids)


def random_qmap(rng, width, height):
    return QualityMap(width, height, rng.random((height, width)).astype(np.float32))


@pytest.fixture
def rng(request):
    return np.random.default_rng(0xC0FFEE)
