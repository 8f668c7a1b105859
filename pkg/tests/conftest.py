import numpy as np
import pytest

from stegkit import bmp, wav


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_cover(rng, width, height):
    return bmp.make_bmp(rng.integers(0, 256, (height, width, 3), dtype=np.uint8))


def random_audio(rng, n, channels=1):
    return wav.make_wav(rng.integers(-32768, 32768, n * channels, dtype=np.int16),
                        8000, channels)
