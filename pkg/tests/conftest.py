import numpy as np
import pytest

from vidsal.config import Config
from vidsal.core import Frame
from vidsal.synth import generate_clip


@pytest.fixture(scope="session")
def clip():
    """Small shared synthetic clip (single moving square)."""
    return generate_clip(num_frames=10, width=64, height=64, seed=7)


@pytest.fixture(scope="session")
def clip_two_objects():
    """Clip with a second square that appears and disappears mid-clip."""
    return generate_clip(num_frames=24, width=64, height=64, seed=11,
                         second_object=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_cfg():
    return Config(scales=(40, 80), block_length=8)


def make_frame(pixels, index=0):
    pixels = np.asarray(pixels, dtype=np.uint8)
    return Frame(width=pixels.shape[1], height=pixels.shape[0],
                 pixels=pixels, index=index)
