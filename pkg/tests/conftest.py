import pytest

from wmbench.imaging import Image, rng
from wmbench.synth import synth_image, write_corpus


@pytest.fixture
def random_image():
    def make(seed: int, side: int = 32, channels: int = 3) -> Image:
        return Image(rng(seed).uniform(0.0, 1.0, (channels, side, side)))

    return make


@pytest.fixture
def natural_image():
    def make(seed: int, side: int = 256, channels: int = 3) -> Image:
        return synth_image(seed, side=side, channels=channels)

    return make


@pytest.fixture
def corpus_dir(tmp_path):
    def make(count: int, seed: int = 0, side: int = 256):
        d = tmp_path / f"corpus_{seed}_{count}"
        write_corpus(d, count, seed, side=side)
        return d

    return make
