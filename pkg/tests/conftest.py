from pathlib import Path
from typing import Callable, List, Optional

import numpy as np
import pytest
from hypothesis import settings

from springverb import AudioClip, default_dtype, write_wav
from signals import pluck, wet_of

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run long acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def float64():
    with default_dtype("float64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_corpus(tmp_path: Path) -> Callable[..., Path]:
    """ Write ``count`` dry/wet WAV pairs under ``tmp_path`` and return its root. """

    def _make(count: int = 5, rate: int = 16000, seconds: float = 0.25,
              lengths: Optional[List[float]] = None, name: str = "corpus") -> Path:
        root = tmp_path / name
        (root / "dry").mkdir(parents=True)
        (root / "wet").mkdir(parents=True)
        for i in range(count):
            length = lengths[i] if lengths else seconds
            dry = pluck(rate, length, f0=110.0 * (1 + i % 4), seed=i)
            write_wav(AudioClip(dry, rate), root / "dry" / f"note{i:03d}.wav", "float32")
            write_wav(AudioClip(wet_of(dry, rate, seed=i), rate),
                      root / "wet" / f"note{i:03d}.wav", "float32")
        return root

    return _make
