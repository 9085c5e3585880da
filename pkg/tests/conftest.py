import os

import numpy as np
import pytest

from pgsv.media import load_png
from pgsv.splats import SplatArray

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)


@pytest.fixture(scope="session")
def crop64():
    return load_png(fixture_path("crop64.png"))


@pytest.fixture(scope="session")
def crop128_paths():
    return [fixture_path(f"crop128_{c}.png") for c in "abc"]


@pytest.fixture(scope="session")
def video_dir():
    return fixture_path("video")


def random_scene(rng: np.random.Generator, n: int, *,
                 sigma_range=(0.5, 4.0)) -> SplatArray:
    """Well-conditioned random splats for renderer tests."""
    return SplatArray(
        pos=rng.uniform(0.05, 0.95, (n, 2)),
        chol=np.column_stack([rng.uniform(*sigma_range, n),
                              rng.uniform(-1.0, 1.0, n),
                              rng.uniform(*sigma_range, n)]),
        color=rng.normal(size=(n, 3)),
        weight=rng.normal(size=n),
    )
