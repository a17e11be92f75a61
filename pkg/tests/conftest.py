import numpy as np
import pytest

from plateforge.core import PlateImage, Rng
from plateforge.harness import DeskProfile
from plateforge.plate import render_plate


@pytest.fixture(scope="session")
def desk():
    """Engine-free oracle pair with twin consonants (see DeskProfile)."""
    return DeskProfile()


@pytest.fixture(scope="session")
def desk_plain():
    """Desk profile without twin collisions: every candidate realizable."""
    return DeskProfile({"twin_pairs": False})


@pytest.fixture(scope="session")
def desk_plate(desk):
    """One clean plate the desk oracle reads correctly: (label, image)."""
    label = desk.plate_label(Rng(11).derive("plate-label", 0, 0))
    return label, render_plate(label, desk.atlas, desk.layout)


def random_image(gen, width=4, height=4, lo=0.0, hi=1.0):
    return PlateImage(gen.uniform(lo, hi, size=(height, width)))


@pytest.fixture
def gen():
    return np.random.default_rng(20240811)
