import numpy as np
import pytest

from seqreg.geometry import Homography


def random_homography(rng, translation=50.0, warp=0.05, projective=1e-4) -> Homography:
    """Well-conditioned random homography for tests on [0, 100]^2 points."""
    while True:
        m = np.eye(3)
        m[:2, :2] += rng.uniform(-warp, warp, (2, 2))
        m[:2, 2] = rng.uniform(-translation, translation, 2)
        m[2, :2] = rng.uniform(-projective, projective, 2)
        if abs(np.linalg.det(m)) > 1e-3:
            return Homography(m)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
