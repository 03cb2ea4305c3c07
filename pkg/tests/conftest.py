import numpy as np
import pytest
from scipy import ndimage


def make_natural_image(seed, height=120, width=160):
    """Deterministic piecewise-smooth color field standing in for a photo."""
    rng = np.random.default_rng(seed)
    img = np.zeros((height, width, 3))
    for c in range(3):
        base = ndimage.gaussian_filter(rng.random((height, width)), 6.0, mode="nearest")
        detail = ndimage.gaussian_filter(rng.random((height, width)), 1.5, mode="nearest")
        img[:, :, c] = base + 0.3 * detail
    ys, xs = np.indices((height, width))
    img += 0.15 * (xs / width + ys / height)[:, :, None] * rng.random(3)
    lo, hi = img.min(), img.max()
    return (0.05 + 0.9 * (img - lo) / (hi - lo)).astype(np.float64)


def make_smooth_depth(seed, height=120, width=160, near=1.0, far=8.0):
    """Strictly positive smooth depth with a few blob-shaped foregrounds."""
    rng = np.random.default_rng(seed)
    field = ndimage.gaussian_filter(rng.random((height, width)), 9.0, mode="nearest")
    field = (field - field.min()) / (field.max() - field.min() + 1e-12)
    return near + (far - near) * field


def make_smooth_disparity(seed, height=120, width=160, d_max=25.0):
    rng = np.random.default_rng(seed)
    field = ndimage.gaussian_filter(rng.random((height, width)), 10.0, mode="nearest")
    field = (field - field.min()) / (field.max() - field.min() + 1e-12)
    return 2.0 + (d_max - 2.0) * field


@pytest.fixture(scope="session")
def natural_images():
    return [make_natural_image(seed) for seed in range(6)]


@pytest.fixture(scope="session")
def smooth_depths():
    return [make_smooth_depth(100 + seed) for seed in range(6)]


@pytest.fixture(scope="session")
def smooth_disparities():
    return [make_smooth_disparity(200 + seed) for seed in range(6)]
