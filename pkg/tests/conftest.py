import numpy as np
import pytest


@pytest.fixture
def bump_dataset():
    """Factory for quickly separable fake map tensors (no audio pipeline).

    Class 0 maps peak in the low-azimuth half of the grid, class 1 in the
    high half; shapes default to a small grid so training runs in seconds.
    """

    def make(n: int, rng: np.random.Generator, shape=(2, 20, 12), noise: float = 0.02):
        k, a, e = shape
        az_axis = np.arange(a)[:, None]
        el_axis = np.arange(e)[None, :]
        maps = np.empty((n, k, a, e), dtype=np.float64)
        labels = np.empty(n, dtype=np.int64)
        for i in range(n):
            label = i % 2
            center_a = rng.uniform(2, a / 2 - 2) if label == 0 else rng.uniform(a / 2 + 2, a - 2)
            center_e = rng.uniform(2, e - 2)
            bump = np.exp(-((az_axis - center_a) ** 2 + (el_axis - center_e) ** 2) / 8.0)
            for band in range(k):
                maps[i, band] = bump + noise * rng.standard_normal((a, e))
            labels[i] = label
        return maps, labels

    return make
