import numpy as np
import pytest

from landcover.raster import LabelMap, Raster, default_legend


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_raster(rng, height=None, width=None, bands=None, dtype=None):
    height = height or int(rng.integers(1, 9))
    width = width or int(rng.integers(1, 9))
    bands = bands or int(rng.integers(1, 5))
    dtype = dtype or rng.choice(["u8", "u16", "f64"])
    shape = (bands, height, width)
    if dtype == "u8":
        data = rng.integers(0, 256, shape, dtype=np.uint8)
    elif dtype == "u16":
        data = rng.integers(0, 65536, shape, dtype=np.uint16)
    else:
        data = rng.normal(0, 1e3, shape) * 10.0 ** rng.integers(-5, 5)
    return Raster(data)


def random_label_map(rng, height=None, width=None, n=None):
    height = height or int(rng.integers(1, 9))
    width = width or int(rng.integers(1, 9))
    n = n or int(rng.integers(1, 20))
    labels = rng.integers(0, n + 1, (height, width))
    return LabelMap(labels, default_legend(n))


# Reference 7-class land-cover confusion table: counts plus quoted
# (omission, commission, map accuracy) percentages per class.
REFERENCE_NAMES = ("Background", "Dense Forest", "Thick Forest", "Thin Vegetation",
                "Barren Land", "Glacier", "Cloud")
REFERENCE_COUNTS = (
    (225, 0, 0, 0, 0, 0, 0),
    (0, 220, 0, 0, 0, 5, 0),
    (0, 6, 87, 74, 3, 0, 0),
    (0, 0, 19, 206, 0, 0, 0),
    (0, 0, 3, 3, 422, 3, 0),
    (0, 7, 4, 0, 0, 439, 0),
    (0, 0, 0, 0, 0, 0, 225),
)
REFERENCE_PRINTED = (
    (0.0, 0.0, 100.0),
    (2.22, 5.77, 92.44),
    (48.82, 15.29, 44.39),
    (8.44, 34.22, 68.21),
    (2.08, 0.69, 97.23),
    (2.44, 1.77, 95.85),
    (0.0, 0.0, 100.0),
)


def reference_label_maps():
    """Truth/prediction maps whose label pairs reproduce the table counts."""
    from landcover.eval import labels_from_counts

    truth, pred = labels_from_counts(REFERENCE_COUNTS)
    legend = tuple(zip(REFERENCE_NAMES, default_legend(7)))
    legend = tuple((name, color) for name, (_, color) in legend)
    shape = (1, len(truth))
    return LabelMap(truth.reshape(shape), legend), LabelMap(pred.reshape(shape), legend)
