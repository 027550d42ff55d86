import numpy as np
import pytest

from landcover.ann import extract_training_pairs
from landcover.eval import class_histogram
from landcover.exceptions import ConfigError
from landcover.synth import block_edges, make_scene


def test_zero_spread_exact_means():
    means = np.array([[10, 20], [100, 110], [200, 210]])
    r, truth, _ = make_scene(3, 2, 12, 9, means=means, spreads=0.0, grid=3)
    px = r.pixels()
    np.testing.assert_array_equal(px, means[truth.labels.reshape(-1)])


def test_seeded():
    a = make_scene(seed=3)
    b = make_scene(seed=3)
    assert a[0] == b[0] and a[1] == b[1] and a[2] == b[2]
    assert make_scene(seed=4)[0] != a[0]


@pytest.mark.parametrize("layout", ["runs", "cyclic"])
def test_histogram_matches_blocks(layout):
    _, truth, _ = make_scene(5, 1, 50, 37, grid=4, layout=layout)
    ys, xs = block_edges(37, 4), block_edges(50, 4)
    expected = [0] * 5
    for bi in range(4):
        for bj in range(4):
            b = bi * 4 + bj
            j = b * 5 // 16 if layout == "runs" else b % 5
            expected[j] += (ys[bi + 1] - ys[bi]) * (xs[bj + 1] - xs[bj])
    h = class_histogram(truth)
    assert [h[j] for j in range(5)] == expected and h[5] == 0


def test_signatures_inside_their_class():
    r, truth, sig = make_scene(7, 3, 64, 64, grid=3, seed=2)
    pairs = extract_training_pairs(r, sig)
    assert len(pairs) > 0
    for j, cls in enumerate(sig.classes):
        for x, y, w, h in cls.regions:
            assert (truth.labels[y:y + h, x:x + w] == j).all()


def test_per_class_spreads_and_dtypes():
    r, truth, _ = make_scene(2, 1, 20, 20, spreads=[0.0, 3.0], grid=2, dtype="f64")
    px = r.pixels()[:, 0]
    lab = truth.labels.reshape(-1)
    assert np.ptp(px[lab == 0]) == 0 and np.ptp(px[lab == 1]) > 0
    assert make_scene(2, 1, 8, 8, grid=2, dtype="u16")[0].dtype_name == "u16"


@pytest.mark.parametrize("kwargs", [
    dict(n_classes=10, grid=3), dict(grid=200), dict(layout="spiral"), dict(dtype="i8"),
    dict(means=np.zeros((2, 2))), dict(spreads=-1.0), dict(names=["a"]),
])
def test_invalid(kwargs):
    with pytest.raises(ConfigError):
        make_scene(**kwargs)
