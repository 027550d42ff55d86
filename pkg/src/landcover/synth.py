"""Blockwise synthetic multispectral scenes with exact ground truth.

The image is cut into a ``grid x grid`` mosaic of blocks. With the default
``"runs"`` layout, block number ``b`` (row-major) belongs to class
``b * n_classes // grid**2``, so classes occupy contiguous runs and the
image rows differ in mean brightness. The ``"cyclic"`` layout uses
``b % n_classes`` instead, which mixes classes within every row. Every
pixel of a block is drawn band by band from a normal distribution around
its class mean. One signature rectangle per class sits in the middle of
the first block of that class.
"""
from __future__ import annotations

import numpy as np

from .ann import SignatureClass, SignatureSet
from .exceptions import ConfigError
from .raster import LabelMap, Raster, default_legend
from .validation import check_count


LAYOUTS = ("runs", "cyclic")


def default_means(n_classes: int, bands: int) -> np.ndarray:
    """Evenly spaced class intensities in 20..225, nudged upward band by band."""
    base = np.linspace(20.0, 225.0, n_classes) if n_classes > 1 else np.array([120.0])
    offsets = 5.0 * np.arange(bands)
    return np.minimum(np.rint(base[:, np.newaxis] + offsets), 250.0)


def block_edges(size: int, grid: int) -> np.ndarray:
    return np.linspace(0, size, grid + 1).astype(int)


def make_scene(n_classes: int = 5, bands: int = 3, width: int = 128, height: int = 128, *,
               means=None, spreads=4.0, grid: int = 4, seed: int = 0, dtype: str = "u8",
               names=None, layout: str = "runs"):
    """Return ``(raster, truth, signatures)`` for a seeded synthetic scene."""
    n_classes = check_count("classes", n_classes)
    bands = check_count("bands", bands)
    width, height = check_count("width", width), check_count("height", height)
    grid = check_count("grid", grid)
    if grid * grid < n_classes:
        raise ConfigError(f"a {grid}x{grid} grid cannot hold {n_classes} classes")
    if grid > min(width, height):
        raise ConfigError(f"grid {grid} is finer than the {width}x{height} image")
    if layout not in LAYOUTS:
        raise ConfigError(f"layout must be one of {LAYOUTS}, got {layout!r}")
    if dtype not in ("u8", "u16", "f64"):
        raise ConfigError(f"unsupported dtype {dtype!r}")

    means = default_means(n_classes, bands) if means is None else np.asarray(means, dtype=np.float64)
    if means.shape != (n_classes, bands):
        raise ConfigError(f"means must be {n_classes}x{bands}, got {means.shape}")
    # scalar, one per class, or one per class and band
    spreads = np.asarray(spreads, dtype=np.float64)
    if spreads.ndim == 1:
        spreads = spreads[:, np.newaxis]
    try:
        spreads = np.broadcast_to(spreads, (n_classes, bands))
    except ValueError:
        raise ConfigError(f"spreads of shape {spreads.shape} do not fit {n_classes} classes") from None
    if (spreads < 0).any() or not np.isfinite(spreads).all() or not np.isfinite(means).all():
        raise ConfigError("means must be finite and spreads finite and >= 0")
    if dtype != "f64":
        means = np.rint(means)

    ys, xs = block_edges(height, grid), block_edges(width, grid)
    labels = np.empty((height, width), dtype=np.int64)
    first_block = {}
    for bi in range(grid):
        for bj in range(grid):
            b = bi * grid + bj
            j = b * n_classes // (grid * grid) if layout == "runs" else b % n_classes
            labels[ys[bi]:ys[bi + 1], xs[bj]:xs[bj + 1]] = j
            first_block.setdefault(j, (xs[bj], ys[bi], xs[bj + 1] - xs[bj], ys[bi + 1] - ys[bi]))

    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((bands, height, width))
    data = means[labels].transpose(2, 0, 1) + spreads[labels].transpose(2, 0, 1) * noise
    if dtype == "u8":
        data = np.clip(np.rint(data), 0, 255).astype(np.uint8)
    elif dtype == "u16":
        data = np.clip(np.rint(data), 0, 65535).astype(np.uint16)

    legend = default_legend(n_classes)
    if names is not None:
        if len(names) != n_classes:
            raise ConfigError(f"{len(names)} names for {n_classes} classes")
        legend = tuple((str(nm), c) for nm, (_, c) in zip(names, legend))
    classes = []
    for j, (name, color) in enumerate(legend):
        bx, by, bw, bh = first_block[j]
        rw, rh = max(1, bw // 4), max(1, bh // 4)
        region = (int(bx + (bw - rw) // 2), int(by + (bh - rh) // 2), int(rw), int(rh))
        classes.append(SignatureClass(name, color, (region,)))
    return Raster(data), LabelMap(labels, legend), SignatureSet(tuple(classes))
