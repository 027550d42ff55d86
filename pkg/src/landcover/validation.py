"""Input validation helpers shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ConfigError, FormatError
from .raster import Raster


def check_pixels(X, n_bands: int | None = None) -> np.ndarray:
    """Validate a ``(n_pixels, n_bands)`` matrix of finite samples as float64."""
    try:
        X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    if n_bands is not None and X.shape[1] != n_bands:
        raise FormatError(f"expected {n_bands} bands per pixel, got {X.shape[1]}")
    return X


def check_raster(X) -> Raster:
    """Coerce ``X`` to a :class:`Raster`; 3-D arrays are read as (bands, height, width)."""
    if isinstance(X, Raster):
        return X
    X = np.asarray(X)
    if X.ndim != 3:
        raise FormatError(
            f"image input must be a Raster or a (bands, height, width) array, got shape {X.shape}")
    if X.dtype not in (np.uint8, np.uint16, np.float64):
        X = X.astype(np.float64)
    return Raster(X)


def check_count(name: str, value, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
