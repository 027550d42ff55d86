"""Range-seeded k-means for multispectral rasters.

Initial class means come from the spread of the image's row means: the
interval ``[min, max]`` of row means is cut into ``k`` equal ranges and
each class starts at the midpoint of its range (replicated across bands).
From there the usual alternation runs: assign every pixel to its nearest
mean under Euclidean distance, recompute each class mean, repeat until the
means stop moving.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConfigError, DegenerateInputError, FormatError
from .raster import (LabelMap, Raster, apply_normalization, default_legend, median_filter,
                     normalize_bands, normalize_pixels)
from .validation import check_count, check_pixels, check_raster


@dataclass(frozen=True)
class KmeansConfig:
    k: int
    max_iterations: int = 100
    tolerance: float = 1e-6
    median_window: int = 0
    normalize: bool = True

    def __post_init__(self):
        check_count("k", self.k)
        check_count("max_iterations", self.max_iterations)
        if not (isinstance(self.tolerance, (int, float)) and math.isfinite(self.tolerance)
                and self.tolerance >= 0):
            raise ConfigError(f"tolerance must be a finite number >= 0, got {self.tolerance!r}")
        if self.median_window != 0:
            if self.median_window < 1 or self.median_window % 2 == 0:
                raise ConfigError(f"median_window must be 0 (off) or odd, got {self.median_window}")


@dataclass
class ClusterModel:
    k: int
    means: np.ndarray
    stddevs: np.ndarray
    range: float
    iterations_run: int
    objective_trace: list = field(default_factory=list)
    norm_params: Optional[list] = None
    median_window: int = 0

    @property
    def bands(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "range": self.range,
            "iterations_run": self.iterations_run,
            "means": self.means.tolist(),
            "stddevs": self.stddevs.tolist(),
            "objective_trace": list(self.objective_trace),
            "norm_params": None if self.norm_params is None else [list(p) for p in self.norm_params],
            "median_window": self.median_window,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterModel":
        try:
            means = np.array(d["means"], dtype=np.float64)
            stddevs = np.array(d["stddevs"], dtype=np.float64)
            norm = d.get("norm_params")
            model = cls(
                k=int(d["k"]), means=means, stddevs=stddevs, range=float(d["range"]),
                iterations_run=int(d["iterations_run"]),
                objective_trace=[float(x) for x in d["objective_trace"]],
                norm_params=None if norm is None else [(float(a), float(b)) for a, b in norm],
                median_window=int(d.get("median_window", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed cluster model: {exc}") from None
        if means.ndim != 2 or means.shape[0] != model.k or stddevs.shape != means.shape:
            raise FormatError("cluster model means/stddevs do not match k")
        return model


def save_cluster_model(model: ClusterModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n")


def load_cluster_model(path) -> ClusterModel:
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise FormatError(f"cluster model not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return ClusterModel.from_dict(d)


def compute_row_means(r: Raster) -> np.ndarray:
    """Mean band-averaged intensity of every image row."""
    intensity = r.data.astype(np.float64).mean(axis=0)
    return intensity.mean(axis=1)


def derive_initial_means(row_means: Sequence[float], k: int) -> tuple[float, np.ndarray]:
    """Cut ``[min, max]`` of the row means into ``k`` equal ranges.

    Returns the range width and the midpoint of each range.
    """
    k = check_count("k", k)
    row_means = np.asarray(row_means, dtype=np.float64)
    if row_means.size == 0:
        raise DegenerateInputError("no row means to seed from")
    lo, hi = float(row_means.min()), float(row_means.max())
    if lo == hi and k == 1:
        return 0.0, np.array([lo])
    if lo == hi:
        raise DegenerateInputError(
            "all row means are equal, so the seeding ranges have zero width; use k=1")
    width = (hi - lo) / k
    return width, lo + (np.arange(k) + 0.5) * width


def euclidean_distance(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise FormatError(f"vector lengths differ: {x.shape} vs {y.shape}")
    return float(np.sqrt(np.sum((x - y) ** 2)))


def class_stddev(members, mean) -> np.ndarray:
    """Per-band population standard deviation of ``members`` about ``mean``."""
    members = np.atleast_2d(np.asarray(members, dtype=np.float64))
    if members.shape[0] == 0 or members.size == 0:
        raise ConfigError("cannot take the standard deviation of an empty class")
    return np.sqrt(np.mean((members - np.asarray(mean, dtype=np.float64)) ** 2, axis=0))


def _nearest(pixels: np.ndarray, means: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-mean labels (lowest index on ties) and the squared distance to it."""
    sq = ((pixels[:, np.newaxis, :] - means[np.newaxis, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(np.sqrt(sq), axis=1)
    return labels, sq[np.arange(len(pixels)), labels]


def _update(pixels: np.ndarray, labels: np.ndarray, previous: np.ndarray) -> np.ndarray:
    means = previous.copy()
    for j in range(len(previous)):
        members = pixels[labels == j]
        if len(members):
            means[j] = members.mean(axis=0)
    return means


def assign_pixels(r: Raster, means) -> LabelMap:
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    if means.shape[1] != r.bands:
        raise FormatError(f"means have {means.shape[1]} bands, raster has {r.bands}")
    labels, _ = _nearest(r.pixels(), means)
    return LabelMap(labels.reshape(r.height, r.width), default_legend(len(means), "cluster"))


def update_means(r: Raster, lm: LabelMap, previous_means) -> np.ndarray:
    """Recompute class means; a class with no members keeps its previous mean."""
    previous = np.atleast_2d(np.asarray(previous_means, dtype=np.float64))
    if (lm.height, lm.width) != (r.height, r.width):
        raise FormatError("label map and raster sizes differ")
    return _update(r.pixels(), lm.labels.reshape(-1), previous)


def refine_means(pixels: np.ndarray, initial_means: np.ndarray, max_iterations: int = 100,
                 tolerance: float = 1e-6):
    """Alternate nearest-mean assignment and mean updates from ``initial_means``.

    Returns ``(means, labels, iterations_run, objective_trace)`` where
    ``labels`` is the nearest-mean assignment under the final means and
    ``objective_trace[t]`` is the sum of squared distances right after the
    assignment step of iteration ``t``.
    """
    means = np.array(initial_means, dtype=np.float64)
    trace = []
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        labels, sq = _nearest(pixels, means)
        trace.append(float(sq.sum()))
        new_means = _update(pixels, labels, means)
        shift = float(np.max(np.abs(new_means - means)))
        means = new_means
        if shift <= tolerance:
            break
    labels, _ = _nearest(pixels, means)
    return means, labels, iterations, trace


def preprocess(r: Raster, median_window: int = 0, normalize: bool = True):
    """Optional median filtering followed by optional per-band normalization.

    Returns the processed float64 raster and the normalization parameters
    (``None`` when normalization is off).
    """
    if median_window:
        r = median_filter(r, median_window)
    if normalize:
        return normalize_bands(r)
    return Raster(r.data.astype(np.float64)), None


def cluster(r: Raster, cfg: KmeansConfig) -> tuple[ClusterModel, LabelMap]:
    work, norm_params = preprocess(r, cfg.median_window, cfg.normalize)
    width, seeds = derive_initial_means(compute_row_means(work), cfg.k)
    initial = np.repeat(seeds[:, np.newaxis], work.bands, axis=1)
    pixels = work.pixels()
    means, labels, iterations, trace = refine_means(pixels, initial, cfg.max_iterations, cfg.tolerance)

    stddevs = np.zeros_like(means)
    for j in range(cfg.k):
        members = pixels[labels == j]
        if len(members):
            stddevs[j] = class_stddev(members, means[j])

    model = ClusterModel(k=cfg.k, means=means, stddevs=stddevs, range=width,
                         iterations_run=iterations, objective_trace=trace,
                         norm_params=norm_params, median_window=cfg.median_window)
    lm = LabelMap(labels.reshape(r.height, r.width), default_legend(cfg.k, "cluster"))
    return model, lm


class ImprovedKMeans(ClusterMixin, TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`cluster`.

    ``fit`` needs image-shaped input (a Raster or a ``(bands, height,
    width)`` array) because seeding uses image rows. ``predict`` also
    accepts a plain ``(n_pixels, n_bands)`` matrix.
    """

    def __init__(self, n_clusters=2, max_iter=100, tol=1e-6, median_window=0, normalize=True):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.tol = tol
        self.median_window = median_window
        self.normalize = normalize

    def fit(self, X, y=None):
        r = check_raster(X)
        cfg = KmeansConfig(k=self.n_clusters, max_iterations=self.max_iter, tolerance=self.tol,
                           median_window=self.median_window, normalize=self.normalize)
        self.model_, lm = cluster(r, cfg)
        self.cluster_centers_ = self.model_.means
        self.labels_ = np.asarray(lm.labels)
        self.n_iter_ = self.model_.iterations_run
        self.inertia_ = float(_nearest(self._prepare(r)[0], self.cluster_centers_)[1].sum())
        self.n_features_in_ = r.bands
        return self

    def _prepare(self, X):
        if isinstance(X, Raster) or np.ndim(X) == 3:
            r = check_raster(X)
            if r.bands != self.model_.bands:
                raise FormatError(f"expected {self.model_.bands} bands, got {r.bands}")
            if self.model_.median_window:
                r = median_filter(r, self.model_.median_window)
            if self.model_.norm_params is not None:
                r = apply_normalization(r, self.model_.norm_params)
            return r.pixels(), (r.height, r.width)
        pixels = check_pixels(X, self.model_.bands)
        if self.model_.norm_params is not None:
            pixels = normalize_pixels(pixels, self.model_.norm_params)
        return pixels, None

    def predict(self, X):
        check_is_fitted(self, "model_")
        pixels, shape = self._prepare(X)
        labels, _ = _nearest(pixels, self.cluster_centers_)
        return labels.reshape(shape) if shape else labels

    def transform(self, X):
        """Distance from every pixel to every cluster centre."""
        check_is_fitted(self, "model_")
        pixels, _ = self._prepare(X)
        return np.sqrt(((pixels[:, np.newaxis, :] - self.cluster_centers_) ** 2).sum(axis=2))
