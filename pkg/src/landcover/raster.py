"""Multi-band raster model, band-sequential file I/O, preprocessing and
thematic rendering.

On disk a raster is a small ``key = value`` text header plus a raw
little-endian band-sequential data file living next to it with the
``.bsq`` extension. Label maps reuse the same scheme (single band, u16)
with an extra ``.legend`` file.
"""
from __future__ import annotations

import colorsys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import FormatError

# little-endian on disk regardless of host order
DTYPES = {
    "u8": np.dtype("<u1"),
    "u16": np.dtype("<u2"),
    "f64": np.dtype("<f8"),
}
_DTYPE_NAMES = {np.dtype(np.uint8): "u8", np.dtype(np.uint16): "u16", np.dtype(np.float64): "f64"}

UNKNOWN_COLOR = (0, 0, 0)

# 16 well-separated display colours; none of them is black (reserved for UNKNOWN).
DEFAULT_PALETTE: tuple[tuple[int, int, int], ...] = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 212), (0, 128, 128), (220, 190, 255),
    (170, 110, 40), (255, 250, 200), (128, 0, 0), (170, 255, 195),
)


@dataclass(frozen=True, eq=False)
class Raster:
    """A width x height x bands grid of samples.

    ``data`` is held band-sequentially with shape ``(bands, height, width)``
    and is made read-only on construction. Supported sample types are
    uint8, uint16 and float64.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[np.newaxis]
        if data.ndim != 3:
            raise FormatError(f"raster data must be 3-D (bands, height, width), got shape {data.shape}")
        native = data.dtype.newbyteorder("=")
        if native not in _DTYPE_NAMES:
            raise FormatError(f"unsupported sample type {data.dtype}; use uint8, uint16 or float64")
        if min(data.shape) < 1:
            raise FormatError(f"raster dimensions must be >= 1, got {data.shape}")
        if native.kind == "f" and not np.isfinite(data).all():
            raise FormatError("raster samples must be finite")
        data = np.array(data, dtype=native, order="C", copy=True)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @classmethod
    def from_pixels(cls, pixels: np.ndarray, height: int, width: int) -> "Raster":
        """Build a raster from a ``(height * width, bands)`` pixel matrix."""
        pixels = np.asarray(pixels)
        if pixels.ndim != 2 or pixels.shape[0] != height * width:
            raise FormatError(f"pixel matrix shape {pixels.shape} does not fit {height}x{width}")
        return cls(pixels.T.reshape(pixels.shape[1], height, width))

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def dtype_name(self) -> str:
        return _DTYPE_NAMES[self.data.dtype]

    @property
    def samples(self) -> np.ndarray:
        """All samples flattened in band-sequential, row-major order."""
        return self.data.reshape(-1)

    def pixels(self) -> np.ndarray:
        """Return a float64 ``(height * width, bands)`` matrix in row-major pixel order."""
        return self.data.reshape(self.bands, -1).T.astype(np.float64)

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return (self.data.dtype == other.data.dtype and self.data.shape == other.data.shape
                and self.data.tobytes() == other.data.tobytes())

    __hash__ = None


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Per-pixel class indices with a legend of ``(name, (r, g, b))`` entries.

    Index ``len(legend)`` is the UNKNOWN sentinel.
    """

    labels: np.ndarray
    legend: tuple = field(default_factory=tuple)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or min(labels.shape) < 1:
            raise FormatError(f"labels must be a non-empty 2-D array, got shape {labels.shape}")
        if labels.dtype.kind not in "iu":
            raise FormatError(f"labels must be integers, got {labels.dtype}")
        legend = tuple((str(name), tuple(int(c) for c in color)) for name, color in self.legend)
        validate_legend(legend)
        if labels.size and (labels.min() < 0 or labels.max() > len(legend)):
            raise FormatError(f"labels must lie in 0..{len(legend)} (UNKNOWN = {len(legend)})")
        labels = labels.astype(np.int64)
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "legend", legend)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.legend)

    @property
    def unknown(self) -> int:
        return len(self.legend)

    def __eq__(self, other):
        if not isinstance(other, LabelMap):
            return NotImplemented
        return self.legend == other.legend and np.array_equal(self.labels, other.labels)

    __hash__ = None


def validate_legend(legend: Sequence) -> None:
    for name, _ in legend:
        if "\t" in name or "\n" in name or not name.strip():
            raise FormatError(f"class name {name!r} must be non-blank and free of tabs/newlines")
    colors = [tuple(c) for _, c in legend]
    for color in colors:
        if len(color) != 3 or any(not 0 <= c <= 255 for c in color):
            raise FormatError(f"legend color {color} is not an 8-bit RGB triple")
        if color == UNKNOWN_COLOR:
            raise FormatError("black (0, 0, 0) is reserved for UNKNOWN pixels")
    if len(set(colors)) != len(colors):
        raise FormatError("legend colors must be pairwise distinct")


def default_colors(n: int) -> list[tuple[int, int, int]]:
    """First ``n`` colours of the default palette, extended by hue stepping past 16."""
    colors = list(DEFAULT_PALETTE[:n])
    i = 0
    while len(colors) < n:
        hue = (i * 0.618033988749895) % 1.0
        value = 0.95 - 0.3 * ((i // 7) % 3) / 2
        rgb = tuple(int(round(255 * c)) for c in colorsys.hsv_to_rgb(hue, 0.8, value))
        if rgb not in colors and rgb != UNKNOWN_COLOR:
            colors.append(rgb)
        i += 1
    return colors


def default_legend(n: int, prefix: str = "class") -> tuple:
    return tuple((f"{prefix}_{j}", c) for j, c in enumerate(default_colors(n)))


# ---------------------------------------------------------------------------
# File I/O


def data_path_for(header_path) -> Path:
    return Path(header_path).with_suffix(".bsq")


def legend_path_for(header_path) -> Path:
    return Path(header_path).with_suffix(".legend")


def _read_header(header_path: Path) -> dict:
    if not header_path.is_file():
        raise FormatError(f"header file not found: {header_path}")
    fields = {}
    for lineno, line in enumerate(header_path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{header_path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        fields[key] = value
    missing = {"width", "height", "bands", "dtype"} - fields.keys()
    if missing:
        raise FormatError(f"{header_path}: missing header fields {sorted(missing)}")
    try:
        dims = {k: int(fields[k]) for k in ("width", "height", "bands")}
    except ValueError as exc:
        raise FormatError(f"{header_path}: non-integer dimension ({exc})") from None
    if min(dims.values()) < 1:
        raise FormatError(f"{header_path}: dimensions must be >= 1")
    if fields["dtype"] not in DTYPES:
        raise FormatError(f"{header_path}: unsupported dtype {fields['dtype']!r}")
    dims["dtype"] = fields["dtype"]
    return dims


def load_raster(header_path) -> Raster:
    header_path = Path(header_path)
    hdr = _read_header(header_path)
    data_path = data_path_for(header_path)
    if not data_path.is_file():
        raise FormatError(f"data file not found: {data_path}")
    dtype = DTYPES[hdr["dtype"]]
    shape = (hdr["bands"], hdr["height"], hdr["width"])
    expected = int(np.prod(shape)) * dtype.itemsize
    actual = data_path.stat().st_size
    if actual != expected:
        raise FormatError(f"{data_path}: size {actual} bytes, header implies {expected}")
    data = np.fromfile(data_path, dtype=dtype).reshape(shape)
    return Raster(data.astype(dtype.newbyteorder("=")))


def save_raster(r: Raster, header_path) -> None:
    if not isinstance(r, Raster):
        raise FormatError(f"expected a Raster, got {type(r).__name__}")
    header_path = Path(header_path)
    data_path = data_path_for(header_path)
    if data_path == header_path:
        raise FormatError("header path must not use the .bsq extension")
    header = (f"width = {r.width}\nheight = {r.height}\nbands = {r.bands}\n"
              f"dtype = {r.dtype_name}\ninterleave = bsq\nbyte_order = little\n")
    data_path.write_bytes(r.data.astype(DTYPES[r.dtype_name]).tobytes())
    header_path.write_text(header)


def save_label_map(lm: LabelMap, header_path) -> None:
    if lm.labels.max() > np.iinfo(np.uint16).max:
        raise FormatError("too many classes for a u16 label map")
    save_raster(Raster(lm.labels.astype(np.uint16)), header_path)
    lines = [f"{j}\t{name}\t{'%02x%02x%02x' % color}" for j, (name, color) in enumerate(lm.legend)]
    legend_path_for(header_path).write_text("".join(line + "\n" for line in lines))


def load_label_map(header_path) -> LabelMap:
    r = load_raster(header_path)
    if r.bands != 1 or r.dtype_name != "u16":
        raise FormatError(f"{header_path}: label maps are single-band u16 rasters")
    legend_path = legend_path_for(header_path)
    if not legend_path.is_file():
        raise FormatError(f"legend file not found: {legend_path}")
    legend = []
    for lineno, line in enumerate(legend_path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3 or len(parts[2]) != 6:
            raise FormatError(f"{legend_path}:{lineno}: expected 'index<TAB>name<TAB>rrggbb'")
        try:
            index = int(parts[0])
            color = tuple(int(parts[2][i:i + 2], 16) for i in (0, 2, 4))
        except ValueError:
            raise FormatError(f"{legend_path}:{lineno}: bad index or color") from None
        if index != len(legend):
            raise FormatError(f"{legend_path}:{lineno}: legend indices must run 0, 1, 2, ...")
        legend.append((parts[1], color))
    return LabelMap(r.data[0].astype(np.int64), tuple(legend))


# ---------------------------------------------------------------------------
# Preprocessing


def median_filter(r: Raster, window: int = 3) -> Raster:
    """Per-band median over a ``window x window`` neighbourhood, replicating edges."""
    if not isinstance(window, (int, np.integer)) or window < 1 or window % 2 == 0:
        raise FormatError(f"median window must be a positive odd integer, got {window!r}")
    if window > min(r.width, r.height):
        raise FormatError(f"median window {window} exceeds raster size {r.width}x{r.height}")
    if window == 1:
        return r
    out = np.empty_like(r.data)
    for b in range(r.bands):
        out[b] = ndimage.median_filter(r.data[b], size=window, mode="nearest")
    return Raster(out)


def apply_normalization(r: Raster, params: Sequence[tuple[float, float]]) -> Raster:
    """Replay a per-band min-max transform recorded by :func:`normalize_bands`."""
    if len(params) != r.bands:
        raise FormatError(f"{len(params)} normalization pairs for a {r.bands}-band raster")
    out = np.empty(r.data.shape, dtype=np.float64)
    for b, (lo, hi) in enumerate(params):
        if hi == lo:
            out[b] = 0.0
        else:
            out[b] = (r.data[b].astype(np.float64) - lo) / (hi - lo)
    return Raster(out)


def normalize_bands(r: Raster) -> tuple[Raster, list[tuple[float, float]]]:
    """Map every band onto [0, 1] by its own min and max.

    Constant bands become all zeros. The returned ``(min, max)`` pairs let
    the identical transform be replayed on new data.
    """
    params = [(float(r.data[b].min()), float(r.data[b].max())) for b in range(r.bands)]
    return apply_normalization(r, params), params


def normalize_pixels(pixels: np.ndarray, params: Sequence[tuple[float, float]]) -> np.ndarray:
    """Same transform as :func:`apply_normalization` on a ``(n_pixels, bands)`` matrix."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.shape[-1] != len(params):
        raise FormatError(f"{len(params)} normalization pairs for {pixels.shape[-1]} bands")
    lo = np.array([p[0] for p in params], dtype=np.float64)
    hi = np.array([p[1] for p in params], dtype=np.float64)
    span = np.where(hi == lo, 1.0, hi - lo)
    return np.where(hi == lo, 0.0, (pixels - lo) / span)


def identity_normalization(bands: int) -> list[tuple[float, float]]:
    return [(0.0, 1.0)] * bands


class BandNormalizer(TransformerMixin, BaseEstimator):
    """Per-band min-max scaler with the same degenerate-band rule as
    :func:`normalize_bands`, usable inside scikit-learn pipelines.

    Accepts either a :class:`Raster` or a ``(n_pixels, n_bands)`` matrix.
    """

    def fit(self, X, y=None):
        X = _as_pixel_matrix(X)
        self.params_ = [(float(lo), float(hi)) for lo, hi in zip(X.min(axis=0), X.max(axis=0))]
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        if isinstance(X, Raster):
            return apply_normalization(X, self.params_)
        X = _as_pixel_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise FormatError(f"expected {self.n_features_in_} bands, got {X.shape[1]}")
        return normalize_pixels(X, self.params_)


def _as_pixel_matrix(X) -> np.ndarray:
    from .validation import check_pixels
    if isinstance(X, Raster):
        return X.pixels()
    return check_pixels(X)


# ---------------------------------------------------------------------------
# Rendering


def render_thematic(lm: LabelMap, out_path) -> None:
    """Write ``lm`` as a binary P6 pixmap, one legend colour per class."""
    palette = np.array([c for _, c in lm.legend] + [UNKNOWN_COLOR], dtype=np.uint8)
    rgb = palette[lm.labels]
    header = f"P6\n{lm.width} {lm.height}\n255\n".encode("ascii")
    Path(out_path).write_bytes(header + rgb.tobytes())


def read_pixmap(path) -> np.ndarray:
    """Read a binary P6 pixmap into a ``(height, width, 3)`` uint8 array."""
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated pixmap header")
        tokens.append(raw[start:pos])
    if tokens[0] != b"P6" or tokens[3] != b"255":
        raise FormatError(f"{path}: not an 8-bit binary P6 pixmap")
    width, height = int(tokens[1]), int(tokens[2])
    body = raw[pos + 1:]
    if len(body) != 3 * width * height:
        raise FormatError(f"{path}: expected {3 * width * height} data bytes, got {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3)


def decode_thematic(rgb: np.ndarray, legend: Sequence) -> LabelMap:
    """Invert :func:`render_thematic` given the legend used to draw it."""
    lookup = {tuple(c): j for j, (_, c) in enumerate(legend)}
    lookup[UNKNOWN_COLOR] = len(legend)
    flat = rgb.reshape(-1, 3)
    keys = (flat[:, 0].astype(np.int64) << 16) | (flat[:, 1].astype(np.int64) << 8) | flat[:, 2]
    labels = np.empty(len(flat), dtype=np.int64)
    uniq, inverse = np.unique(keys, return_inverse=True)
    for u_i, key in enumerate(uniq):
        color = (int(key >> 16), int((key >> 8) & 255), int(key & 255))
        if color not in lookup:
            raise FormatError(f"pixel colour {color} is not in the legend")
        labels[inverse == u_i] = lookup[color]
    return LabelMap(labels.reshape(rgb.shape[:2]), tuple(legend))

