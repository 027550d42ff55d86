"""One-hidden-layer perceptron with logistic units, trained by online
backpropagation on signature-set pixels.

Weights are stored with the bias folded into row 0: ``w`` is
``(bands + 1, hidden)`` and ``v`` is ``(hidden + 1, classes)``. The
forward pass accumulates ``bias + sum_i x_i * weight_i`` one input at a
time, so a single pattern and a whole image go through exactly the same
floating-point operations.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numba
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConfigError, FormatError
from .raster import LabelMap, Raster, apply_normalization, default_legend, validate_legend
from .validation import check_count, check_pixels

DEFAULT_HIDDEN = 5
DEFAULT_TAU = 0.5
INIT_BOUND = 0.1


@dataclass(frozen=True, eq=False)
class MlpModel:
    w: np.ndarray
    v: np.ndarray
    tau: float = DEFAULT_TAU
    legend: tuple = ()
    norm_params: tuple = ()

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64)
        v = np.array(self.v, dtype=np.float64)
        if w.ndim != 2 or v.ndim != 2 or w.shape[0] < 2 or v.shape[0] < 2 or w.shape[1] < 1 \
                or v.shape[1] < 1:
            raise FormatError(f"bad weight shapes w{w.shape} v{v.shape}")
        if v.shape[0] != w.shape[1] + 1:
            raise FormatError(f"v has {v.shape[0]} rows, expected hidden + 1 = {w.shape[1] + 1}")
        if not (np.isfinite(w).all() and np.isfinite(v).all()):
            raise FormatError("weights must be finite")
        if not 0 < self.tau < 1:
            raise ConfigError(f"tau must lie strictly between 0 and 1, got {self.tau}")
        l, n = w.shape[0] - 1, v.shape[1]
        legend = tuple(self.legend) if self.legend else default_legend(n)
        legend = tuple((str(a), tuple(int(x) for x in c)) for a, c in legend)
        if len(legend) != n:
            raise FormatError(f"legend has {len(legend)} classes, model has {n} outputs")
        validate_legend(legend)
        norm = tuple(self.norm_params) if self.norm_params else ((0.0, 1.0),) * l
        norm = tuple((float(a), float(b)) for a, b in norm)
        if len(norm) != l:
            raise FormatError(f"{len(norm)} normalization pairs for {l} input bands")
        w.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "legend", legend)
        object.__setattr__(self, "norm_params", norm)

    @property
    def l(self) -> int:
        return self.w.shape[0] - 1

    @property
    def m(self) -> int:
        return self.w.shape[1]

    @property
    def n(self) -> int:
        return self.v.shape[1]

    @property
    def unknown(self) -> int:
        return self.n

    def __eq__(self, other):
        if not isinstance(other, MlpModel):
            return NotImplemented
        return (self.tau == other.tau and self.legend == other.legend
                and self.norm_params == other.norm_params
                and self.w.shape == other.w.shape and self.v.shape == other.v.shape
                and self.w.tobytes() == other.w.tobytes() and self.v.tobytes() == other.v.tobytes())

    __hash__ = None


@dataclass(frozen=True)
class TrainingPair:
    p: np.ndarray
    c: np.ndarray


@dataclass(frozen=True)
class SignatureClass:
    name: str
    color: tuple
    regions: tuple  # (x, y, width, height) rectangles


@dataclass(frozen=True)
class SignatureSet:
    classes: tuple
    raster: Optional[str] = None

    @property
    def legend(self) -> tuple:
        return tuple((c.name, tuple(c.color)) for c in self.classes)


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 0.2
    epochs: int = 500
    seed: int = 0
    shuffle: bool = False

    def __post_init__(self):
        if not (isinstance(self.eta, (int, float)) and 0 < self.eta <= 1):
            raise ConfigError(f"eta must lie in (0, 1], got {self.eta!r}")
        check_count("epochs", self.epochs)


# ---------------------------------------------------------------------------
# Forward pass


def logistic(z):
    """Overflow-safe logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _affine(x: np.ndarray, W: np.ndarray) -> np.ndarray:
    acc = np.broadcast_to(W[0], x.shape[:-1] + W[0].shape).copy()
    for i in range(W.shape[0] - 1):
        acc = acc + x[..., i:i + 1] * W[i + 1]
    return acc


def init_weights(l: int, m: int = DEFAULT_HIDDEN, n: int = 2, seed: int = 0, *,
                 tau: float = DEFAULT_TAU, legend=(), norm_params=()) -> MlpModel:
    """Fresh model with every weight drawn uniformly from [-0.1, 0.1]."""
    l, m, n = check_count("l", l), check_count("m", m), check_count("n", n)
    rng = np.random.default_rng(seed)
    w = rng.uniform(-INIT_BOUND, INIT_BOUND, size=(l + 1, m))
    v = rng.uniform(-INIT_BOUND, INIT_BOUND, size=(m + 1, n))
    return MlpModel(w, v, tau=tau, legend=legend, norm_params=norm_params)


def hidden_activations(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.l:
        raise FormatError(f"pattern has {x.shape[-1]} components, model expects {model.l}")
    return logistic(_affine(x, model.w))


def output_activations(model: MlpModel, h) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != model.m:
        raise FormatError(f"hidden vector has {h.shape[-1]} components, model has {model.m}")
    return logistic(_affine(h, model.v))


def forward(model: MlpModel, x) -> tuple[np.ndarray, np.ndarray]:
    h = hidden_activations(model, x)
    return h, output_activations(model, h)


def decide(o: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Threshold outputs into binary vectors and single labels (n = UNKNOWN)."""
    binary = (o >= tau).astype(np.int8)
    best = np.argmax(o, axis=-1)
    top = np.take_along_axis(o, best[..., np.newaxis], axis=-1)[..., 0]
    return binary, np.where(top >= tau, best, o.shape[-1])


def classify_pattern(model: MlpModel, p) -> tuple[np.ndarray, int]:
    _, o = forward(model, np.asarray(p, dtype=np.float64))
    binary, label = decide(o, model.tau)
    return binary, int(label)


def classify_raster(model: MlpModel, r: Raster) -> LabelMap:
    if r.bands != model.l:
        raise FormatError(f"raster has {r.bands} bands, model expects {model.l}")
    x = apply_normalization(r, model.norm_params).pixels()
    _, o = forward(model, x)
    _, labels = decide(o, model.tau)
    return LabelMap(labels.reshape(r.height, r.width), model.legend)


# ---------------------------------------------------------------------------
# Backward pass


def output_deltas(o, c) -> np.ndarray:
    o = np.asarray(o, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if o.shape != c.shape:
        raise FormatError(f"output/target lengths differ: {o.shape} vs {c.shape}")
    return o * (1.0 - o) * (c - o)


def hidden_deltas(h, deltas_o, v) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    deltas_o = np.asarray(deltas_o, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (h.shape[-1] + 1, deltas_o.shape[-1]):
        raise FormatError(f"v shape {v.shape} inconsistent with m={h.shape[-1]}, n={deltas_o.shape[-1]}")
    back = np.zeros_like(h)
    for k in range(v.shape[1]):
        back = back + deltas_o[..., k:k + 1] * v[1:, k]
    return h * (1.0 - h) * back


def apply_updates(model: MlpModel, p, h, deltas_o, deltas_h, eta: float) -> MlpModel:
    """One online weight update; bias rows use a constant companion input of 1."""
    p = np.asarray(p, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    deltas_o = np.asarray(deltas_o, dtype=np.float64)
    deltas_h = np.asarray(deltas_h, dtype=np.float64)
    if p.shape != (model.l,) or h.shape != (model.m,) or deltas_o.shape != (model.n,) \
            or deltas_h.shape != (model.m,):
        raise FormatError("update vectors do not match the model dimensions")
    v = model.v.copy()
    v[0] += eta * deltas_o
    v[1:] += eta * np.outer(h, deltas_o)
    w = model.w.copy()
    w[0] += eta * deltas_h
    w[1:] += eta * np.outer(p, deltas_h)
    return replace(model, w=w, v=v)


def pattern_error(o, c) -> float:
    """Half the squared error between outputs and target."""
    d = np.asarray(c, dtype=np.float64) - np.asarray(o, dtype=np.float64)
    return 0.5 * float(np.sum(d * d))


# ---------------------------------------------------------------------------
# Training


@numba.njit(cache=True)
def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@numba.njit(cache=True)
def _train_kernel(w, v, P, C, orders, eta, trace):
    l = w.shape[0] - 1
    m = w.shape[1]
    n = v.shape[1]
    h = np.empty(m)
    o = np.empty(n)
    d_o = np.empty(n)
    d_h = np.empty(m)
    for epoch in range(orders.shape[0]):
        total = 0.0
        for t in range(orders.shape[1]):
            q = orders[epoch, t]
            for j in range(m):
                acc = w[0, j]
                for i in range(l):
                    acc = acc + P[q, i] * w[i + 1, j]
                h[j] = _sigmoid(acc)
            err = 0.0
            for k in range(n):
                acc = v[0, k]
                for j in range(m):
                    acc = acc + h[j] * v[j + 1, k]
                o[k] = _sigmoid(acc)
                diff = C[q, k] - o[k]
                err += diff * diff
                d_o[k] = o[k] * (1.0 - o[k]) * diff
            total += 0.5 * err
            for j in range(m):
                back = 0.0
                for k in range(n):
                    back = back + d_o[k] * v[j + 1, k]
                d_h[j] = h[j] * (1.0 - h[j]) * back
            for k in range(n):
                v[0, k] += eta * d_o[k]
                for j in range(m):
                    v[j + 1, k] += eta * (h[j] * d_o[k])
            for j in range(m):
                w[0, j] += eta * d_h[j]
                for i in range(l):
                    w[i + 1, j] += eta * (P[q, i] * d_h[j])
        trace[epoch] = total / orders.shape[1]


def pairs_to_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pairs, tuple) and len(pairs) == 2 and isinstance(pairs[0], np.ndarray):
        P, C = pairs
    else:
        pairs = list(pairs)
        if not pairs:
            raise ConfigError("training set is empty")
        P = np.array([pr.p for pr in pairs], dtype=np.float64)
        C = np.array([pr.c for pr in pairs], dtype=np.float64)
    P = np.ascontiguousarray(P, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.float64)
    if P.ndim != 2 or C.ndim != 2 or len(P) != len(C):
        raise FormatError("patterns and targets must be matching 2-D arrays")
    if len(P) == 0:
        raise ConfigError("training set is empty")
    return P, C


def presentation_orders(n_pairs: int, cfg: TrainConfig) -> np.ndarray:
    """Index order of every epoch; fixed unless ``cfg.shuffle``."""
    if not cfg.shuffle:
        return np.tile(np.arange(n_pairs), (cfg.epochs, 1))
    rng = np.random.default_rng(cfg.seed)
    return np.array([rng.permutation(n_pairs) for _ in range(cfg.epochs)])


def train(model: MlpModel, pairs, cfg: TrainConfig) -> tuple[MlpModel, np.ndarray]:
    """Online backpropagation: the weights change after every pattern.

    ``pairs`` is a sequence of :class:`TrainingPair` or a ``(patterns,
    targets)`` array tuple. Returns the trained model and the mean per-pattern
    error of every epoch, measured on the forward pass before each update.
    """
    P, C = pairs_to_arrays(pairs)
    if P.shape[1] != model.l or C.shape[1] != model.n:
        raise FormatError(f"pairs are {P.shape[1]}->{C.shape[1]}, model is {model.l}->{model.n}")
    w = model.w.copy()
    v = model.v.copy()
    trace = np.empty(cfg.epochs)
    _train_kernel(w, v, P, C, presentation_orders(len(P), cfg), float(cfg.eta), trace)
    return replace(model, w=w, v=v), trace


# ---------------------------------------------------------------------------
# Signature sets


def extract_training_pairs(r: Raster, sig: SignatureSet, norm_params=None) -> list[TrainingPair]:
    """One pair per signature pixel, in class order then row-major order."""
    masks = signature_masks(sig, r.width, r.height)
    x = r if norm_params is None else apply_normalization(r, norm_params)
    pixels = x.pixels()
    n = len(sig.classes)
    pairs = []
    for j, mask in enumerate(masks):
        target = np.zeros(n)
        target[j] = 1.0
        for idx in np.flatnonzero(mask.reshape(-1)):
            pairs.append(TrainingPair(pixels[idx].copy(), target.copy()))
    return pairs


def signature_masks(sig: SignatureSet, width: int, height: int) -> list[np.ndarray]:
    if not sig.classes:
        raise FormatError("signature set has no classes")
    owner = np.full((height, width), -1)
    masks = []
    for j, cls in enumerate(sig.classes):
        mask = np.zeros((height, width), dtype=bool)
        for region in cls.regions:
            x, y, rw, rh = (int(a) for a in region)
            if rw < 1 or rh < 1 or x < 0 or y < 0 or x + rw > width or y + rh > height:
                raise FormatError(f"region {tuple(region)} of class {cls.name!r} is outside "
                                  f"the {width}x{height} raster or empty")
            mask[y:y + rh, x:x + rw] = True
        clash = mask & (owner >= 0)
        if clash.any():
            other = sig.classes[owner[clash][0]].name
            raise FormatError(f"regions of classes {other!r} and {cls.name!r} overlap")
        if not mask.any():
            raise FormatError(f"class {cls.name!r} has no signature pixels")
        owner[mask] = j
        masks.append(mask)
    return masks


def save_signature_set(sig: SignatureSet, path) -> None:
    doc = {
        "raster": sig.raster,
        "classes": [{"name": c.name, "color": "%02x%02x%02x" % tuple(c.color),
                     "regions": [list(map(int, reg)) for reg in c.regions]} for c in sig.classes],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_signature_set(path) -> SignatureSet:
    try:
        doc = json.loads(Path(path).read_text())
        classes = tuple(
            SignatureClass(str(c["name"]), _parse_hex(c["color"]),
                           tuple(tuple(int(a) for a in reg) for reg in c["regions"]))
            for c in doc["classes"])
    except FileNotFoundError:
        raise FormatError(f"signature file not found: {path}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed signature set ({exc})") from None
    if any(len(reg) != 4 for c in classes for reg in c.regions):
        raise FormatError(f"{path}: regions must be [x, y, width, height]")
    sig = SignatureSet(classes, doc.get("raster"))
    validate_legend(sig.legend)
    return sig


def _parse_hex(s: str) -> tuple:
    if len(s) != 6:
        raise ValueError(f"color {s!r} is not rrggbb")
    return tuple(int(s[i:i + 2], 16) for i in (0, 2, 4))


# ---------------------------------------------------------------------------
# Model files


def model_to_dict(model: MlpModel) -> dict:
    return {
        "format": "landcover-mlp",
        "l": model.l, "m": model.m, "n": model.n,
        "tau": model.tau,
        "legend": [{"name": a, "color": "%02x%02x%02x" % c} for a, c in model.legend],
        "norm_params": [list(p) for p in model.norm_params],
        "w": model.w.tolist(),
        "v": model.v.tolist(),
    }


def model_from_dict(d: dict) -> MlpModel:
    try:
        if d.get("format") != "landcover-mlp":
            raise ValueError("not a landcover-mlp model file")
        model = MlpModel(
            w=np.array(d["w"], dtype=np.float64), v=np.array(d["v"], dtype=np.float64),
            tau=float(d["tau"]),
            legend=tuple((e["name"], _parse_hex(e["color"])) for e in d["legend"]),
            norm_params=tuple(tuple(p) for p in d["norm_params"]))
        if (model.l, model.m, model.n) != (int(d["l"]), int(d["m"]), int(d["n"])):
            raise ValueError("declared layer sizes disagree with the weight matrices")
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise FormatError(f"malformed model: {exc}") from None
    return model


def save_model(model: MlpModel, path) -> None:
    # json writes floats with repr(), which round-trips float64 exactly
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path) -> MlpModel:
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise FormatError(f"model file not found: {path}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    if not isinstance(d, dict):
        raise FormatError(f"{path}: malformed model")
    return model_from_dict(d)


# ---------------------------------------------------------------------------
# Estimator


class BackpropMLPClassifier(ClassifierMixin, BaseEstimator):
    """scikit-learn classifier backed by :func:`train`.

    Inputs are used as given; put a :class:`~landcover.raster.BandNormalizer`
    in front of it to get [0, 1] patterns. ``predict`` returns
    ``unknown_label`` where no output reaches ``tau``.
    """

    def __init__(self, hidden=DEFAULT_HIDDEN, eta=0.2, epochs=500, tau=DEFAULT_TAU, seed=0,
                 shuffle=False, unknown_label=-1):
        self.hidden = hidden
        self.eta = eta
        self.epochs = epochs
        self.tau = tau
        self.seed = seed
        self.shuffle = shuffle
        self.unknown_label = unknown_label

    def fit(self, X, y):
        X = check_pixels(X)
        y = np.asarray(y)
        if len(y) != len(X):
            raise FormatError(f"{len(X)} patterns but {len(y)} labels")
        self.classes_, idx = np.unique(y, return_inverse=True)
        targets = np.eye(len(self.classes_))[idx]
        cfg = TrainConfig(eta=self.eta, epochs=self.epochs, seed=self.seed, shuffle=self.shuffle)
        model = init_weights(X.shape[1], self.hidden, len(self.classes_), self.seed, tau=self.tau)
        self.model_, self.loss_curve_ = train(model, (X, targets), cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        """Raw output-unit activations, one column per class."""
        check_is_fitted(self, "model_")
        return forward(self.model_, check_pixels(X, self.n_features_in_))[1]

    def predict(self, X):
        o = self.decision_function(X)
        _, labels = decide(o, self.model_.tau)
        known = labels < len(self.classes_)
        out = np.empty(len(labels), dtype=np.result_type(self.classes_, np.asarray(self.unknown_label)))
        out[known] = self.classes_[labels[known]]
        out[~known] = self.unknown_label
        return out
