"""Accuracy assessment from a confusion matrix.

Per-class figures use these conventions:

* omission   = off-diagonal row mass / row total
* commission = off-diagonal column mass / *row* total
* map accuracy = diagonal / (row total + column total - diagonal)

All are reported in percent. Rows are ground truth, columns predictions.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import ConfigError, FormatError
from .raster import LabelMap


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray
    names: tuple = ()
    excluded: int = 0

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or counts.shape[0] < 1:
            raise FormatError(f"confusion matrix must be square and non-empty, got {counts.shape}")
        if (counts < 0).any():
            raise FormatError("confusion matrix counts must be non-negative")
        names = tuple(self.names) or tuple(f"class_{j}" for j in range(len(counts)))
        if len(names) != len(counts):
            raise FormatError(f"{len(names)} class names for {len(counts)} classes")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_sum(self, i: int) -> int:
        return int(self.counts[i].sum())

    def col_sum(self, i: int) -> int:
        return int(self.counts[:, i].sum())


def confusion_matrix(truth: LabelMap, predicted: LabelMap, n: int | None = None) -> ConfusionMatrix:
    """Tally (truth, predicted) label pairs.

    Pixels that are UNKNOWN in either map are left out and counted in
    ``excluded``.
    """
    if truth.labels.shape != predicted.labels.shape:
        raise FormatError(f"map sizes differ: {truth.width}x{truth.height} vs "
                          f"{predicted.width}x{predicted.height}")
    n = truth.n_classes if n is None else n
    t = truth.labels.reshape(-1)
    p = predicted.labels.reshape(-1)
    keep = (t != truth.unknown) & (p != predicted.unknown)
    t, p = t[keep], p[keep]
    if len(t) and (t.max() >= n or p.max() >= n):
        raise FormatError(f"labels exceed the {n} classes being assessed")
    counts = np.bincount(t * n + p, minlength=n * n).reshape(n, n)
    names = tuple(name for name, _ in truth.legend[:n])
    if len(names) < n:
        names = ()
    return ConfusionMatrix(counts, names, int((~keep).sum()))


def _ratio(num: int, den: int, what: str) -> Fraction:
    if den <= 0:
        raise ConfigError(f"{what} is undefined: zero denominator")
    return Fraction(num, den) * 100


def omission_fraction(cm: ConfusionMatrix, i: int) -> Fraction:
    row = cm.row_sum(i)
    return _ratio(row - int(cm.counts[i, i]), row, f"omission for {cm.names[i]!r}")


def commission_fraction(cm: ConfusionMatrix, i: int) -> Fraction:
    return _ratio(cm.col_sum(i) - int(cm.counts[i, i]), cm.row_sum(i),
                  f"commission for {cm.names[i]!r}")


def map_accuracy_fraction(cm: ConfusionMatrix, i: int) -> Fraction:
    d = int(cm.counts[i, i])
    return _ratio(d, cm.row_sum(i) + cm.col_sum(i) - d, f"map accuracy for {cm.names[i]!r}")


def overall_accuracy_fraction(cm: ConfusionMatrix) -> Fraction:
    return _ratio(int(np.trace(cm.counts)), cm.total, "overall accuracy")


def omission_error(cm: ConfusionMatrix, i: int) -> float:
    return float(omission_fraction(cm, i))


def commission_error(cm: ConfusionMatrix, i: int) -> float:
    return float(commission_fraction(cm, i))


def map_accuracy(cm: ConfusionMatrix, i: int) -> float:
    return float(map_accuracy_fraction(cm, i))


def overall_accuracy(cm: ConfusionMatrix) -> float:
    return float(overall_accuracy_fraction(cm))


def class_histogram(lm: LabelMap) -> dict[int, int]:
    """Pixel count per legend class; key ``lm.unknown`` holds UNKNOWN pixels."""
    counts = np.bincount(lm.labels.reshape(-1), minlength=lm.n_classes + 1)
    return {j: int(c) for j, c in enumerate(counts)}


def labels_from_counts(counts) -> tuple[np.ndarray, np.ndarray]:
    """Expand a count matrix into flat (truth, predicted) label vectors."""
    counts = np.asarray(counts, dtype=np.int64)
    n = len(counts)
    cells = np.repeat(np.arange(n * n), counts.reshape(-1))
    return cells // n, cells % n


def best_match_agreement(truth, predicted) -> tuple[float, dict]:
    """Fraction of pixels that agree after the best one-to-one relabelling
    of ``predicted`` onto ``truth``."""
    truth = np.asarray(truth).reshape(-1)
    predicted = np.asarray(predicted).reshape(-1)
    t_ids, t_inv = np.unique(truth, return_inverse=True)
    p_ids, p_inv = np.unique(predicted, return_inverse=True)
    table = np.zeros((len(p_ids), len(t_ids)), dtype=np.int64)
    np.add.at(table, (p_inv, t_inv), 1)
    rows, cols = linear_sum_assignment(table, maximize=True)
    mapping = {int(p_ids[r]): int(t_ids[c]) for r, c in zip(rows, cols)}
    return table[rows, cols].sum() / len(truth), mapping


# ---------------------------------------------------------------------------
# Reports


def _pct(x) -> str:
    return "n/a" if x is None else f"{float(x):.2f}%"


def _safe(fn, *args):
    try:
        return fn(*args)
    except ConfigError:
        return None


def format_report(cm: ConfusionMatrix, stated_overall: float | None = None) -> str:
    """Plain-text table: counts, then Omissions / Commissions / Map Accuracy.

    ``stated_overall`` is an externally quoted overall accuracy (percent); when
    given, the report lists how far each computed summary is from it.
    """
    first = max(len("Ground Classes"), *(len(s) for s in cm.names))
    widths = [max(len(s), len(str(cm.counts[:, j].max())), 5) for j, s in enumerate(cm.names)]
    tail = ["Omissions", "Commissions", "Map Accuracy"]
    tail_w = [max(len(s), 8) for s in tail]
    lines = ["  ".join(["Ground Classes".ljust(first)]
                       + [s.rjust(w) for s, w in zip(cm.names, widths)]
                       + [s.rjust(w) for s, w in zip(tail, tail_w)])]
    for i, name in enumerate(cm.names):
        metrics = [_safe(omission_fraction, cm, i), _safe(commission_fraction, cm, i),
                   _safe(map_accuracy_fraction, cm, i)]
        lines.append("  ".join([name.ljust(first)]
                               + [str(c).rjust(w) for c, w in zip(cm.counts[i], widths)]
                               + [_pct(m).rjust(w) for m, w in zip(metrics, tail_w)]))
    overall = _safe(overall_accuracy_fraction, cm)
    lines.append("")
    lines.append(f"Overall accuracy (diagonal / total): {_pct(overall)}"
                 f" ({int(np.trace(cm.counts))}/{cm.total})")
    alt = _alternative_summaries(cm)
    lines.append(f"Mean producer's accuracy: {_pct(alt['mean_producer_accuracy'])}")
    lines.append(f"Mean map accuracy: {_pct(alt['mean_map_accuracy'])}")
    if cm.excluded:
        lines.append(f"Excluded (UNKNOWN) pixels: {cm.excluded}")
    if stated_overall is not None:
        lines.append("")
        lines.append(f"Stated overall accuracy: {stated_overall:.2f}%")
        for label, value in _discrepancies(cm, stated_overall).items():
            gap = "n/a" if value is None else f"{value:+.2f} points"
            lines.append(f"  {label} minus stated: {gap}")
    return "\n".join(lines) + "\n"


def _discrepancies(cm: ConfusionMatrix, stated: float) -> dict:
    alt = _alternative_summaries(cm)
    summaries = {"Overall accuracy": _safe(overall_accuracy_fraction, cm),
                 "Mean producer's accuracy": alt["mean_producer_accuracy"],
                 "Mean map accuracy": alt["mean_map_accuracy"]}
    return {k: None if v is None else float(v) - stated for k, v in summaries.items()}


def _alternative_summaries(cm: ConfusionMatrix) -> dict:
    producer = [_safe(lambda i: 100 - omission_fraction(cm, i), i) for i in range(cm.n)]
    maps = [_safe(map_accuracy_fraction, cm, i) for i in range(cm.n)]
    return {
        "mean_producer_accuracy": None if None in producer else sum(producer) / cm.n,
        "mean_map_accuracy": None if None in maps else sum(maps) / cm.n,
    }


def _exact(x) -> dict | None:
    if x is None:
        return None
    return {"percent": float(x), "exact": f"{x.numerator}/{x.denominator}"}


def report_dict(cm: ConfusionMatrix, stated_overall: float | None = None) -> dict:
    classes = []
    for i, name in enumerate(cm.names):
        classes.append({
            "name": name,
            "truth_pixels": cm.row_sum(i),
            "predicted_pixels": cm.col_sum(i),
            "omission": _exact(_safe(omission_fraction, cm, i)),
            "commission": _exact(_safe(commission_fraction, cm, i)),
            "map_accuracy": _exact(_safe(map_accuracy_fraction, cm, i)),
        })
    alt = _alternative_summaries(cm)
    return {
        "classes": classes,
        "counts": cm.counts.tolist(),
        "total": cm.total,
        "excluded_unknown": cm.excluded,
        "overall_accuracy": _exact(_safe(overall_accuracy_fraction, cm)),
        "mean_producer_accuracy": _exact(alt["mean_producer_accuracy"]),
        "mean_map_accuracy": _exact(alt["mean_map_accuracy"]),
        **({} if stated_overall is None else {
            "stated_overall_accuracy": stated_overall,
            "minus_stated": _discrepancies(cm, stated_overall)}),
    }


def write_report(cm: ConfusionMatrix, text_path, json_path, stated_overall: float | None = None) -> None:
    Path(text_path).write_text(format_report(cm, stated_overall))
    Path(json_path).write_text(json.dumps(report_dict(cm, stated_overall), indent=2) + "\n")


def confusion_from_counts(counts: Sequence[Sequence[int]], names: Sequence[str] = ()) -> ConfusionMatrix:
    return ConfusionMatrix(np.asarray(counts), tuple(names))
