"""Batch command-line frontend.

Every command writes its outputs into a private staging directory and only
moves them into ``--out-dir`` once everything succeeded, together with a
``manifest.json`` recording every resolved option. ``landcover rerun
MANIFEST`` replays a run from its manifest.

Exit codes: 0 success, 1 usage error, 2 data/format error,
3 numeric/config error.
"""
from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .ann import (DEFAULT_HIDDEN, DEFAULT_TAU, TrainConfig, classify_raster, extract_training_pairs,
                  init_weights, load_model, load_signature_set, save_model, save_signature_set,
                  train)
from .eval import confusion_matrix, write_report
from .exceptions import ConfigError, FormatError
from .kmeans import KmeansConfig, cluster, save_cluster_model
from .raster import (LabelMap, identity_normalization, load_label_map, load_raster, median_filter,
                     normalize_bands, render_thematic, save_label_map, save_raster)
from .synth import make_scene

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONFIG = 0, 1, 2, 3

DEFAULT_SAMPLES_PER_CLASS = 500


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Staging and manifests


class Stage:
    """Collects output files in a temporary directory next to ``out_dir``."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        parent = self.out_dir.resolve().parent
        if not parent.is_dir():
            raise FormatError(f"parent directory of --out-dir does not exist: {parent}")
        self.dir = Path(tempfile.mkdtemp(prefix=".landcover-stage-", dir=parent))

    def path(self, name: str) -> Path:
        return self.dir / name

    def commit(self) -> list[str]:
        self.out_dir.mkdir(exist_ok=True)
        names = sorted(os.listdir(self.dir))
        for name in names:
            os.replace(self.dir / name, self.out_dir / name)
        self.discard()
        return names

    def discard(self):
        shutil.rmtree(self.dir, ignore_errors=True)


def _manifest_args(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _write_manifest(stage: Stage, args, started: float, extra: dict | None = None) -> None:
    outputs = sorted(os.listdir(stage.dir)) + ["manifest.json"]
    manifest = {
        "command": args.command,
        "version": __version__,
        "args": _manifest_args(args),
        "outputs": sorted(outputs),
        "started_utc": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "elapsed_seconds": round(time.time() - started, 6),
    }
    if extra:
        manifest.update(extra)
    stage.path("manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _staged(fn):
    """Run ``fn(args, stage)`` and publish its outputs atomically on success."""
    def run(args):
        started = time.time()
        stage = Stage(args.out_dir)
        try:
            extra = fn(args, stage)
            _write_manifest(stage, args, started, extra)
            stage.commit()
        except BaseException:
            stage.discard()
            raise
    run.__name__ = fn.__name__
    return run


def _preprocessed(r, args):
    if args.median_window:
        r = median_filter(r, args.median_window)
    if args.normalize:
        norm, params = normalize_bands(r)
        return r, norm, params
    return r, None, identity_normalization(r.bands)


def _check_window(window: int) -> None:
    if window < 0 or (window and window % 2 == 0):
        raise ConfigError(f"--median-window must be 0 (off) or a positive odd number, got {window}")


# ---------------------------------------------------------------------------
# Commands


@_staged
def cmd_kmeans(args, stage):
    _check_window(args.median_window)
    cfg = KmeansConfig(k=args.k, max_iterations=args.max_iter, tolerance=args.tol,
                       median_window=args.median_window, normalize=args.normalize)
    r = load_raster(args.raster)
    model, lm = cluster(r, cfg)
    save_label_map(lm, stage.path("labels.hdr"))
    save_cluster_model(model, stage.path("cluster_model.json"))
    return {"iterations_run": model.iterations_run}


def _train_config(args) -> TrainConfig:
    return TrainConfig(eta=args.eta, epochs=args.epochs, seed=args.seed, shuffle=args.shuffle)


def _write_trace(trace, path) -> None:
    rows = ["epoch,mean_error"] + [f"{e},{float(x)!r}" for e, x in enumerate(trace, 1)]
    Path(path).write_text("\n".join(rows) + "\n")


@_staged
def cmd_train(args, stage):
    _check_window(args.median_window)
    cfg = _train_config(args)
    r = load_raster(args.raster)
    sig = load_signature_set(args.signatures)
    if args.median_window:
        r = median_filter(r, args.median_window)
    if args.resume:
        model = load_model(args.resume)
        if model.l != r.bands:
            raise FormatError(f"--resume model expects {model.l} bands, raster has {r.bands}")
        if model.n != len(sig.classes):
            raise FormatError(f"--resume model has {model.n} classes, signatures have {len(sig.classes)}")
        norm_params = model.norm_params
    else:
        norm_params = normalize_bands(r)[1] if args.normalize else identity_normalization(r.bands)
        model = init_weights(r.bands, args.hidden, len(sig.classes), args.seed, tau=args.tau,
                             legend=sig.legend, norm_params=norm_params)
    pairs = extract_training_pairs(r, sig, norm_params)
    model, trace = train(model, pairs, cfg)
    save_model(model, stage.path("model.json"))
    _write_trace(trace, stage.path("error_trace.csv"))
    return {"training_pairs": len(pairs), "first_epoch_error": float(trace[0]),
            "final_epoch_error": float(trace[-1])}


@_staged
def cmd_classify(args, stage):
    _check_window(args.median_window)
    model = load_model(args.model)
    r = load_raster(args.raster)
    if args.median_window:
        r = median_filter(r, args.median_window)
    save_label_map(classify_raster(model, r), stage.path("labels.hdr"))


def pseudo_label_pairs(pixels: np.ndarray, labels: np.ndarray, k: int, per_class: int, seed: int):
    """Sample up to ``per_class`` pixels of every cluster as one-hot training pairs."""
    rng = np.random.default_rng(seed)
    chosen, targets = [], []
    for j in range(k):
        idx = np.flatnonzero(labels == j)
        if len(idx) > per_class:
            idx = np.sort(rng.choice(idx, size=per_class, replace=False))
        chosen.append(idx)
        targets.append(np.full(len(idx), j))
    chosen = np.concatenate(chosen)
    return pixels[chosen], np.eye(k)[np.concatenate(targets)]


@_staged
def cmd_unsup_ann(args, stage):
    _check_window(args.median_window)
    if args.samples_per_class < 1:
        raise ConfigError("--samples-per-class must be >= 1")
    kcfg = KmeansConfig(k=args.k, max_iterations=args.max_iter, tolerance=args.tol,
                        median_window=args.median_window, normalize=args.normalize)
    tcfg = _train_config(args)
    r = load_raster(args.raster)
    _, km_labels = cluster(r, kcfg)
    filtered, norm, norm_params = _preprocessed(r, args)
    pixels = (norm if norm is not None else filtered).pixels()
    P, C = pseudo_label_pairs(pixels, km_labels.labels.reshape(-1), args.k,
                              args.samples_per_class, args.seed)
    model = init_weights(r.bands, args.hidden, args.k, args.seed, tau=args.tau,
                         legend=km_labels.legend, norm_params=norm_params)
    model, trace = train(model, (P, C), tcfg)
    lm = classify_raster(model, filtered)
    save_label_map(lm, stage.path("labels.hdr"))
    save_label_map(km_labels, stage.path("kmeans_labels.hdr"))
    save_model(model, stage.path("model.json"))
    _write_trace(trace, stage.path("error_trace.csv"))
    return {"training_pairs": int(len(P))}


@_staged
def cmd_evaluate(args, stage):
    truth = load_label_map(args.truth)
    predicted = load_label_map(args.predicted)
    cm = confusion_matrix(truth, predicted)
    write_report(cm, stage.path("report.txt"), stage.path("metrics.json"), args.stated_overall)


def cmd_render(args):
    lm = load_label_map(args.labels)
    out = Path(args.out)
    fd, tmp = tempfile.mkstemp(prefix=".landcover-", suffix=".ppm", dir=out.resolve().parent)
    os.close(fd)
    try:
        render_thematic(lm, tmp)
        os.replace(tmp, out)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _parse_means(text: str | None, classes: int, bands: int):
    if text is None:
        return None
    try:
        rows = [[float(x) for x in row.split(",")] for row in text.split(";")]
    except ValueError:
        raise ConfigError(f"--means must look like 'a,b,c;d,e,f', got {text!r}") from None
    if len(rows) != classes or any(len(r) != bands for r in rows):
        raise ConfigError(f"--means needs {classes} rows of {bands} values")
    return np.array(rows)


def _parse_spreads(text: str):
    try:
        values = [float(x) for x in text.split(";")]
    except ValueError:
        raise ConfigError(f"--spread must be a number or 'a;b;...', got {text!r}") from None
    return values[0] if len(values) == 1 else np.array(values)


@_staged
def cmd_synth(args, stage):
    names = args.names.split(",") if args.names else None
    r, truth, sig = make_scene(
        args.classes, args.bands, args.width, args.height,
        means=_parse_means(args.means, args.classes, args.bands),
        spreads=_parse_spreads(args.spread), grid=args.grid, seed=args.seed, dtype=args.dtype,
        names=names, layout=args.layout)
    save_raster(r, stage.path("scene.hdr"))
    save_label_map(truth, stage.path("truth.hdr"))
    save_signature_set(sig.__class__(sig.classes, "scene.hdr"), stage.path("signatures.json"))


def cmd_rerun(args):
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        recorded = dict(manifest["args"])
        command = manifest["command"]
    except FileNotFoundError:
        raise FormatError(f"manifest not found: {args.manifest}") from None
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{args.manifest}: malformed manifest ({exc})") from None
    if command not in COMMANDS or command in ("rerun", "render"):
        raise FormatError(f"{args.manifest}: cannot replay command {command!r}")
    if args.out_dir is not None:
        recorded["out_dir"] = args.out_dir
    recorded["command"] = command
    COMMANDS[command](argparse.Namespace(**recorded))


COMMANDS = {
    "kmeans": cmd_kmeans,
    "train": cmd_train,
    "classify": cmd_classify,
    "unsup-ann": cmd_unsup_ann,
    "evaluate": cmd_evaluate,
    "render": cmd_render,
    "synth": cmd_synth,
    "rerun": cmd_rerun,
}


# ---------------------------------------------------------------------------
# Argument parsing


def _shared(p, out_dir=True):
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default: %(default)s)")
    p.add_argument("--median-window", type=int, default=0,
                   help="odd median-filter window, 0 = off (default: %(default)s)")
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=True,
                   help="per-band min-max scaling to [0, 1] (default: on)")
    if out_dir:
        p.add_argument("--out-dir", default="landcover-out",
                       help="output directory (default: %(default)s)")


def _kmeans_flags(p, k_required=True):
    p.add_argument("--k", type=int, required=k_required, help="number of classes (required)")
    p.add_argument("--max-iter", type=int, default=100, help="iteration cap (default: %(default)s)")
    p.add_argument("--tol", type=float, default=1e-6,
                   help="max per-component mean shift counted as converged (default: %(default)s)")


def _train_flags(p):
    p.add_argument("--eta", type=float, default=0.2, help="learning rate in (0, 1] (default: %(default)s)")
    p.add_argument("--epochs", type=int, default=500, help="passes over the training set (default: %(default)s)")
    p.add_argument("--hidden", type=int, default=DEFAULT_HIDDEN, help="hidden units (default: %(default)s)")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU,
                   help="output threshold; below it a pixel is UNKNOWN (default: %(default)s)")
    p.add_argument("--shuffle", action="store_true", default=False,
                   help="reshuffle pattern order every epoch, seeded (default: off)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="landcover", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("kmeans", help="range-seeded k-means classification")
    p.add_argument("raster", help="raster header path")
    _kmeans_flags(p)
    _shared(p)

    p = sub.add_parser("train", help="train the perceptron on a signature set")
    p.add_argument("raster", help="raster header path")
    p.add_argument("signatures", help="signature set (JSON)")
    _train_flags(p)
    p.add_argument("--resume", default=None, help="continue training this model file (default: none)")
    _shared(p)

    p = sub.add_parser("classify", help="classify a raster with a trained model")
    p.add_argument("model", help="model file")
    p.add_argument("raster", help="raster header path")
    _shared(p)

    p = sub.add_parser("unsup-ann", help="k-means pseudo-labels -> perceptron -> full classification")
    p.add_argument("raster", help="raster header path")
    _kmeans_flags(p)
    _train_flags(p)
    p.add_argument("--samples-per-class", type=int, default=DEFAULT_SAMPLES_PER_CLASS,
                   help="pixels sampled per cluster for training (default: %(default)s)")
    _shared(p)

    p = sub.add_parser("evaluate", help="confusion matrix and accuracy report")
    p.add_argument("truth", help="ground-truth label map header")
    p.add_argument("predicted", help="predicted label map header")
    p.add_argument("--stated-overall", type=float, default=None,
                   help="externally quoted overall accuracy (percent) to compare against (default: none)")
    _shared(p)

    p = sub.add_parser("render", help="write a label map as a P6 pixmap")
    p.add_argument("labels", help="label map header")
    p.add_argument("out", help="output .ppm path")

    p = sub.add_parser("synth", help="generate a synthetic scene, truth map and signatures")
    p.add_argument("--classes", type=int, default=5, help="number of classes (default: %(default)s)")
    p.add_argument("--bands", type=int, default=3, help="number of bands (default: %(default)s)")
    p.add_argument("--width", type=int, default=128, help="width in pixels (default: %(default)s)")
    p.add_argument("--height", type=int, default=128, help="height in pixels (default: %(default)s)")
    p.add_argument("--grid", type=int, default=4, help="blocks per side (default: %(default)s)")
    p.add_argument("--means", default=None,
                   help="per-class band means 'a,b,c;d,e,f;...' (default: evenly spaced 20..225)")
    p.add_argument("--spread", default="4.0",
                   help="noise standard deviation, one value or one per class 'a;b;...' (default: %(default)s)")
    p.add_argument("--dtype", choices=("u8", "u16", "f64"), default="u8",
                   help="sample type (default: %(default)s)")
    p.add_argument("--layout", choices=("runs", "cyclic"), default="runs",
                   help="block-to-class arrangement (default: %(default)s)")
    p.add_argument("--names", default=None, help="comma-separated class names (default: class_0, ...)")
    _shared(p)

    p = sub.add_parser("rerun", help="replay a run from its manifest")
    p.add_argument("manifest", help="manifest.json of an earlier run")
    p.add_argument("--out-dir", default=None, help="output directory (default: the one recorded in the manifest)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"landcover {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, OSError) as exc:
        print(f"landcover {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
