import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from landcover.ann import SignatureClass, SignatureSet, load_model, save_signature_set, signature_masks
from landcover.cli import build_parser, main
from landcover.eval import best_match_agreement
from landcover.raster import (LabelMap, Raster, default_legend, load_label_map, load_raster,
                              read_pixmap, save_label_map, save_raster)

from conftest import REFERENCE_PRINTED, reference_label_maps


def digest(directory, skip=("manifest.json",)):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(directory.iterdir()) if p.name not in skip}


@pytest.fixture(scope="module")
def blobs(tmp_path_factory):
    """Two-class single-band scene (values near 10 and 200) with signatures."""
    d = tmp_path_factory.mktemp("blobs")
    rng = np.random.default_rng(5)
    truth = np.zeros((16, 16), dtype=int)
    truth[8:] = 1
    values = np.where(truth == 0, 10, 200) + rng.integers(-2, 3, truth.shape)
    save_raster(Raster(values.astype(np.uint8)[np.newaxis]), d / "scene.hdr")
    save_label_map(LabelMap(truth, default_legend(2)), d / "truth.hdr")
    legend = default_legend(2)
    sig = SignatureSet((SignatureClass(legend[0][0], legend[0][1], ((2, 2, 4, 3),)),
                        SignatureClass(legend[1][0], legend[1][1], ((9, 11, 4, 3),))))
    save_signature_set(sig, d / "sig.json")
    return d


def run(*argv):
    return main([str(a) for a in argv])


class TestSynth:
    def test_outputs_and_determinism(self, tmp_path):
        for name in ("a", "b"):
            assert run("synth", "--width", 40, "--height", 30, "--seed", 3, "--out-dir", tmp_path / name) == 0
        assert digest(tmp_path / "a") == digest(tmp_path / "b")
        names = set(p.name for p in (tmp_path / "a").iterdir())
        assert {"scene.hdr", "scene.bsq", "truth.hdr", "truth.bsq", "truth.legend",
                "signatures.json", "manifest.json"} <= names

    def test_means_and_spread_flags(self, tmp_path):
        assert run("synth", "--classes", 2, "--bands", 2, "--width", 8, "--height", 8, "--grid", 2,
                   "--means", "10,20;90,80", "--spread", "0", "--out-dir", tmp_path / "s") == 0
        r = load_raster(tmp_path / "s" / "scene.hdr")
        assert set(map(tuple, r.pixels().tolist())) == {(10.0, 20.0), (90.0, 80.0)}
        assert run("synth", "--classes", 2, "--means", "1,2", "--out-dir", tmp_path / "t") == 3


class TestKmeans:
    def test_two_blobs(self, blobs, tmp_path):
        assert run("kmeans", blobs / "scene.hdr", "--k", 2, "--out-dir", tmp_path / "k") == 0
        lm = load_label_map(tmp_path / "k" / "labels.hdr")
        truth = load_label_map(blobs / "truth.hdr")
        assert best_match_agreement(truth.labels, lm.labels)[0] == 1.0
        manifest = json.loads((tmp_path / "k" / "manifest.json").read_text())
        assert manifest["args"]["k"] == 2 and manifest["args"]["tol"] == 1e-6
        assert (tmp_path / "k" / "cluster_model.json").exists()

    def test_missing_input_leaves_nothing(self, tmp_path):
        assert run("kmeans", tmp_path / "nope.hdr", "--k", 2, "--out-dir", tmp_path / "o") == 2
        assert not (tmp_path / "o").exists()
        assert list(tmp_path.iterdir()) == []

    def test_bad_k(self, blobs, tmp_path, capsys):
        assert run("kmeans", blobs / "scene.hdr", "--k", 0, "--out-dir", tmp_path / "o") == 3
        assert "k must be" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run("kmeans")
        assert exc.value.code == 1


class TestTrainClassify:
    def test_train_then_classify(self, blobs, tmp_path):
        assert run("train", blobs / "scene.hdr", blobs / "sig.json", "--epochs", 200,
                   "--out-dir", tmp_path / "t") == 0
        trace = np.loadtxt(tmp_path / "t" / "error_trace.csv", delimiter=",", skiprows=1)
        assert trace.shape == (200, 2) and trace[-1, 1] < trace[0, 1]
        assert run("classify", tmp_path / "t" / "model.json", blobs / "scene.hdr",
                   "--out-dir", tmp_path / "c") == 0
        lm = load_label_map(tmp_path / "c" / "labels.hdr")
        from landcover.ann import load_signature_set
        masks = signature_masks(load_signature_set(blobs / "sig.json"), 16, 16)
        hits = sum(int((lm.labels[m] == j).sum()) for j, m in enumerate(masks))
        assert hits / sum(int(m.sum()) for m in masks) >= 0.95

    def test_overlapping_signatures(self, blobs, tmp_path):
        legend = default_legend(2)
        sig = SignatureSet((SignatureClass("a", legend[0][1], ((0, 0, 4, 4),)),
                            SignatureClass("b", legend[1][1], ((2, 2, 4, 4),))))
        save_signature_set(sig, tmp_path / "bad.json")
        assert run("train", blobs / "scene.hdr", tmp_path / "bad.json", "--out-dir", tmp_path / "t") == 2
        assert not (tmp_path / "t").exists()

    def test_resume_band_mismatch(self, blobs, tmp_path):
        assert run("train", blobs / "scene.hdr", blobs / "sig.json", "--epochs", 5,
                   "--out-dir", tmp_path / "t") == 0
        three = Raster(np.zeros((3, 16, 16), dtype=np.uint8))
        save_raster(three, tmp_path / "three.hdr")
        assert run("train", tmp_path / "three.hdr", blobs / "sig.json", "--resume",
                   tmp_path / "t" / "model.json", "--out-dir", tmp_path / "r") == 2

    def test_resume_continues(self, blobs, tmp_path):
        assert run("train", blobs / "scene.hdr", blobs / "sig.json", "--epochs", 5,
                   "--out-dir", tmp_path / "t") == 0
        assert run("train", blobs / "scene.hdr", blobs / "sig.json", "--epochs", 5, "--resume",
                   tmp_path / "t" / "model.json", "--out-dir", tmp_path / "r") == 0
        first = load_model(tmp_path / "t" / "model.json")
        second = load_model(tmp_path / "r" / "model.json")
        assert second.norm_params == first.norm_params and second != first

    def test_constant_raster(self, blobs, tmp_path):
        assert run("train", blobs / "scene.hdr", blobs / "sig.json", "--epochs", 50,
                   "--out-dir", tmp_path / "t") == 0
        save_raster(Raster(np.full((1, 5, 5), 77, dtype=np.uint8)), tmp_path / "flat.hdr")
        assert run("classify", tmp_path / "t" / "model.json", tmp_path / "flat.hdr",
                   "--out-dir", tmp_path / "c") == 0
        assert len(np.unique(load_label_map(tmp_path / "c" / "labels.hdr").labels)) == 1

    def test_corrupt_model(self, blobs, tmp_path):
        (tmp_path / "m.json").write_text('{"format": "landcover-mlp", "w": [[1')
        assert run("classify", tmp_path / "m.json", blobs / "scene.hdr", "--out-dir", tmp_path / "c") == 2
        assert not (tmp_path / "c").exists()


class TestUnsupAnn:
    def test_agrees_with_kmeans(self, blobs, tmp_path):
        assert run("unsup-ann", blobs / "scene.hdr", "--k", 2, "--epochs", 200,
                   "--out-dir", tmp_path / "u") == 0
        mlp = load_label_map(tmp_path / "u" / "labels.hdr")
        km = load_label_map(tmp_path / "u" / "kmeans_labels.hdr")
        assert (mlp.labels == km.labels).mean() >= 0.9

    def test_single_class(self, blobs, tmp_path):
        assert run("unsup-ann", blobs / "scene.hdr", "--k", 1, "--epochs", 50,
                   "--out-dir", tmp_path / "u") == 0
        assert (load_label_map(tmp_path / "u" / "labels.hdr").labels == 0).all()

    def test_same_seed_same_files(self, blobs, tmp_path):
        for name in ("a", "b"):
            assert run("unsup-ann", blobs / "scene.hdr", "--k", 2, "--epochs", 20, "--shuffle",
                       "--samples-per-class", 30, "--seed", 9, "--out-dir", tmp_path / name) == 0
        assert digest(tmp_path / "a") == digest(tmp_path / "b")


class TestEvaluate:
    def test_identical(self, blobs, tmp_path):
        t = blobs / "truth.hdr"
        assert run("evaluate", t, t, "--out-dir", tmp_path / "e") == 0
        metrics = json.loads((tmp_path / "e" / "metrics.json").read_text())
        assert metrics["overall_accuracy"]["percent"] == 100.0
        assert all(c["omission"]["percent"] == 0 and c["commission"]["percent"] == 0
                   for c in metrics["classes"])

    def test_reference_table(self, tmp_path):
        truth, pred = reference_label_maps()
        save_label_map(truth, tmp_path / "t.hdr")
        save_label_map(pred, tmp_path / "p.hdr")
        assert run("evaluate", tmp_path / "t.hdr", tmp_path / "p.hdr", "--stated-overall", 90.70,
                   "--out-dir", tmp_path / "e") == 0
        metrics = json.loads((tmp_path / "e" / "metrics.json").read_text())
        for cls, printed in zip(metrics["classes"], REFERENCE_PRINTED):
            got = (cls["omission"]["percent"], cls["commission"]["percent"],
                   cls["map_accuracy"]["percent"])
            assert all(abs(a - b) <= 0.01 for a, b in zip(got, printed))
        report = (tmp_path / "e" / "report.txt").read_text()
        assert "93.49%" in report and "Overall accuracy minus stated: +2.79 points" in report
        assert metrics["minus_stated"]["Mean producer's accuracy"] == pytest.approx(0.15, abs=0.01)

    def test_dimension_mismatch(self, blobs, tmp_path):
        save_label_map(LabelMap(np.zeros((3, 3), dtype=int), default_legend(2)), tmp_path / "s.hdr")
        assert run("evaluate", blobs / "truth.hdr", tmp_path / "s.hdr", "--out-dir", tmp_path / "e") == 2


class TestRender:
    def test_bytes(self, tmp_path):
        lm = LabelMap(np.array([[0, 1]]), (("a", (255, 0, 0)), ("b", (0, 255, 0))))
        save_label_map(lm, tmp_path / "l.hdr")
        assert run("render", tmp_path / "l.hdr", tmp_path / "o.ppm") == 0
        assert (tmp_path / "o.ppm").read_bytes() == b"P6\n2 1\n255\n\xff\x00\x00\x00\xff\x00"

    def test_unknown_black(self, tmp_path):
        save_label_map(LabelMap(np.full((2, 2), 1), default_legend(1)), tmp_path / "l.hdr")
        assert run("render", tmp_path / "l.hdr", tmp_path / "o.ppm") == 0
        assert (read_pixmap(tmp_path / "o.ppm") == 0).all()

    def test_missing(self, tmp_path):
        assert run("render", tmp_path / "none.hdr", tmp_path / "o.ppm") == 2
        assert list(tmp_path.iterdir()) == []


class TestManifestRerun:
    def test_rerun_bit_identical(self, blobs, tmp_path):
        assert run("train", blobs / "scene.hdr", blobs / "sig.json", "--epochs", 30, "--shuffle",
                   "--seed", 4, "--out-dir", tmp_path / "a") == 0
        assert run("rerun", tmp_path / "a" / "manifest.json", "--out-dir", tmp_path / "b") == 0
        assert digest(tmp_path / "a") == digest(tmp_path / "b")

    def test_bad_manifest(self, tmp_path):
        (tmp_path / "m.json").write_text("{}")
        assert run("rerun", tmp_path / "m.json") == 2


def test_help_lists_every_flag_with_default():
    parser = build_parser()
    subparsers = parser._subparsers._group_actions[0].choices
    for name, sub in subparsers.items():
        text = sub.format_help()
        for action in sub._actions:
            if not action.option_strings or action.dest == "help":
                continue
            assert action.option_strings[0] in text
            assert "default" in (action.help or "") or "required" in (action.help or ""), \
                f"{name} {action.option_strings[0]} help omits its default"


def test_console_script_entry(tmp_path):
    out = subprocess.run([sys.executable, "-m", "landcover.cli", "synth", "--width", "8", "--height", "8",
                          "--classes", "2", "--grid", "2", "--out-dir", str(tmp_path / "s")],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "s" / "scene.hdr").exists()
