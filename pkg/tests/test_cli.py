import json
import shutil
from pathlib import Path

import pytest

from swinlesion.cli import main
from swinlesion.data.dataset import parse_stats_report
from swinlesion.data.split import read_manifest_meta

ROOT = Path(__file__).resolve().parents[1]
TINY = str(ROOT / "configs" / "tiny.yaml")


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("fixture")
    assert main(["synth", "--out", str(d / "data"), "--counts", "12,10,8,8,6,6,5,5", "--size", "20",
                 "--seed", "3"]) == 0
    return d


def _split(fixture_dir, out, seed="7"):
    return main(["split", "--gt", str(fixture_dir / "data" / "ground_truth.csv"), "--seed", seed,
                 "--out", str(out)])


def test_stats_report(fixture_dir, tmp_path, capsys):
    out = tmp_path / "stats.txt"
    code = main(["stats", "--gt", str(fixture_dir / "data" / "ground_truth.csv"),
                 "--dataset", str(fixture_dir / "data"), "--out", str(out), "--seed", "4"])
    assert code == 0
    rep = parse_stats_report(out.read_text())
    counts = [int(v) for k, v in rep.items() if k.startswith("count.")]
    assert len(counts) == 8 and sum(counts) == int(rep["total"]) == 60
    assert rep["seed"] == "4" and json.loads(rep["config"])["seed"] == 4


def test_stats_empty_csv(tmp_path, capsys):
    gt = tmp_path / "gt.csv"
    gt.write_text("image,MEL,NV\n")
    assert main(["stats", "--gt", str(gt)]) == 2
    assert "empty dataset" in capsys.readouterr().err


def test_stats_missing_csv(tmp_path, capsys):
    assert main(["stats", "--gt", str(tmp_path / "nope.csv")]) != 0
    assert "nope.csv" in capsys.readouterr().err


def test_split_deterministic_and_validated(fixture_dir, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert _split(fixture_dir, a) == 0 and _split(fixture_dir, b) == 0
    assert a.read_bytes() == b.read_bytes()
    meta = read_manifest_meta(a)
    assert meta["seed"] == 7 and meta["config"]["seed"] == 7 and len(meta["class_names"]) == 8
    assert main(["split", "--gt", str(fixture_dir / "data" / "ground_truth.csv"),
                 "--fractions", "0.7,0.2,0.2", "--out", str(tmp_path / "c.csv")]) == 2


def test_augment_threshold_and_idempotence(fixture_dir, tmp_path):
    manifest = tmp_path / "split.csv"
    _split(fixture_dir, manifest)
    data = str(fixture_dir / "data")
    none = tmp_path / "none"
    assert main(["augment", "--manifest", str(manifest), "--dataset", data, "--out", str(none),
                 "--threshold", "2000", "--multiplier", "1"]) == 0
    lines = [ln for ln in (none / "augment_manifest.csv").read_text().splitlines() if not ln.startswith("#")]
    assert lines == ["source,seed,transform,params,output_path"]

    out = tmp_path / "aug"
    args = ["augment", "--manifest", str(manifest), "--dataset", data, "--out", str(out), "--threshold", "6",
            "--multiplier", "2"]
    assert main(args) == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert main(args) == 0
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first
    # largest remainder puts 8,7,6,6,4,4,3,3 images of the 8 classes in train; those under 6 get one copy
    assert len(first) - 1 == 4 + 4 + 3 + 3


def test_train_twice_identical_then_eval(fixture_dir, tmp_path):
    manifest = tmp_path / "split.csv"
    _split(fixture_dir, manifest)
    common = ["train", "--config", TINY, "--seed", "1", "--manifest", str(manifest),
              "--dataset", str(fixture_dir / "data"), "--out", str(tmp_path / "run"), "--epochs", "2"]
    assert main(common) == 0
    shutil.copytree(tmp_path / "run", tmp_path / "first")
    assert main(common) == 0
    for name in ("report.json", "checkpoint.ckpt", "history.csv", "config.yaml"):
        assert (tmp_path / "run" / name).read_bytes() == (tmp_path / "first" / name).read_bytes()
    report = json.loads((tmp_path / "run" / "report.json").read_text())
    assert report["config"]["seed"] == 1 and set(report["splits"]) == {"train", "val", "test"}
    history = (tmp_path / "run" / "history.csv").read_text().splitlines()
    assert history[1] == "epoch,train_loss,val_loss,val_acc,lr" and len(history) == 4

    assert main(["eval", "--checkpoint", str(tmp_path / "run" / "checkpoint.ckpt"), "--manifest", str(manifest),
                 "--dataset", str(fixture_dir / "data"), "--split", "test"]) == 0
    ev = json.loads((tmp_path / "run" / "eval_test.json").read_text())
    assert ev["splits"]["test"]["accuracy"] == report["splits"]["test"]["accuracy"]


def test_eval_class_count_mismatch(fixture_dir, tmp_path, capsys):
    manifest = tmp_path / "split.csv"
    _split(fixture_dir, manifest)
    cfg = tmp_path / "four.yaml"
    cfg.write_text(Path(TINY).read_text().replace("num_classes: 8", "num_classes: 4"))
    # a 4-class checkpoint trained on a 4-class fixture, evaluated on the 8-class manifest
    four = tmp_path / "four"
    main(["synth", "--out", str(four), "--counts", "6,6,6,6", "--size", "16"])
    main(["split", "--gt", str(four / "ground_truth.csv"), "--out", str(four / "split.csv")])
    assert main(["train", "--config", str(cfg), "--manifest", str(four / "split.csv"), "--dataset", str(four),
                 "--out", str(tmp_path / "run4"), "--epochs", "1"]) == 0
    code = main(["eval", "--checkpoint", str(tmp_path / "run4" / "checkpoint.ckpt"), "--manifest", str(manifest),
                 "--dataset", str(fixture_dir / "data")])
    assert code == 2
    assert "classes" in capsys.readouterr().err


def test_train_config_errors(fixture_dir, tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model:\n  widht: 3\n")
    assert main(["train", "--config", str(bad)]) == 2
    assert "widht" in capsys.readouterr().err
    assert main(["train", "--config", TINY]) == 2  # no manifest given anywhere


def test_usage_errors():
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["split", "--fractions", "a,b"]) == 2


def test_gradcheck_tiny_config(tmp_path, capsys):
    out = tmp_path / "gc.txt"
    assert main(["gradcheck", "--config", TINY, "--out", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert all(ln.startswith("PASS") for ln in lines[:-1])
    assert out.read_text().startswith("# {")
