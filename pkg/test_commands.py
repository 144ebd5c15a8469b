import os

import numpy as np
import orjson
import pandas as pd
import pytest

from main import run
from src.commands import cmd_experiment
from src.ingest import SampleRecord, load_manifest, write_manifest
from src.model_io import load_model
from src.nn import build_default_model
from src.run_config import load_run_config

SMALL_INI = """
[synth]
n_per_cell = 5

[train]
epochs = 1
batch_size = 8
image_side = 16

[render]
tile = 8
"""


@pytest.fixture
def corpus(tmp_path):
    ini = tmp_path / "small.ini"
    ini.write_text(SMALL_INI, encoding="utf-8")
    out = tmp_path / "corpus"
    assert run(["synth", "--config", str(ini), "--out-dir", str(out)]) == 0
    return str(ini), str(out)


def _scored_manifest(out_dir, name, with_outputs=True):
    records = load_manifest(os.path.join(out_dir, "manifest.csv")).records
    scored = [
        SampleRecord(r.image_path, r.label, float(r.label) if with_outputs else None, r.split)
        for r in records
    ]
    path = os.path.join(out_dir, name)
    write_manifest(scored, path)
    return path


def _report(out_dir):
    with open(os.path.join(out_dir, "report.txt"), "rb") as f:
        return orjson.loads(f.read())


def test_synth_writes_corpus_and_biased_split(corpus):
    _, out = corpus
    full = load_manifest(os.path.join(out, "manifest.csv"))
    train = load_manifest(os.path.join(out, "train.csv"))
    test = load_manifest(os.path.join(out, "test.csv"))
    assert len(full) == 20
    assert set(train.splits) == {"A"} and len(train) == 8
    assert len(test) == 12 and test.splits.count("B") == 10
    assert all(os.path.exists(r.image_path) for r in full.records)


def test_train_then_saliency(corpus):
    ini, out = corpus
    assert run(["train", "--config", ini, "--out-dir", out]) == 0
    for name in ("model.txt", "history.csv", "history.png"):
        assert os.path.exists(os.path.join(out, name))
    assert list(pd.read_csv(os.path.join(out, "history.csv")).columns) == ["epoch", "loss", "accuracy"]

    images = [os.path.join(out, "images", "A_0_0000.png"), os.path.join(out, "images", "B_1_0001.png")]
    assert run(["saliency", "--config", ini, "--out-dir", out] + images) == 0
    assert os.path.exists(os.path.join(out, "saliency", "A_0_0000_saliency.png"))
    assert os.path.exists(os.path.join(out, "saliency", "B_1_0001_saliency.png"))


def test_audit_uses_manifest_outputs(corpus, tmp_path):
    ini, out = corpus
    manifest = _scored_manifest(out, "scored.csv")
    audit_dir = str(tmp_path / "audit")
    assert run(["audit", "--config", ini, "--manifest", manifest, "--out-dir", audit_dir]) == 0
    for name in ("coords.csv", "layout.csv", "montage.png", "projection.png", "report.txt"):
        assert os.path.exists(os.path.join(audit_dir, name))

    report = _report(audit_dir)
    assert report["samples"] == 20
    assert report["grid"] == {"rows": 4, "cols": 4, "method": "greedy", "hard_labels": False}
    assert report["overall"]["accuracy"] == 1.0
    assert report["grid_overall"]["mean"] == 0.0
    assert set(report["splits"]) == {"A", "B"}
    assert "paths" not in report["config"]
    assert len(pd.read_csv(os.path.join(audit_dir, "layout.csv"))) == 16


def test_report_is_identical_across_output_dirs(corpus, tmp_path):
    ini, out = corpus
    manifest = _scored_manifest(out, "scored.csv")
    first, second = str(tmp_path / "r1"), str(tmp_path / "r2")
    assert run(["report", "--config", ini, "--manifest", manifest, "--out-dir", first]) == 0
    assert run(["report", "--config", ini, "--manifest", manifest, "--out-dir", second]) == 0
    with open(os.path.join(first, "report.txt"), "rb") as a, open(os.path.join(second, "report.txt"), "rb") as b:
        assert a.read() == b.read()
    assert not os.path.exists(os.path.join(first, "montage.png"))


def test_exit_codes(corpus, tmp_path):
    ini, out = corpus
    unscored = _scored_manifest(out, "unscored.csv", with_outputs=False)
    assert run(["audit", "--config", ini, "--manifest", unscored, "--out-dir", str(tmp_path / "x")]) == 2
    assert run(["audit", "--manifest", str(tmp_path / "missing.csv"), "--out-dir", str(tmp_path / "y")]) == 2
    assert run(["audit", "--config", ini, "--out-dir", out, "--alpha", "2"]) == 2
    assert run(["synth", "--log-level", "CHATTY", "--out-dir", str(tmp_path / "z")]) == 2
    assert run(["saliency", "--out-dir", str(tmp_path / "w"), os.path.join(out, "images", "A_0_0000.png")]) == 2
    with pytest.raises(SystemExit):
        run(["calibrate"])


def _small_experiment(out_dir):
    config = load_run_config(
        out_dir=out_dir,
        synth__n_per_cell=8,
        train__epochs=2,
        train__batch_size=8,
        image_side=16,
        tile=8,
        use_augmentation=True,
    )
    return cmd_experiment(config)


def test_small_experiment_is_deterministic(tmp_path):
    first, second = str(tmp_path / "e1"), str(tmp_path / "e2")
    report = _small_experiment(first)
    _small_experiment(second)

    experiment = report["experiment"]
    assert set(experiment["held_out"]) == {"A", "B"}
    assert experiment["half_bias"]["minority"] == "B"
    assert set(experiment["saliency_focus"]) == {"A", "B"}
    assert experiment["final_epoch"]["epoch"] == 2.0
    assert report["config"]["train"]["augment"] is True
    for name in ("report.txt", "model.txt", "coords.csv", "layout.csv", "montage.png", "history.csv"):
        with open(os.path.join(first, name), "rb") as a, open(os.path.join(second, name), "rb") as b:
            assert a.read() == b.read(), name


def test_bias_experiment_with_defaults(tmp_path):
    report = cmd_experiment(load_run_config(out_dir=str(tmp_path)))
    assert report["config"]["synth"]["n_per_cell"] == 200
    assert report["config"]["train"]["epochs"] == 30
    held_out = report["experiment"]["held_out"]
    assert held_out["A"]["accuracy"] >= 0.90
    assert held_out["A"]["accuracy"] - held_out["B"]["accuracy"] >= 0.15
    assert report["experiment"]["half_bias"]["error_gap"] >= 0.15
    assert os.path.exists(os.path.join(str(tmp_path), "montage.png"))


def test_zero_learning_rate_saves_initial_parameters(corpus):
    ini, out = corpus
    assert run(["train", "--config", ini, "--out-dir", out, "--lr", "0"]) == 0
    trained, meta = load_model(os.path.join(out, "model.txt"))
    initial = build_default_model((16, 16, 3), seed=meta["seed"])
    for key, value in initial.parameters().items():
        assert np.array_equal(trained.parameters()[key], value)


def test_grid_larger_than_corpus_and_bad_synth_config(corpus, tmp_path):
    ini, out = corpus
    manifest = _scored_manifest(out, "scored.csv")
    assert run(["audit", "--manifest", manifest, "--out-dir", str(tmp_path / "g"), "--rows", "5", "--cols", "5"]) == 2
    assert not os.path.exists(str(tmp_path / "g" / "report.txt"))

    bad = tmp_path / "bad.ini"
    bad.write_text("[synth]\ntone_a = 2.0\n", encoding="utf-8")
    assert run(["synth", "--config", str(bad), "--out-dir", str(tmp_path / "s")]) == 2
