import json
import time

import numpy as np
import pytest
from PIL import Image

from elaspoof import cli
from elaspoof.synthetic import write_corpus


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return write_corpus(root, 10, 10, size=24, seed=7)


@pytest.fixture(scope="module")
def trained(tmp_path_factory, corpus):
    out = tmp_path_factory.mktemp("model")
    rc = cli.main(["--seed", "1", "train", "--manifest", str(corpus), "--out", str(out / "m.ckpt"),
                   "--history", str(out / "h.csv"), "--epochs", "1", "--input-size", "16"])
    assert rc == 0
    return out / "m.ckpt"


def run(capsys, *argv):
    rc = cli.main(list(argv))
    out = capsys.readouterr()
    return rc, out.out, out.err


def test_prepare_split_counts(tmp_path, capsys, corpus):
    rc, out, _ = run(capsys, "prepare", "--manifest", str(corpus),
                     "--train-out", str(tmp_path / "tr.csv"), "--test-out", str(tmp_path / "te.csv"))
    assert rc == 0
    assert "train: 14 images (fake 7, real 7)" in out
    assert "test: 6 images (fake 3, real 3)" in out
    lines = (tmp_path / "tr.csv").read_text().splitlines()
    assert lines[0] == "path,label" and len(lines) == 15


def test_prepare_is_reproducible(tmp_path, capsys, corpus):
    outs = []
    for k in range(2):
        run(capsys, "--seed", "9", "prepare", "--manifest", str(corpus),
            "--train-out", str(tmp_path / f"tr{k}.csv"), "--test-out", str(tmp_path / f"te{k}.csv"))
        outs.append(((tmp_path / f"tr{k}.csv").read_bytes(), (tmp_path / f"te{k}.csv").read_bytes()))
    assert outs[0] == outs[1]


def test_prepare_single_class(tmp_path, capsys):
    Image.fromarray(np.zeros((8, 8, 3), np.uint8)).save(tmp_path / "a.png")
    (tmp_path / "m.csv").write_text("path,label\na.png,real\n")
    rc, _, err = run(capsys, "prepare", "--manifest", str(tmp_path / "m.csv"),
                     "--train-out", str(tmp_path / "tr.csv"), "--test-out", str(tmp_path / "te.csv"))
    assert rc != 0
    assert err.startswith("error: invalid-dataset: ")


def test_prepare_warns_on_noise(tmp_path, capsys):
    board = (np.indices((8, 8)).sum(axis=0) % 2 * 255).astype(np.uint8)
    for name in ("a", "b"):
        Image.fromarray(board).save(tmp_path / f"{name}.png")
    (tmp_path / "m.csv").write_text("path,label\na.png,real\nb.png,fake\n")
    rc, _, err = run(capsys, "prepare", "--manifest", str(tmp_path / "m.csv"), "--split", "0.5",
                     "--train-out", str(tmp_path / "tr.csv"), "--test-out", str(tmp_path / "te.csv"))
    assert rc == 0 and "noisy image a.png" in err


def test_train_smoke(tmp_path, capsys, corpus):
    start = time.perf_counter()
    rc, out, _ = run(capsys, "train", "--manifest", str(corpus), "--out", str(tmp_path / "m.ckpt"),
                     "--history", str(tmp_path / "h.csv"), "--epochs", "1", "--input-size", "16")
    assert rc == 0
    assert time.perf_counter() - start < 30
    assert out.startswith("epoch 1: loss ")
    assert len((tmp_path / "h.csv").read_text().splitlines()) == 2


def test_eval_report(tmp_path, capsys, corpus, trained):
    report = tmp_path / "r.json"
    rc, out, _ = run(capsys, "eval", "--manifest", str(corpus), "--model", str(trained), "--report", str(report))
    assert rc == 0
    assert [line.split(":")[0] for line in out.splitlines()[:4]] == ["Recall", "Precision", "F1 Score", "Accuracy"]
    data = json.loads(report.read_text())
    assert {"accuracy", "precision", "recall", "f1"} <= set(data)
    txt = tmp_path / "r.txt"
    run(capsys, "eval", "--manifest", str(corpus), "--model", str(trained), "--report", str(txt))
    assert "accuracy=" in txt.read_text()


def test_eval_corrupt_checkpoint(tmp_path, capsys, corpus):
    (tmp_path / "bad.ckpt").write_bytes(b"ELASPOOF\x01")
    rc, _, err = run(capsys, "eval", "--manifest", str(corpus), "--model", str(tmp_path / "bad.ckpt"))
    assert rc != 0
    assert err.startswith("error: corrupt-checkpoint: ")


def test_predict(capsys, corpus, trained):
    rc, out, _ = run(capsys, "predict", "--image", str(corpus.parent / "fake_0000.png"), "--model", str(trained))
    assert rc == 0
    label, conf = out.strip().removeprefix("Class: ").split(" Confidence: ")
    assert label in ("Fake", "Real")
    assert 50.0 <= float(conf) <= 100.0


@pytest.mark.parametrize("p,text", [
    (0.9667, "Class: Fake Confidence: 96.67"),
    (0.002, "Class: Real Confidence: 99.80"),
    (0.5, "Class: Fake Confidence: 50.00"),
])
def test_prediction_format(p, text):
    assert cli.format_prediction(p) == text


def test_ela_command(tmp_path, capsys, corpus):
    src = corpus.parent / "real_0001.png"
    rc, _, _ = run(capsys, "ela", "--image", str(src), "--out", str(tmp_path / "e.png"))
    assert rc == 0
    assert Image.open(tmp_path / "e.png").size == Image.open(src).size
    rc, _, err = run(capsys, "ela", "--image", str(src), "--out", str(tmp_path / "e.png"), "--quality", "0")
    assert rc != 0 and err.startswith("error: invalid-argument: ")


def test_missing_image(tmp_path, capsys):
    rc, _, err = run(capsys, "ela", "--image", str(tmp_path / "none.png"), "--out", str(tmp_path / "e.png"))
    assert rc == 1 and err.startswith("error: decode: ")


def test_help_shows_defaults(capsys):
    with pytest.raises(SystemExit):
        cli.main(["train", "--help"])
    out = capsys.readouterr().out
    for fragment in ("binary cross-entropy", "ADAM", "(default: 20)", "(default: 32)",
                     "(default: 0.2)", "(default: 0.001)", "--shuffle"):
        assert fragment in out


def test_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["train"])
    assert exc.value.code == 2
    assert capsys.readouterr().err.startswith("error: usage: ")


def test_seed_from_environment(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("ELASPOOF_SEED", "5")
    run(capsys, "synth", "--out-dir", str(tmp_path / "a"), "--n-real", "1", "--n-fake", "1", "--size", "16")
    run(capsys, "--seed", "5", "synth", "--out-dir", str(tmp_path / "b"), "--n-real", "1", "--n-fake", "1", "--size", "16")
    monkeypatch.delenv("ELASPOOF_SEED")
    run(capsys, "synth", "--out-dir", str(tmp_path / "c"), "--n-real", "1", "--n-fake", "1", "--size", "16")
    a, b, c = ((tmp_path / d / "fake_0000.png").read_bytes() for d in "abc")
    assert a == b and a != c
    monkeypatch.setenv("ELASPOOF_SEED", "x")
    rc, _, err = run(capsys, "synth", "--out-dir", str(tmp_path / "d"))
    assert rc == 1 and "ELASPOOF_SEED" in err
