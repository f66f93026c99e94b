import csv
import json

import numpy as np
import pytest

from qmvit import checkpoint
from qmvit.cli import main
from qmvit.config import build_model, load_config
from qmvit.data import read_manifest, resolve
from qmvit.qsim import dump_circuit, parse_circuit


def small_args(manifest, out, *extra):
    return ["train", "--preset", "vit", "--manifest", str(manifest), "--out_dir", str(out),
            "--image_size", "8", "--embed_dim", "8", "--mlp_hidden", "8", *extra]


def test_train_writes_run_directory(small_toyset, tmp_path, capsys):
    assert main(small_args(small_toyset, tmp_path / "r", "--epochs", "2")) == 0
    summary = json.loads(capsys.readouterr().out)
    files = {p.name for p in (tmp_path / "r").iterdir()}
    assert {"config.txt", "loss_curve.csv", "model.ckpt", "metrics.json", "confusion.csv",
            "edibility.json"} <= files
    rows = list(csv.reader(open(tmp_path / "r" / "loss_curve.csv")))
    assert rows[0] == ["epoch", "train_loss", "val_loss", "val_accuracy"] and len(rows) == 3
    assert summary["epochs"] == 2
    assert "epochs = 2" in (tmp_path / "r" / "config.txt").read_text()


def test_zero_epochs_saves_initialisation(small_toyset, tmp_path):
    assert main(small_args(small_toyset, tmp_path, "--epochs", "0", "--seed", "4")) == 0
    rows = list(csv.reader(open(tmp_path / "loss_curve.csv")))
    assert len(rows) == 1
    params, meta = checkpoint.load(tmp_path / "model.ckpt")
    cfg = load_config(preset="vit", overrides={"image_size": "8", "embed_dim": "8", "mlp_hidden": "8"})
    init = build_model(cfg, meta["n_classes"]).init_params(np.random.default_rng(4))
    assert params.keys() == init.keys()
    assert all(np.array_equal(params[k], init[k]) for k in init)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_exit_codes(small_toyset, tmp_path, capsys):
    assert main(["train", "--preset", "vit", "--manifest", str(tmp_path / "none.csv")]) == 2
    assert main(small_args(small_toyset, tmp_path, "--lr", "-1")) == 3
    assert main(["train", "--preset", "qmvit-4q1l", "--embed_dim", "6", "--manifest", str(small_toyset)]) == 3
    assert main(["eval", "--checkpoint", str(tmp_path / "none.ckpt")]) == 2
    # a learning rate this large overflows the logits within a few steps
    code = main(small_args(small_toyset, tmp_path / "nan", "--epochs", "5", "--lr", "1e300"))
    assert code == 4
    assert "numeric error" in capsys.readouterr().err


def test_eval_reproduces_training_accuracy(small_toyset, tmp_path, capsys):
    assert main(small_args(small_toyset, tmp_path / "r", "--epochs", "3")) == 0
    train_acc = json.loads(capsys.readouterr().out)["train_accuracy"]
    assert main(["eval", "--checkpoint", str(tmp_path / "r" / "model.ckpt"), "--split", "train",
                 "--out", str(tmp_path / "e")]) == 0
    rep = json.loads((tmp_path / "e" / "metrics.json").read_text())
    assert abs(rep["accuracy"] - train_acc) <= 1e-12
    cm = np.array([[int(v) for v in r[1:]] for r in list(csv.reader(open(tmp_path / "e" / "confusion.csv")))[1:]])
    assert cm.sum(axis=1).tolist() == [5, 5, 5]  # 80% of six images per class
    edi = json.loads((tmp_path / "e" / "edibility.json").read_text())
    assert edi["accuracy"] >= edi["species_accuracy"]


def test_predict(small_toyset, tmp_path, capsys):
    assert main(small_args(small_toyset, tmp_path / "r", "--epochs", "1")) == 0
    capsys.readouterr()
    img = resolve(small_toyset, read_manifest(small_toyset)[0])
    assert main(["predict", "--checkpoint", str(tmp_path / "r" / "model.ckpt"), str(img)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(sum(out["probs"]) - 1) < 1e-6
    assert out["class_id"] == int(np.argmax(out["probs"]))
    assert isinstance(out["edible"], bool)
    assert main(["predict", "--checkpoint", str(tmp_path / "r" / "model.ckpt"), str(tmp_path / "x.ppm")]) == 2


def test_make_toyset(tmp_path, capsys):
    args = ["make-toyset", "--classes", "3", "--per-class", "4", "--size", "8"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = tmp_path / "a" / "manifest.csv", tmp_path / "b" / "manifest.csv"
    assert a.read_bytes() == b.read_bytes() and len(read_manifest(a)) == 12


def test_export_circuit(tmp_path, capsys):
    assert main(["export-circuit", "--preset", "qmvit-4q1l"]) == 0
    c = parse_circuit(capsys.readouterr().out)
    assert (c.count("H"), c.count("RY"), c.count("RX"), c.count("CNOT")) == (4, 4, 4, 4)
    assert main(["export-circuit", "--preset", "qmvit-4q1l", "--loader_axis", "X"]) == 0
    c = parse_circuit(capsys.readouterr().out)
    assert (c.count("H"), c.count("RX"), c.count("CNOT")) == (4, 8, 4)
    assert main(["export-circuit", "--preset", "qmvit-4q1l", "--n_layers", "0"]) == 0
    c = parse_circuit(capsys.readouterr().out)
    assert (len(c), c.count("H")) == (8, 4)
    out = tmp_path / "c.txt"
    assert main(["export-circuit", "--preset", "qnn", "--x", "0.1,0.2,0.3,0.4", "--out", str(out)]) == 0
    text = out.read_text()
    assert parse_circuit(text).count("H") == 0
    assert dump_circuit(parse_circuit(text)) == text
    assert main(["export-circuit", "--preset", "vit"]) == 3
    assert main(["export-circuit", "--preset", "qnn", "--x", "1,2"]) == 3


def test_export_circuit_from_checkpoint(small_toyset, tmp_path, capsys):
    args = ["train", "--preset", "qnn", "--manifest", str(small_toyset), "--out_dir", str(tmp_path),
            "--image_size", "8", "--epochs", "0"]
    assert main(args) == 0
    capsys.readouterr()
    assert main(["export-circuit", "--checkpoint", str(tmp_path / "model.ckpt")]) == 0
    c = parse_circuit(capsys.readouterr().out)
    params, _ = checkpoint.load(tmp_path / "model.ckpt")
    assert [g.angle for g in c.gates if g.kind == "RX"][4:] == params["quanv.theta"].tolist()


@pytest.mark.parametrize("verb", ["train", "eval", "predict", "make-toyset", "export-circuit"])
def test_help(verb, capsys):
    with pytest.raises(SystemExit) as e:
        main([verb, "--help"])
    assert e.value.code == 0
