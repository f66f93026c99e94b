import numpy as np
import pytest

from qmvit import checkpoint
from qmvit.checkpoint import CheckpointError
from qmvit.config import PRESETS, QUBIT_LAYER_GRID, ConfigError, RunConfig, build_model, load_config, parse_config_text


def test_defaults():
    cfg = RunConfig()
    assert (cfg.epochs, cfg.batch_size, cfg.lr) == (10, 32, 1e-3)


def test_parse_and_precedence(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nepochs = 3\nlr = 0.5  # trailing\naugment = false\n")
    cfg = load_config(str(p), "qmvit-8q2l", {"epochs": "7", "seed": None})
    assert cfg.epochs == 7 and cfg.lr == 0.5 and cfg.augment is False
    assert (cfg.n_qubits, cfg.n_layers, cfg.embed_dim) == (8, 2, 16)


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        parse_config_text("epochs 3\n")
    with pytest.raises(ConfigError):
        parse_config_text("nonsense = 1\n")
    with pytest.raises(ConfigError):
        parse_config_text("epochs = three\n")
    with pytest.raises(ConfigError):
        load_config(preset="qmvit-16q")
    with pytest.raises(ConfigError):
        load_config(overrides={"embed_dim": "10"})
    with pytest.raises(ConfigError):
        load_config(overrides={"val_fraction": "0.7", "test_fraction": "0.3"})
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.cfg"))


def test_echo_round_trips():
    cfg = load_config(preset="qnn", overrides={"lr": "0.125", "manifest": "m.csv"})
    again = RunConfig(**parse_config_text(cfg.echo()))
    assert again == cfg


def test_qubit_layer_presets_construct():
    assert set(QUBIT_LAYER_GRID) == {(4, 1), (8, 1), (4, 2), (8, 2)}
    for (q, layers), name in QUBIT_LAYER_GRID.items():
        cfg = load_config(preset=name)
        assert (cfg.n_qubits, cfg.n_layers) == (q, layers)
        model = build_model(cfg, 4)
        assert model.cfg.n_qubits == q
    assert {"vit", "qnn"} <= set(PRESETS)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    params = {"a": rng.normal(size=(3, 4)), "b.c": rng.normal(size=5), "s": np.array(2.5)}
    meta = {"config": {"x": 1}, "rng_state": {"state": 12345678901234567890}}
    blob = checkpoint.encode(params, meta)
    assert blob[:6] == b"QMVIT1"
    back, meta2 = checkpoint.decode(blob)
    assert meta2 == meta
    assert all(np.array_equal(back[k], params[k]) for k in params)
    assert checkpoint.encode(back, meta2) == blob
    checkpoint.save(tmp_path / "m.ckpt", params, meta)
    assert (tmp_path / "m.ckpt").read_bytes() == blob


def test_checkpoint_rejects_damage(tmp_path):
    blob = checkpoint.encode({"a": np.ones(3)}, {})
    with pytest.raises(CheckpointError):
        checkpoint.decode(b"NOTQMV" + blob[6:])
    with pytest.raises(CheckpointError):
        checkpoint.decode(blob[:-3])
    with pytest.raises(CheckpointError):
        checkpoint.decode(blob + b"\x00")
    with pytest.raises(CheckpointError):
        checkpoint.load(tmp_path / "nope.ckpt")
