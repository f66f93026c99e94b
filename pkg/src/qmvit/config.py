"""Run configuration: flat ``key = value`` files, named presets, and model construction."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .qattention import QMViT, QMViTConfig
from .quanvolution import QNN, QNNConfig
from .vit import ViT, ViTConfig

MODELS = ("qmvit", "vit", "qnn")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: str = "qmvit"
    # architecture
    image_size: int = 16
    patch_size: int = 4
    embed_dim: int = 8
    n_heads: int = 2
    n_blocks: int = 1
    n_qubits: int = 4
    n_layers: int = 1
    n_classes: int = 0  # 0: one more than the largest species id in the manifest
    entangler: str = "cnot_ring"
    loader_axis: str = "Y"
    reupload: bool = False
    mlp_hidden: int = 32
    quanv_k: int = 2
    quanv_stride: int = 2
    quanv_trainable: bool = False
    # optimisation
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    # data
    manifest: str = ""
    out_dir: str = "run"
    val_fraction: float = 0.2
    test_fraction: float = 0.0
    augment: bool = True
    max_rotation_deg: float = 20.0
    sharpness_prob: float = 0.5
    threads: int = 1

    def validate(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.val_fraction < 0 or self.test_fraction < 0 or self.val_fraction + self.test_fraction >= 1:
            raise ConfigError("val_fraction + test_fraction must lie in [0, 1)")
        if self.image_size % self.patch_size:
            raise ConfigError("image_size must be divisible by patch_size")
        if self.model == "qmvit" and self.embed_dim != self.n_heads * self.n_qubits:
            raise ConfigError(f"embed_dim {self.embed_dim} must equal n_heads x n_qubits "
                              f"({self.n_heads} x {self.n_qubits})")
        if self.model == "qmvit" and not 1 <= self.n_qubits <= 20:
            raise ConfigError("n_qubits must lie in 1..20")
        if self.n_layers < 0:
            raise ConfigError("n_layers must be >= 0")
        if self.loader_axis.upper() not in ("X", "Y", "Z"):
            raise ConfigError("loader_axis must be X, Y or Z")
        if self.entangler not in ("cnot_ring", "cnot_chain"):
            raise ConfigError("entangler must be cnot_ring or cnot_chain")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self

    def echo(self) -> str:
        lines = [f"{f.name} = {_fmt(getattr(self, f.name))}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def coerce(key: str, raw) -> object:
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    t = _TYPES[key]
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if t in ("bool", bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if t in ("int", int):
            return int(raw)
        if t in ("float", float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key] = coerce(key, value)
    return out


# The four qubit/layer combinations, plus one preset per baseline.
PRESETS = {
    "qmvit-4q1l": dict(model="qmvit", n_qubits=4, n_layers=1, n_heads=2, embed_dim=8, lr=0.01),
    "qmvit-8q1l": dict(model="qmvit", n_qubits=8, n_layers=1, n_heads=2, embed_dim=16, lr=0.01),
    "qmvit-4q2l": dict(model="qmvit", n_qubits=4, n_layers=2, n_heads=2, embed_dim=8, lr=0.01),
    "qmvit-8q2l": dict(model="qmvit", n_qubits=8, n_layers=2, n_heads=2, embed_dim=16, lr=0.01),
    "vit": dict(model="vit", embed_dim=16, n_heads=2, mlp_hidden=32, lr=0.005),
    "qnn": dict(model="qnn", quanv_k=2, quanv_stride=2, n_layers=1, lr=0.1),
}
QUBIT_LAYER_GRID = {(4, 1): "qmvit-4q1l", (8, 1): "qmvit-8q1l", (4, 2): "qmvit-4q2l", (8, 2): "qmvit-8q2l"}


def load_config(path: Optional[str] = None, preset: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Defaults, then preset, then config file, then explicit overrides."""
    values = {}
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        values.update(PRESETS[preset])
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        values.update(parse_config_text(text))
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = coerce(k, v)
    return RunConfig(**values).validate()


def build_model(cfg: RunConfig, n_classes: int):
    if cfg.model == "qmvit":
        return QMViT(QMViTConfig(
            image_size=cfg.image_size, patch_size=cfg.patch_size, embed_dim=cfg.embed_dim,
            n_heads=cfg.n_heads, n_blocks=cfg.n_blocks, n_qubits=cfg.n_qubits, n_layers=cfg.n_layers,
            n_classes=n_classes, entangler=cfg.entangler, loader_axis=cfg.loader_axis.upper(),
            reupload=cfg.reupload))
    if cfg.model == "vit":
        return ViT(ViTConfig(
            image_size=cfg.image_size, patch_size=cfg.patch_size, embed_dim=cfg.embed_dim,
            n_heads=cfg.n_heads, n_blocks=cfg.n_blocks, mlp_hidden=cfg.mlp_hidden, n_classes=n_classes))
    return QNN(QNNConfig(
        image_size=cfg.image_size, k=cfg.quanv_k, stride=cfg.quanv_stride, n_layers=cfg.n_layers,
        n_classes=n_classes, trainable_circuit=cfg.quanv_trainable))
