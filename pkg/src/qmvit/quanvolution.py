"""Quanvolutional layer and the quanvolutional baseline classifier.

Each k x k window of a single-channel plane is loaded one pixel per qubit,
passed through a small RX/CNOT circuit, and read out as k^2 Pauli-Z
expectations, one feature channel per qubit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .encoding import AngleEncodingSpec, quanv_spec
from .nn import functional as F
from .nn.tensor import Tensor, as_tensor
from .pqc import AnsatzSpec, init_params
from .qattention import glorot, quantum_layer
from .qsim import MAX_QUBITS, CapacityError


@dataclass
class QuanvSpec:
    k: int = 2
    stride: int = 2
    n_layers: int = 1
    entangler: str = "cnot_ring"
    theta: Optional[np.ndarray] = None
    trainable: bool = False
    axis: str = "X"

    def __post_init__(self):
        if self.k < 1 or self.stride < 1:
            raise ValueError("window and stride must be positive")
        if self.k * self.k > MAX_QUBITS:
            raise CapacityError(f"{self.k}x{self.k} window needs more than {MAX_QUBITS} qubits")
        if self.theta is not None:
            self.theta = np.asarray(self.theta, dtype=np.float64).reshape(-1)
            if self.theta.size != self.ansatz.n_params:
                raise ValueError(f"circuit needs {self.ansatz.n_params} parameters")

    @property
    def n_qubits(self) -> int:
        return self.k * self.k

    @property
    def channels_out(self) -> int:
        return self.n_qubits

    @property
    def ansatz(self) -> AnsatzSpec:
        return AnsatzSpec(self.n_qubits, self.n_layers, self.entangler)

    @property
    def encoder(self) -> AngleEncodingSpec:
        return quanv_spec(self.n_qubits, self.axis)

    def with_random_circuit(self, rng: np.random.Generator) -> "QuanvSpec":
        self.theta = init_params(self.ansatz, rng)
        return self


def to_plane(image) -> np.ndarray:
    """Reduce (H, W, C) or (B, H, W, C) to one channel by averaging; 2-D passes through."""
    a = np.asarray(image, dtype=np.float64)
    if a.ndim == 2:
        return a
    return a.mean(axis=-1)


def output_size(h: int, w: int, k: int, s: int) -> tuple:
    return (h - k) // s + 1, (w - k) // s + 1


def extract_patches(image, k: int, s: int) -> np.ndarray:
    """Row-major k x k windows of the channel-mean plane, shape (n_patches, k, k)."""
    plane = to_plane(image)
    h, w = plane.shape
    if k > h or k > w:
        raise ValueError(f"window {k} larger than image {h}x{w}")
    ho, wo = output_size(h, w, k, s)
    win = np.lib.stride_tricks.sliding_window_view(plane, (k, k))[::s, ::s][:ho, :wo]
    return win.reshape(ho * wo, k, k).copy()


def _batch_patches(planes: np.ndarray, k: int, s: int) -> np.ndarray:
    b, h, w = planes.shape
    if k > h or k > w:
        raise ValueError(f"window {k} larger than image {h}x{w}")
    ho, wo = output_size(h, w, k, s)
    win = np.lib.stride_tricks.sliding_window_view(planes, (k, k), axis=(1, 2))[:, ::s, ::s][:, :ho, :wo]
    return win.reshape(b, ho, wo, k * k)


def pixel_angles(pixels):
    """Linear map of [0, 1] pixel values onto [0, pi]."""
    return np.asarray(pixels, dtype=np.float64) * math.pi


def quanv_layer(image, spec: QuanvSpec) -> np.ndarray:
    """Feature maps (H', W', k^2) for one image with pixels in [0, 1]."""
    return quanv_features(np.asarray(image)[None], spec, spec.theta).data[0]


def quanv_features(images, spec: QuanvSpec, theta) -> Tensor:
    """Batched quanvolution of (B, H, W[, C]) images; differentiable in ``theta`` only."""
    images = np.asarray(images, dtype=np.float64)
    planes = images.mean(axis=-1) if images.ndim == 4 else images
    if theta is None:
        theta = np.zeros(spec.ansatz.n_params)
    patches = _batch_patches(planes, spec.k, spec.stride)
    return quantum_layer(pixel_angles(patches), theta, spec.ansatz, spec.encoder, list(range(spec.n_qubits)))


@dataclass
class QNNConfig:
    image_size: int = 16
    in_channels: int = 3
    k: int = 2
    stride: int = 2
    n_layers: int = 1
    n_classes: int = 100
    trainable_circuit: bool = False

    @property
    def spec(self) -> QuanvSpec:
        return QuanvSpec(self.k, self.stride, self.n_layers, trainable=self.trainable_circuit)


class QNN:
    """Quanvolution -> global average pooling per channel -> linear head."""

    kind = "qnn"
    wants_normalized = False

    def __init__(self, cfg: QNNConfig):
        self.cfg = cfg
        self.spec = cfg.spec

    def init_params(self, rng: np.random.Generator) -> dict:
        c = self.cfg
        nq = self.spec.n_qubits
        return {
            "quanv.theta": init_params(self.spec.ansatz, rng),
            "head.w": glorot(rng, nq, c.n_classes),
            "head.b": np.zeros(c.n_classes),
            "head.mu": np.zeros(nq),
            "head.sd": np.ones(nq),
        }

    def frozen(self) -> set:
        fixed = {"head.mu", "head.sd"}
        return fixed if self.cfg.trainable_circuit else fixed | {"quanv.theta"}

    def calibrate(self, P: dict, images) -> dict:
        """Set the head's feature standardisation from a batch of (training) images.

        Pooled <Z> readouts cluster tightly, so without this the head needs
        weights far larger than Adam reaches in a few hundred steps.
        """
        f = self.features(P, images).data
        return {**P, "head.mu": f.mean(axis=0), "head.sd": np.maximum(f.std(axis=0), 1e-6)}

    def features(self, P: dict, images) -> Tensor:
        c = self.cfg
        images = np.asarray(as_tensor(images).data)
        if images.ndim != 4 or images.shape[1:] != (c.image_size, c.image_size, c.in_channels):
            raise F.ShapeError(f"expected (B,{c.image_size},{c.image_size},{c.in_channels}) images, got {images.shape}")
        maps = quanv_features(images, self.spec, P["quanv.theta"])
        return F.pool(maps, "gap")

    def forward(self, P: dict, images) -> Tensor:
        f = self.features(P, images)
        mu, sd = as_tensor(P["head.mu"]).data, as_tensor(P["head.sd"]).data
        f = (f - mu) * (1.0 / sd)
        return F.linear(f, P["head.w"], P["head.b"])


__all__ = [
    "QuanvSpec",
    "QNNConfig",
    "QNN",
    "extract_patches",
    "quanv_layer",
    "quanv_features",
    "pixel_angles",
    "to_plane",
    "output_size",
]
