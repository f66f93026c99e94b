"""Hybrid quantum self-attention and the quantum vision transformer.

Each attention head loads a ``dh``-wide row into ``dh`` qubits, runs three
independently parametrized copies of one ansatz, and reads out

* ``Q_i = <Z_0>`` after the query circuit,
* ``K_i = <Z_0>`` after the key circuit,
* ``V_ij = <Z_j>`` after the value circuit.

Scores are ``A_ij = -(Q_i - K_j)^2`` and the head returns
``softmax(A / sqrt(dh)) @ V``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import nn
from .encoding import AngleEncodingSpec
from .nn import functional as F
from .nn.tensor import Tensor, as_tensor, concat, custom
from .pqc import AnsatzSpec, evaluate_with_grads, init_params
from .qsim import DimensionError


# -- quantum layer as an autograd node ---------------------------------------


def quantum_layer(angles, theta, ansatz: AnsatzSpec, enc: AngleEncodingSpec,
                  targets: Sequence[int]) -> Tensor:
    """<Z_t> readouts for every row of ``angles`` (N, n); gradients by the shift rule."""
    angles, theta = as_tensor(angles), as_tensor(theta)
    lead = angles.shape[:-1]
    x = angles.data.reshape(-1, angles.shape[-1])
    e, jx, jt = evaluate_with_grads(x, theta.data, ansatz, enc, targets,
                                    want_x=angles.requires_grad, want_theta=theta.requires_grad)

    def backward(g):
        g = g.reshape(-1, len(targets))
        gx = np.einsum("nt,ntj->nj", g, jx).reshape(angles.shape) if jx is not None else None
        gt = np.einsum("nt,ntp->p", g, jt) if jt is not None else None
        return gx, gt

    return custom(e.reshape(lead + (len(targets),)), (angles, theta), backward, "quantum")


# -- single-row building blocks ---------------------------------------------


@dataclass
class QuantumHeadParams:
    theta_q: np.ndarray
    theta_k: np.ndarray
    theta_v: np.ndarray
    ansatz: AnsatzSpec
    loader: Optional[AngleEncodingSpec] = None

    def __post_init__(self):
        for name in ("theta_q", "theta_k", "theta_v"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if arr.size != self.ansatz.n_params:
                raise DimensionError(f"{name} has {arr.size} entries, ansatz needs {self.ansatz.n_params}")
            setattr(self, name, arr)
        if self.loader is None:
            self.loader = default_loader(self.ansatz.n_qubits)
        if self.loader.n_qubits != self.ansatz.n_qubits:
            raise DimensionError("loader width differs from ansatz width")

    @property
    def dh(self) -> int:
        return self.ansatz.n_qubits

    @classmethod
    def random(cls, ansatz: AnsatzSpec, rng: np.random.Generator, loader=None):
        return cls(init_params(ansatz, rng), init_params(ansatz, rng), init_params(ansatz, rng), ansatz, loader)


def default_loader(n_qubits: int, axis: str = "Y") -> AngleEncodingSpec:
    """Hadamard column followed by R_axis(-x_j) on each qubit."""
    return AngleEncodingSpec.uniform(n_qubits, axis, prepend_hadamard=True)


def _row(x_i, dh: int) -> np.ndarray:
    x_i = np.asarray(x_i, dtype=np.float64).reshape(-1)
    if x_i.size != dh:
        raise DimensionError(f"row has {x_i.size} entries, head width is {dh}")
    return x_i


def quantum_query(x_i, theta_q, ansatz: AnsatzSpec, loader: Optional[AngleEncodingSpec] = None) -> float:
    loader = loader or default_loader(ansatz.n_qubits)
    x = _row(x_i, ansatz.n_qubits)
    e, _, _ = evaluate_with_grads(x[None, :], theta_q, ansatz, loader, [0])
    return float(e[0, 0])


def quantum_key(x_i, theta_k, ansatz: AnsatzSpec, loader: Optional[AngleEncodingSpec] = None) -> float:
    return quantum_query(x_i, theta_k, ansatz, loader)


def quantum_values(x_i, theta_v, ansatz: AnsatzSpec, loader: Optional[AngleEncodingSpec] = None) -> np.ndarray:
    loader = loader or default_loader(ansatz.n_qubits)
    x = _row(x_i, ansatz.n_qubits)
    e, _, _ = evaluate_with_grads(x[None, :], theta_v, ansatz, loader, range(ansatz.n_qubits))
    return e[0]


def attention_scores(q, k) -> Tensor:
    """A_ij = -(Q_i - K_j)^2 over the last axis; leading axes are batch."""
    q, k = as_tensor(q), as_tensor(k)
    if q.shape != k.shape:
        raise DimensionError(f"query shape {q.shape} differs from key shape {k.shape}")
    diff = q.reshape(q.shape + (1,)) - k.reshape(k.shape[:-1] + (1, k.shape[-1]))
    return -(diff * diff)


def _head(x: Tensor, theta_q, theta_k, theta_v, ansatz: AnsatzSpec, loader: AngleEncodingSpec):
    """Batched head on (..., S, dh) angle rows; returns (output, attention weights)."""
    dh = ansatz.n_qubits
    if x.shape[-1] != dh:
        raise DimensionError(f"rows have width {x.shape[-1]}, head width is {dh}")
    q = quantum_layer(x, theta_q, ansatz, loader, [0])
    k = quantum_layer(x, theta_k, ansatz, loader, [0])
    v = quantum_layer(x, theta_v, ansatz, loader, list(range(dh)))
    q = q.reshape(q.shape[:-1])
    k = k.reshape(k.shape[:-1])
    weights = F.softmax(attention_scores(q, k) * (1.0 / math.sqrt(dh)), axis=-1)
    return nn.tensor.matmul(weights, v), weights


def hybrid_head(x, params: QuantumHeadParams) -> Tensor:
    """softmax(A / sqrt(dh)) @ V for a (S, dh) or batched (B, S, dh) matrix of angle rows."""
    out, _ = _head(as_tensor(x), params.theta_q, params.theta_k, params.theta_v, params.ansatz, params.loader)
    return out


def multi_head(x, heads: Sequence[QuantumHeadParams], w_o, b_o=None) -> Tensor:
    """Split columns across heads, run each hybrid head, concatenate, project with ``w_o``."""
    x = as_tensor(x)
    widths = [h.dh for h in heads]
    if sum(widths) != x.shape[-1]:
        raise DimensionError(f"heads cover {sum(widths)} columns, input has {x.shape[-1]}")
    outs = []
    start = 0
    for h in heads:
        cols = x[..., start:start + h.dh]
        outs.append(hybrid_head(cols, h))
        start += h.dh
    return F.linear(concat(outs, axis=-1), w_o, b_o)


@dataclass
class QMLPParams:
    w_in: np.ndarray
    b_in: np.ndarray
    theta: np.ndarray
    ansatz: AnsatzSpec
    w_out: np.ndarray
    b_out: np.ndarray
    loader: Optional[AngleEncodingSpec] = None

    def __post_init__(self):
        n = self.ansatz.n_qubits
        if self.w_in.shape[1] != n or self.b_in.shape != (n,):
            raise DimensionError("input projection must map to the qubit count")
        if self.w_out.shape[0] != n or self.b_out.shape != (self.w_out.shape[1],):
            raise DimensionError("output projection must map from the qubit count")
        if np.asarray(self.theta).size != self.ansatz.n_params:
            raise DimensionError("quantum layer parameter count mismatch")
        if self.loader is None:
            self.loader = default_loader(n)


def _qmlp(x: Tensor, w_in, b_in, theta, ansatz, loader, w_out, b_out) -> Tensor:
    h = F.pi_tanh(F.linear(x, w_in, b_in))
    z = quantum_layer(h, theta, ansatz, loader, list(range(ansatz.n_qubits)))
    return F.linear(z, w_out, b_out)


def quantum_mlp(x, p: QMLPParams) -> Tensor:
    """Linear -> pi*tanh -> angle loader + ansatz -> <Z_j> readout -> Linear."""
    return _qmlp(as_tensor(x), p.w_in, p.b_in, p.theta, p.ansatz, p.loader, p.w_out, p.b_out)


# -- full model -------------------------------------------------------------


@dataclass
class QMViTConfig:
    image_size: int = 16
    patch_size: int = 4
    in_channels: int = 3
    embed_dim: int = 8
    n_heads: int = 2
    n_blocks: int = 1
    n_qubits: int = 4
    n_layers: int = 1
    n_classes: int = 100
    entangler: str = "cnot_ring"
    loader_axis: str = "Y"
    reupload: bool = False

    def __post_init__(self):
        if self.embed_dim != self.n_heads * self.n_qubits:
            raise ValueError(f"embed_dim {self.embed_dim} != n_heads {self.n_heads} x n_qubits {self.n_qubits}")
        if self.image_size % self.patch_size:
            raise ValueError("image size must be divisible by patch size")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")

    @property
    def n_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def seq_len(self) -> int:
        return self.n_patches + 1

    @property
    def ansatz(self) -> AnsatzSpec:
        return AnsatzSpec(self.n_qubits, self.n_layers, self.entangler, False, self.reupload)

    @property
    def loader(self) -> AngleEncodingSpec:
        return default_loader(self.n_qubits, self.loader_axis)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    std = math.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=shape or (fan_in, fan_out))


def patch_embedding(images: Tensor, w, b, patch: int) -> Tensor:
    """Strided convolution with patch-sized filters, flattened to (B, n_patches, D)."""
    z = F.conv2d(images, w, b, stride=patch)
    return z.reshape(z.shape[0], z.shape[1] * z.shape[2], z.shape[3])


def add_class_token(tokens: Tensor, cls, pos) -> Tensor:
    b, _, d = tokens.shape
    cls_rows = nn.tensor.broadcast_to(as_tensor(cls).reshape(1, 1, d), (b, 1, d))
    return concat([cls_rows, tokens], axis=1) + pos


class QMViT:
    """Quantum vision transformer: conv patch embedding, hybrid attention blocks, linear head."""

    kind = "qmvit"
    wants_normalized = True

    def __init__(self, cfg: QMViTConfig):
        self.cfg = cfg

    def init_params(self, rng: np.random.Generator) -> dict:
        c = self.cfg
        d, p = c.embed_dim, c.patch_size
        ans = c.ansatz
        params = {
            "patch.w": glorot(rng, p * p * c.in_channels, d, (p, p, c.in_channels, d)),
            "patch.b": np.zeros(d),
            "cls": rng.normal(0.0, 0.02, size=d),
            "pos": rng.normal(0.0, 0.02, size=(c.seq_len, d)),
        }
        for i in range(c.n_blocks):
            pre = f"blocks.{i}."
            params[pre + "ln1.g"] = np.ones(d)
            params[pre + "ln1.b"] = np.zeros(d)
            for h in range(c.n_heads):
                for part in ("q", "k", "v"):
                    params[pre + f"head{h}.theta_{part}"] = init_params(ans, rng)
            params[pre + "attn_out.w"] = glorot(rng, d, d)
            params[pre + "attn_out.b"] = np.zeros(d)
            params[pre + "ln2.g"] = np.ones(d)
            params[pre + "ln2.b"] = np.zeros(d)
            params[pre + "mlp.w_in"] = glorot(rng, d, c.n_qubits)
            params[pre + "mlp.b_in"] = np.zeros(c.n_qubits)
            params[pre + "mlp.theta"] = init_params(ans, rng)
            params[pre + "mlp.w_out"] = glorot(rng, c.n_qubits, d)
            params[pre + "mlp.b_out"] = np.zeros(d)
        params["ln_f.g"] = np.ones(d)
        params["ln_f.b"] = np.zeros(d)
        params["head.w"] = glorot(rng, d, c.n_classes)
        params["head.b"] = np.zeros(c.n_classes)
        return params

    def embed(self, P: dict, images) -> Tensor:
        c = self.cfg
        images = as_tensor(images)
        if images.ndim != 4 or images.shape[1:] != (c.image_size, c.image_size, c.in_channels):
            raise F.ShapeError(f"expected (B,{c.image_size},{c.image_size},{c.in_channels}) images, got {images.shape}")
        tokens = patch_embedding(images, P["patch.w"], P["patch.b"], c.patch_size)
        return add_class_token(tokens, P["cls"], P["pos"])

    def block(self, P: dict, i: int, x: Tensor) -> Tensor:
        c = self.cfg
        pre = f"blocks.{i}."
        ans, loader, dh = c.ansatz, c.loader, c.n_qubits
        h = F.pi_tanh(F.layer_norm(x, P[pre + "ln1.g"], P[pre + "ln1.b"]))
        outs = []
        for k in range(c.n_heads):
            cols = h[..., k * dh:(k + 1) * dh]
            o, _ = _head(cols, P[pre + f"head{k}.theta_q"], P[pre + f"head{k}.theta_k"],
                         P[pre + f"head{k}.theta_v"], ans, loader)
            outs.append(o)
        x = x + F.linear(concat(outs, axis=-1), P[pre + "attn_out.w"], P[pre + "attn_out.b"])
        h2 = F.layer_norm(x, P[pre + "ln2.g"], P[pre + "ln2.b"])
        return x + _qmlp(h2, P[pre + "mlp.w_in"], P[pre + "mlp.b_in"], P[pre + "mlp.theta"], ans, loader,
                         P[pre + "mlp.w_out"], P[pre + "mlp.b_out"])

    def forward(self, P: dict, images) -> Tensor:
        x = self.embed(P, images)
        for i in range(self.cfg.n_blocks):
            x = self.block(P, i, x)
        cls = F.layer_norm(x[:, 0, :], P["ln_f.g"], P["ln_f.b"])
        return F.linear(cls, P["head.w"], P["head.b"])
