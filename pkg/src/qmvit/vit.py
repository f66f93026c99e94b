"""Classical vision transformer baseline, trained from scratch."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import functional as F
from .nn.tensor import Tensor, as_tensor, concat
from .qattention import add_class_token, glorot, patch_embedding


@dataclass
class ViTConfig:
    image_size: int = 16
    patch_size: int = 4
    in_channels: int = 3
    embed_dim: int = 16
    n_heads: int = 2
    n_blocks: int = 1
    mlp_hidden: int = 32
    n_classes: int = 100

    def __post_init__(self):
        if self.embed_dim % self.n_heads:
            raise ValueError("embed_dim must be divisible by n_heads")
        if self.image_size % self.patch_size:
            raise ValueError("image size must be divisible by patch size")

    @property
    def seq_len(self) -> int:
        return (self.image_size // self.patch_size) ** 2 + 1


class ViT:
    kind = "vit"
    wants_normalized = True

    def __init__(self, cfg: ViTConfig):
        self.cfg = cfg

    def init_params(self, rng: np.random.Generator) -> dict:
        c = self.cfg
        d, p = c.embed_dim, c.patch_size
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
            for name in ("wq", "wk", "wv", "wo"):
                params[pre + f"attn.{name}"] = glorot(rng, d, d)
            params[pre + "attn.bo"] = np.zeros(d)
            params[pre + "ln2.g"] = np.ones(d)
            params[pre + "ln2.b"] = np.zeros(d)
            params[pre + "ffn.w1"] = glorot(rng, d, c.mlp_hidden)
            params[pre + "ffn.b1"] = np.zeros(c.mlp_hidden)
            params[pre + "ffn.w2"] = glorot(rng, c.mlp_hidden, d)
            params[pre + "ffn.b2"] = np.zeros(d)
        params["ln_f.g"] = np.ones(d)
        params["ln_f.b"] = np.zeros(d)
        params["head.w"] = glorot(rng, d, c.n_classes)
        params["head.b"] = np.zeros(c.n_classes)
        return params

    def attention(self, P: dict, pre: str, x: Tensor) -> Tensor:
        c = self.cfg
        dk = c.embed_dim // c.n_heads
        q = F.linear(x, P[pre + "attn.wq"])
        k = F.linear(x, P[pre + "attn.wk"])
        v = F.linear(x, P[pre + "attn.wv"])
        heads = []
        for h in range(c.n_heads):
            sl = (Ellipsis, slice(h * dk, (h + 1) * dk))
            heads.append(F.classical_attention(q[sl], k[sl], v[sl], dk))
        return F.linear(concat(heads, axis=-1), P[pre + "attn.wo"], P[pre + "attn.bo"])

    def forward(self, P: dict, images) -> Tensor:
        c = self.cfg
        images = as_tensor(images)
        if images.ndim != 4 or images.shape[1:] != (c.image_size, c.image_size, c.in_channels):
            raise F.ShapeError(f"expected (B,{c.image_size},{c.image_size},{c.in_channels}) images, got {images.shape}")
        x = add_class_token(patch_embedding(images, P["patch.w"], P["patch.b"], c.patch_size), P["cls"], P["pos"])
        for i in range(c.n_blocks):
            pre = f"blocks.{i}."
            x = x + self.attention(P, pre, F.layer_norm(x, P[pre + "ln1.g"], P[pre + "ln1.b"]))
            h = F.layer_norm(x, P[pre + "ln2.g"], P[pre + "ln2.b"])
            x = x + F.ffn(h, P[pre + "ffn.w1"], P[pre + "ffn.b1"], P[pre + "ffn.w2"], P[pre + "ffn.b2"])
        cls = F.layer_norm(x[:, 0, :], P["ln_f.g"], P["ln_f.b"])
        return F.linear(cls, P["head.w"], P["head.b"])
