"""Classical layers with hand-written reverse passes.

Images are channels-last: ``(batch, height, width, channels)``.  Filters are
``(Fh, Fw, C_in, C_out)``.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erfc

from .tensor import Tensor, as_tensor, custom, matmul, tanh

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

POOL_KINDS = ("max", "average", "gap", "l2")


class ShapeError(ValueError):
    pass


# -- activations ------------------------------------------------------------


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return custom(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def normal_cdf(x):
    # erfc keeps the lower tail accurate where 1 + erf(x) would cancel to 0
    return 0.5 * erfc(-np.asarray(x, dtype=np.float64) * _INV_SQRT2)


def gelu(x) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    x = as_tensor(x)
    cdf = normal_cdf(x.data)
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data ** 2)
    return custom(x.data * cdf, (x,), lambda g: (g * (cdf + x.data * pdf),), "gelu")


def pi_tanh(x) -> Tensor:
    return tanh(as_tensor(x)) * math.pi


# -- softmax family ---------------------------------------------------------


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return custom(s, (x,), backward, "softmax")


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    s = np.exp(out)
    return custom(out, (x,), lambda g: (g - s * g.sum(axis=axis, keepdims=True),), "log_softmax")


def cross_entropy(logits, labels) -> Tensor:
    """Mean of -log softmax(logits)[label] over the batch."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim == 1:
        logits = logits.reshape(1, -1)
    if logits.shape[0] != labels.size:
        raise ShapeError(f"{logits.shape[0]} logit rows for {labels.size} labels")
    lp = log_softmax(logits, axis=-1)
    b = labels.size
    picked = lp.data[np.arange(b), labels]

    def backward(g):
        grad = np.zeros_like(lp.data)
        grad[np.arange(b), labels] = -g / b
        return (grad,)

    return custom(np.array(-picked.sum() / b), (lp,), backward, "nll")


# -- dense layers -----------------------------------------------------------


def linear(x, w, b=None) -> Tensor:
    """``x @ w + b`` with ``w`` shaped (in, out)."""
    x = as_tensor(x)
    lead = x.shape[:-1]
    flat = x.reshape(-1, x.shape[-1])
    out = matmul(flat, w)
    if b is not None:
        out = out + b
    return out.reshape(lead + (out.shape[-1],))


def ffn(x, w1, b1, w2, b2) -> Tensor:
    return linear(gelu(linear(x, w1, b1)), w2, b2)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def backward(g):
        gx = g * gamma.data
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        red = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=red), g.sum(axis=red)

    gamma, beta = as_tensor(gamma), as_tensor(beta)
    return custom(xhat * gamma.data + beta.data, (x, gamma, beta), backward, "layer_norm")


def classical_attention(q, k, v, d_k: float | None = None) -> Tensor:
    """softmax(q k^T / sqrt(d_k)) v over the last two axes."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention shapes {q.shape}, {k.shape}, {v.shape} do not conform")
    if d_k is None:
        d_k = q.shape[-1]
    axes = tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)
    scores = matmul(q, k.transpose(axes)) * (1.0 / math.sqrt(d_k))
    return matmul(softmax(scores, axis=-1), v)


# -- convolution ------------------------------------------------------------


def _windows(x: np.ndarray, fh: int, fw: int, s: int) -> np.ndarray:
    """(B, H', W', fh, fw, C) view of every filter position."""
    win = sliding_window_view(x, (fh, fw), axis=(1, 2))  # (B, H-fh+1, W-fw+1, C, fh, fw)
    win = win[:, ::s, ::s]
    return np.moveaxis(win, 3, -1)


def conv2d(x, f, b=None, stride: int = 1) -> Tensor:
    """Valid cross-correlation: Z[i,j,o] = sum x[i*s+m, j*s+n, c] f[m,n,c,o] + b[o]."""
    x, f = as_tensor(x), as_tensor(f)
    if x.ndim != 4 or f.ndim != 4:
        raise ShapeError("conv2d expects (B,H,W,C) input and (Fh,Fw,Cin,Cout) filter")
    bsz, h, w, c = x.shape
    fh, fw, cin, cout = f.shape
    if cin != c:
        raise ShapeError(f"filter expects {cin} channels, input has {c}")
    if h < fh or w < fw:
        raise ShapeError(f"filter {fh}x{fw} larger than input {h}x{w}")
    if stride < 1:
        raise ShapeError("stride must be positive")
    win = _windows(x.data, fh, fw, stride)
    ho, wo = win.shape[1], win.shape[2]
    cols = np.ascontiguousarray(win).reshape(bsz * ho * wo, fh * fw * c)
    wmat = f.data.reshape(fh * fw * c, cout)
    out = (cols @ wmat).reshape(bsz, ho, wo, cout)
    parents = [x, f]
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
        parents.append(b)

    def backward(g):
        g2 = g.reshape(-1, cout)
        gf = (cols.T @ g2).reshape(f.shape)
        gcols = (g2 @ wmat.T).reshape(bsz, ho, wo, fh, fw, c)
        gx = np.zeros_like(x.data)
        for m in range(fh):
            for n in range(fw):
                gx[:, m:m + stride * ho:stride, n:n + stride * wo:stride, :] += gcols[:, :, :, m, n, :]
        grads = [gx, gf]
        if b is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return custom(out, parents, backward, "conv2d")


# -- pooling ----------------------------------------------------------------


def pool(x, kind: str, window=(2, 2), stride: int | None = None) -> Tensor:
    """Max, average, global-average or L2 pooling over (B,H,W,C) maps."""
    x = as_tensor(x)
    if kind not in POOL_KINDS:
        raise ValueError(f"unknown pool kind {kind!r}")
    if x.ndim != 4:
        raise ShapeError("pool expects (B,H,W,C) input")
    bsz, h, w, c = x.shape
    if kind == "gap":
        return x.mean(axis=(1, 2))
    kh, kw = window
    s = stride or kh
    if kh > h or kw > w:
        raise ShapeError(f"window {kh}x{kw} larger than input {h}x{w}")
    win = _windows(x.data, kh, kw, s)  # (B,H',W',kh,kw,C)
    ho, wo = win.shape[1], win.shape[2]
    flat = np.ascontiguousarray(win).reshape(bsz, ho, wo, kh * kw, c)
    if kind == "max":
        # argmax returns the first maximal element, i.e. row-major tie break
        arg = flat.argmax(axis=3)
        out = np.take_along_axis(flat, arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]
        dflat = lambda g: _onehot(arg, kh * kw) * g[:, :, :, None, :]
    elif kind == "average":
        out = flat.mean(axis=3)
        dflat = lambda g: np.broadcast_to(g[:, :, :, None, :] / (kh * kw), flat.shape)
    else:
        out = np.sqrt((flat ** 2).sum(axis=3))
        safe = np.where(out > 0, out, 1.0)
        dflat = lambda g: flat * (g / safe)[:, :, :, None, :]

    def backward(g):
        gw = dflat(g).reshape(bsz, ho, wo, kh, kw, c)
        gx = np.zeros_like(x.data)
        for m in range(kh):
            for n in range(kw):
                gx[:, m:m + s * ho:s, n:n + s * wo:s, :] += gw[:, :, :, m, n, :]
        return (gx,)

    return custom(out, (x,), backward, f"{kind}_pool")


def _onehot(arg: np.ndarray, k: int) -> np.ndarray:
    # arg: (B,H',W',C) -> (B,H',W',k,C)
    return (np.arange(k)[None, None, None, :, None] == arg[:, :, :, None, :]).astype(np.float64)


__all__ = [
    "ShapeError",
    "relu",
    "gelu",
    "normal_cdf",
    "pi_tanh",
    "softmax",
    "log_softmax",
    "cross_entropy",
    "linear",
    "ffn",
    "layer_norm",
    "classical_attention",
    "conv2d",
    "pool",
]
