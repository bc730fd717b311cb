"""Composite differentiable operations built on the tensor primitives."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, _sum_to_shape, concat

__all__ = [
    "softmax",
    "log_softmax",
    "layernorm",
    "attention",
    "conv2d",
    "cross_entropy",
    "kl_standard_normal",
    "l1_loss",
]


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = x.max_const(axis=axis, keepdims=True)
    e = (x - m).exp()
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = x.max_const(axis=axis, keepdims=True)
    shifted = x - m
    return shifted - shifted.exp().sum(axis=axis, keepdims=True).log()


def layernorm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    if x.shape[-1] == 0:
        raise ValueError("layernorm over a zero-length axis")
    if eps <= 0:
        raise ValueError("layernorm epsilon must be > 0")
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    xn = centered / (var + eps).sqrt()
    return xn * gain + bias


def attention(q: Tensor, k: Tensor, v: Tensor, n_heads: int) -> Tensor:
    """Multi-head scaled dot-product attention.

    q, k, v: (..., T, d) with d divisible by n_heads. Output has the query's
    shape. Self- vs cross-attention is just a matter of what q/k/v are.
    """
    d = q.shape[-1]
    if d % n_heads != 0:
        raise ValueError(f"model width {d} not divisible by {n_heads} heads")
    dh = d // n_heads
    tq, tk = q.shape[-2], k.shape[-2]
    lead = q.shape[:-2]

    def split(t, tlen):
        t = t.reshape(lead + (tlen, n_heads, dh))
        axes = tuple(range(len(lead))) + (t.ndim - 2, t.ndim - 3, t.ndim - 1)
        return t.transpose(axes)  # (..., heads, T, dh)

    qh, kh, vh = split(q, tq), split(k, tk), split(v, tk)
    scores = (qh @ kh.transpose(*range(kh.ndim - 2), kh.ndim - 1, kh.ndim - 2)) * (dh ** -0.5)
    weights = softmax(scores, axis=-1)
    out = weights @ vh  # (..., heads, Tq, dh)
    axes = tuple(range(len(lead))) + (out.ndim - 2, out.ndim - 3, out.ndim - 1)
    return out.transpose(axes).reshape(lead + (tq, d))


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, pad: int = 0) -> Tensor:
    """2D convolution via im2col. x: (B,C,H,W), w: (O,C,k,k), b: (O,)."""
    bsz, cin, h, wid = x.shape
    cout, cin2, kh, kw = w.shape
    if cin != cin2:
        raise ValueError("channel mismatch")
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wid + 2 * pad - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (B, C, Ho, Wo, kh, kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * ho * wo, cin * kh * kw)
    wmat = w.data.reshape(cout, cin * kh * kw).T
    out_data = cols @ wmat
    if b is not None:
        out_data = out_data + b.data
    out_data = out_data.reshape(bsz, ho, wo, cout).transpose(0, 3, 1, 2)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(bsz * ho * wo, cout)
        if w.requires_grad:
            w._accumulate((cols.T @ g2).T.reshape(w.shape))
        if b is not None and b.requires_grad:
            b._accumulate(g2.sum(axis=0))
        if x.requires_grad:
            dcols = (g2 @ wmat.T).reshape(bsz, ho, wo, cin, kh, kw)
            dxp = np.zeros((bsz, cin, h + 2 * pad, wid + 2 * pad), dtype=np.float64)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += (
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            if pad:
                dxp = dxp[:, :, pad:-pad, pad:-pad]
            x._accumulate(dxp)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._make(out_data, parents, backward)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    from .tensor import take_rows

    ls = log_softmax(logits, axis=-1)
    picked = take_rows(ls, labels)
    return -picked.mean()


def kl_standard_normal(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)), summed over the latent axis,
    averaged over leading axes."""
    per_dim = (mu * mu + logvar.exp() - 1.0 - logvar) * 0.5
    summed = per_dim.sum(axis=-1)
    return summed.mean()


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    return (pred - target).abs().mean()
