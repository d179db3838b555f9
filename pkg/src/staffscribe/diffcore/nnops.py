"""Network-layer ops: 2-D convolution, max pooling, recurrent cell steps.

Convolution and pooling are single graph nodes with hand-written
backward passes (im2col keeps the forward on BLAS); the recurrent steps
are compositions of the elementwise primitives, so their gradients come
for free.
"""

from __future__ import annotations

import numpy as np

from .tensor import (
    ShapeError,
    Tensor,
    add,
    matmul,
    mul,
    sigmoid,
    tanh,
)


def conv2d(x: Tensor, w: Tensor, b: Tensor, padding: int = 1) -> Tensor:
    """Stride-1 2-D convolution, NCHW layout.

    x: (B, C, H, W), w: (F, C, kh, kw), b: (F,) -> (B, F, H', W')
    with H' = H + 2*padding - kh + 1 (same for width).
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: need 4-D input/kernel, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"conv2d: input has {x.shape[1]} channels but kernel expects {w.shape[1]}"
        )
    if b.shape != (w.shape[0],):
        raise ShapeError(f"conv2d: bias shape {b.shape} != ({w.shape[0]},)")
    B, C, H, W = x.shape
    F, _, kh, kw = w.shape
    Ho = H + 2 * padding - kh + 1
    Wo = W + 2 * padding - kw + 1
    if Ho <= 0 or Wo <= 0:
        raise ShapeError(f"conv2d: input {x.shape} too small for kernel {w.shape}")

    xp = np.pad(x.values, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    # (B, C, Ho, Wo, kh, kw) view, then flatten taps for one big matmul
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * kh * kw)
    wmat = w.values.reshape(F, C * kh * kw)
    out_v = (cols @ wmat.T + b.values).reshape(B, Ho, Wo, F).transpose(0, 3, 1, 2)
    out = Tensor(np.ascontiguousarray(out_v), (x, w, b))

    def backward(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, F)
        w.grad += (gmat.T @ cols).reshape(w.shape)
        b.grad += gmat.sum(axis=0)
        dcols = (gmat @ wmat).reshape(B, Ho, Wo, C, kh, kw)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + Ho, j : j + Wo] += dcols[:, :, :, :, i, j].transpose(
                    0, 3, 1, 2
                )
        if padding:
            x.grad += dxp[:, :, padding:-padding, padding:-padding]
        else:
            x.grad += dxp

    out._backward = backward
    return out


def maxpool2d(x: Tensor, pool_h: int, pool_w: int) -> Tensor:
    """Non-overlapping max pooling with independent height/width factors.

    Edges are padded (ceil mode) so output dims are ceil(H/pool_h) x
    ceil(W/pool_w); padding never wins the max.
    """
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d: need 4-D input, got {x.shape}")
    if pool_h < 1 or pool_w < 1:
        raise ShapeError(f"maxpool2d: pool factors must be >= 1, got ({pool_h},{pool_w})")
    B, C, H, W = x.shape
    Ho = -(-H // pool_h)
    Wo = -(-W // pool_w)
    ph = Ho * pool_h - H
    pw = Wo * pool_w - W
    xp = np.pad(
        x.values,
        ((0, 0), (0, 0), (0, ph), (0, pw)),
        constant_values=-np.inf,
    )
    blocks = xp.reshape(B, C, Ho, pool_h, Wo, pool_w).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(B, C, Ho, Wo, pool_h * pool_w)
    arg = flat.argmax(axis=-1)
    out = Tensor(np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0], (x,))

    def backward(g):
        dflat = np.zeros_like(flat)
        np.put_along_axis(dflat, arg[..., None], g[..., None], axis=-1)
        dxp = dflat.reshape(B, C, Ho, Wo, pool_h, pool_w).transpose(0, 1, 2, 4, 3, 5)
        x.grad += dxp.reshape(B, C, Ho * pool_h, Wo * pool_w)[:, :, :H, :W]

    out._backward = backward
    return out


def lstm_step(
    x: Tensor,
    h: Tensor,
    c: Tensor,
    w_ih: Tensor,
    w_hh: Tensor,
    b: Tensor,
) -> tuple[Tensor, Tensor]:
    """One LSTM cell step for a batch of rows.

    x: (B, I), h/c: (B, N), w_ih: (I, 4N), w_hh: (N, 4N), b: (4N,)
    Gate order along the 4N axis: input, forget, cell, output.
    """
    n = h.shape[-1]
    if w_ih.shape != (x.shape[-1], 4 * n) or w_hh.shape != (n, 4 * n):
        raise ShapeError(
            f"lstm_step: weight shapes {w_ih.shape}/{w_hh.shape} do not match "
            f"input {x.shape} and hidden {h.shape}"
        )
    gates = add(add(matmul(x, w_ih), matmul(h, w_hh)), b)
    i = sigmoid(_cols(gates, 0, n))
    f = sigmoid(_cols(gates, n, 2 * n))
    g = tanh(_cols(gates, 2 * n, 3 * n))
    o = sigmoid(_cols(gates, 3 * n, 4 * n))
    c_next = add(mul(f, c), mul(i, g))
    h_next = mul(o, tanh(c_next))
    return h_next, c_next


def rnn_step(x: Tensor, h: Tensor, w_ih: Tensor, w_hh: Tensor, b: Tensor) -> Tensor:
    """Vanilla tanh recurrence: h' = tanh(x @ w_ih + h @ w_hh + b)."""
    return tanh(add(add(matmul(x, w_ih), matmul(h, w_hh)), b))


def _cols(x: Tensor, lo: int, hi: int) -> Tensor:
    out = Tensor(x.values[:, lo:hi], (x,))

    def backward(gr):
        x.grad[:, lo:hi] += gr

    out._backward = backward
    return out

