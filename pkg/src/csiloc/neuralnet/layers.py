"""Primitive layers: same-padded conv2d, LSTM cell, softmax cross-entropy.

Forward functions return caches that the matching backward functions
consume.  Everything runs in float64 so analytic gradients can be
checked against central finite differences at tight tolerance.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "conv2d_forward",
    "conv2d_backward",
    "lstm_step_forward",
    "lstm_step_backward",
    "softmax",
    "relu",
    "relu_backward",
]


def _same_pad(kh: int, kw: int) -> tuple[tuple[int, int], tuple[int, int]]:
    # even kernels pad one extra at the bottom/right
    return ((kh - 1) // 2, kh - 1 - (kh - 1) // 2), ((kw - 1) // 2, kw - 1 - (kw - 1) // 2)


def conv2d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray):
    """Same-padded stride-1 convolution.

    x: (B, H, W, Cin); kernel: (kh, kw, Cin, Cout); bias: (Cout,).
    Returns (out of shape (B, H, W, Cout), cache).
    """
    B, H, W, Cin = x.shape
    kh, kw, _, Cout = kernel.shape
    (pt, pb), (pl, pr) = _same_pad(kh, kw)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    # (B, H, W, Cin, kh, kw) -> (B, H, W, kh, kw, Cin)
    view = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    patches = np.ascontiguousarray(np.moveaxis(view, 3, 5))
    cols = patches.reshape(B * H * W, kh * kw * Cin)
    out = cols @ kernel.reshape(kh * kw * Cin, Cout) + bias
    cache = (cols, x.shape, kernel)
    return out.reshape(B, H, W, Cout), cache


def conv2d_backward(d_out: np.ndarray, cache):
    """Gradients of conv2d_forward: returns (dx, d_kernel, d_bias)."""
    cols, x_shape, kernel = cache
    B, H, W, Cin = x_shape
    kh, kw, _, Cout = kernel.shape
    (pt, pb), (pl, pr) = _same_pad(kh, kw)

    d_flat = d_out.reshape(B * H * W, Cout)
    d_kernel = (cols.T @ d_flat).reshape(kernel.shape)
    d_bias = d_flat.sum(axis=0)

    d_cols = d_flat @ kernel.reshape(kh * kw * Cin, Cout).T
    d_patches = d_cols.reshape(B, H, W, kh, kw, Cin)
    dxp = np.zeros((B, H + pt + pb, W + pl + pr, Cin))
    for dy in range(kh):
        for dx_ in range(kw):
            dxp[:, dy : dy + H, dx_ : dx_ + W, :] += d_patches[:, :, :, dy, dx_, :]
    dx = dxp[:, pt : pt + H, pl : pl + W, :]
    return dx, d_kernel, d_bias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(d_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    return d_out * (x > 0.0)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_step_forward(x, h_prev, c_prev, w_x, w_h, b):
    """One LSTM cell update for a batch.

    x: (B, D); h_prev, c_prev: (B, H); w_x: (4H, D); w_h: (4H, H);
    b: (4H,).  Gate order along the 4H axis is input, forget, candidate,
    output.  Returns (h, c, cache).
    """
    H = h_prev.shape[1]
    a = x @ w_x.T + h_prev @ w_h.T + b
    i = _sigmoid(a[:, 0 * H : 1 * H])
    f = _sigmoid(a[:, 1 * H : 2 * H])
    g = np.tanh(a[:, 2 * H : 3 * H])
    o = _sigmoid(a[:, 3 * H : 4 * H])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = (x, h_prev, c_prev, i, f, g, o, tanh_c, w_x, w_h)
    return h, c, cache


def lstm_step_backward(dh, dc_next, cache):
    """Backward through one LSTM cell update.

    dh: gradient on h (incoming from the head and the next step);
    dc_next: gradient on c flowing back from the next step.
    Returns (dx, dh_prev, dc_prev, d_wx, d_wh, d_b).
    """
    x, h_prev, c_prev, i, f, g, o, tanh_c, w_x, w_h = cache
    do = dh * tanh_c
    dc = dc_next + dh * o * (1.0 - tanh_c**2)
    df = dc * c_prev
    dc_prev = dc * f
    di = dc * g
    dg = dc * i

    da_i = di * i * (1.0 - i)
    da_f = df * f * (1.0 - f)
    da_g = dg * (1.0 - g**2)
    da_o = do * o * (1.0 - o)
    da = np.concatenate([da_i, da_f, da_g, da_o], axis=1)  # (B, 4H)

    d_wx = da.T @ x
    d_wh = da.T @ h_prev
    d_b = da.sum(axis=0)
    dx = da @ w_x
    dh_prev = da @ w_h
    return dx, dh_prev, dc_prev, d_wx, d_wh, d_b


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stable under large logits."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
