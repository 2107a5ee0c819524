"""Forward and backward passes for each layer kind.

Every function accepts a single sample of shape (C, H, W) or a batch of shape
(N, C, H, W); fully-connected functions take (D,) or (N, D). Results come back
with the same batching as the input.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _batched(x):
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ValueError(f"expected (C,H,W) or (N,C,H,W), got shape {x.shape}")
    return x, False


def output_extent(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _windows(xp, kh, kw, stride, oh, ow):
    # (N, C, oh, ow, kh, kw) view into the padded input
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, : (oh - 1) * stride + 1 : stride, : (ow - 1) * stride + 1 : stride]


def _conv_geometry(x, w, stride, padding, groups):
    n, c, h, wd = x.shape
    f, cg, kh, kw = w.shape
    if groups < 1 or c % groups or f % groups:
        raise ValueError(f"channels {c} and filters {f} must be divisible by groups={groups}")
    if cg != c // groups:
        raise ValueError(f"kernel depth {cg} does not match {c} channels / {groups} groups")
    oh = output_extent(h, kh, stride, padding)
    ow = output_extent(wd, kw, stride, padding)
    if oh < 1 or ow < 1:
        raise ValueError(f"kernel {kh}x{kw} with padding {padding} does not fit {h}x{wd} input")
    return n, c, f, cg, kh, kw, oh, ow


def conv_forward(x, weights, bias, stride=1, padding=0, groups=1):
    """Grouped 2-D cross-correlation with zero padding."""
    x, single = _batched(x)
    n, c, f, cg, kh, kw, oh, ow = _conv_geometry(x, weights, stride, padding, groups)
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = _windows(xp, kh, kw, stride, oh, ow)
    fg = f // groups
    out = np.empty((n, f, oh, ow), dtype=np.result_type(x, weights))
    for g in range(groups):
        part = np.tensordot(
            win[:, g * cg : (g + 1) * cg], weights[g * fg : (g + 1) * fg], axes=([1, 4, 5], [1, 2, 3])
        )
        out[:, g * fg : (g + 1) * fg] = part.transpose(0, 3, 1, 2)
    out += bias.reshape(1, f, 1, 1)
    return out[0] if single else out


def conv_backward(grad_out, x, weights, stride=1, padding=0, groups=1):
    """Return (grad_input, grad_weights, grad_bias)."""
    x, single = _batched(x)
    grad_out, _ = _batched(grad_out)
    n, c, f, cg, kh, kw, oh, ow = _conv_geometry(x, weights, stride, padding, groups)
    if grad_out.shape != (n, f, oh, ow):
        raise ValueError(f"grad_out shape {grad_out.shape} does not match forward output {(n, f, oh, ow)}")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = _windows(xp, kh, kw, stride, oh, ow)
    fg = f // groups

    grad_b = grad_out.sum(axis=(0, 2, 3))
    grad_w = np.empty_like(weights)
    grad_xp = np.zeros(xp.shape, dtype=np.result_type(grad_out, weights))
    for g in range(groups):
        go = grad_out[:, g * fg : (g + 1) * fg]
        wg = weights[g * fg : (g + 1) * fg]
        grad_w[g * fg : (g + 1) * fg] = np.tensordot(go, win[:, g * cg : (g + 1) * cg], axes=([0, 2, 3], [0, 2, 3]))
        # (N, oh, ow, cg, kh, kw)
        cols = np.tensordot(go, wg, axes=([1], [0]))
        for i in range(kh):
            for j in range(kw):
                grad_xp[
                    :, g * cg : (g + 1) * cg, i : i + (oh - 1) * stride + 1 : stride, j : j + (ow - 1) * stride + 1 : stride
                ] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    h, w = x.shape[2:]
    grad_x = grad_xp[:, :, padding : padding + h, padding : padding + w]
    grad_x = np.ascontiguousarray(grad_x)
    return (grad_x[0] if single else grad_x), grad_w, grad_b


def relu(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, x):
    return np.where(x > 0, grad_out, 0).astype(np.result_type(grad_out), copy=False)


def _channel_window_sum(sq, half):
    # sums over channels [c - half, c + half] along axis 1, clipped at the ends
    c = sq.shape[1]
    padded = np.pad(sq, ((0, 0), (half + 1, half), (0, 0), (0, 0)))
    cs = np.cumsum(padded, axis=1)
    return cs[:, 2 * half + 1 : 2 * half + 1 + c] - cs[:, :c]


def lrn_forward(x, n=5, k=2.0, alpha=1e-4, beta=0.75):
    """Cross-channel local response normalization."""
    x, single = _batched(x)
    scale = k + (alpha / n) * _channel_window_sum(x * x, n // 2)
    out = x * scale ** (-beta)
    return out[0] if single else out


def lrn_backward(grad_out, x, n=5, k=2.0, alpha=1e-4, beta=0.75):
    x, single = _batched(x)
    grad_out, _ = _batched(grad_out)
    scale = k + (alpha / n) * _channel_window_sum(x * x, n // 2)
    inner = grad_out * x * scale ** (-beta - 1)
    # the window is symmetric, so the set of outputs touching input i is window(i)
    grad_x = grad_out * scale ** (-beta) - (2 * beta * alpha / n) * x * _channel_window_sum(inner, n // 2)
    return grad_x[0] if single else grad_x


def maxpool_forward(x, window=2, stride=2, padding=0):
    """Return (output, cache); the cache holds first-argmax offsets per window."""
    x, single = _batched(x)
    n, c, h, w = x.shape
    oh = output_extent(h, window, stride, padding)
    ow = output_extent(w, window, stride, padding)
    if oh < 1 or ow < 1:
        raise ValueError(f"pool window {window} with padding {padding} does not fit {h}x{w} input")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=-np.inf)
    win = _windows(xp, window, window, stride, oh, ow).reshape(n, c, oh, ow, window * window)
    arg = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    cache = (arg, x.shape, window, stride, padding, single)
    return (out[0] if single else out), cache


def maxpool_backward(grad_out, cache):
    arg, shape, window, stride, padding, single = cache
    grad_out, _ = _batched(grad_out)
    n, c, h, w = shape
    oh, ow = arg.shape[2:]
    grad_xp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=grad_out.dtype)
    for t in range(window * window):
        i, j = divmod(t, window)
        hit = arg == t
        if hit.any():
            grad_xp[:, :, i : i + (oh - 1) * stride + 1 : stride, j : j + (ow - 1) * stride + 1 : stride] += np.where(
                hit, grad_out, 0
            )
    grad_x = np.ascontiguousarray(grad_xp[:, :, padding : padding + h, padding : padding + w])
    return grad_x[0] if single else grad_x


def fc_forward(x, weights, bias):
    """y = W x + b; ``weights`` has shape (out, in)."""
    x = np.asarray(x)
    if x.shape[-1] != weights.shape[1]:
        raise ValueError(f"input length {x.shape[-1]} does not match weight columns {weights.shape[1]}")
    return x @ weights.T + bias


def fc_backward(grad_out, x, weights):
    """Return (grad_input, grad_weights, grad_bias)."""
    x = np.asarray(x)
    grad_out = np.asarray(grad_out)
    if x.ndim == 1:
        return grad_out @ weights, np.outer(grad_out, x), grad_out.copy()
    return grad_out @ weights, grad_out.T @ x, grad_out.sum(axis=0)


def dropout_forward(x, p, training, rng=None):
    """Inverted dropout. Returns (output, mask); mask is None in evaluation mode or when p == 0."""
    if not 0 <= p < 1:
        raise ValueError(f"dropout rate must lie in [0, 1), got {p}")
    if not training or p == 0:
        return x, None
    keep = rng.random(np.shape(x)) >= p
    return np.where(keep, x / (1 - p), 0).astype(np.result_type(x), copy=False), (keep, p)


def dropout_backward(grad_out, mask):
    if mask is None:
        return grad_out
    keep, p = mask
    return np.where(keep, grad_out / (1 - p), 0).astype(np.result_type(grad_out), copy=False)


def softmax(logits):
    z = np.asarray(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probabilities, true_label):
    """Return (loss, gradient w.r.t. the logits) for softmax probabilities.

    With a batch of probabilities, ``true_label`` is an index array and the
    per-sample losses and gradients are returned.
    """
    p = np.asarray(probabilities)
    labels = np.asarray(true_label)
    onehot = np.zeros_like(p)
    np.put_along_axis(onehot, labels[..., None], 1, axis=-1)
    picked = np.take_along_axis(p, labels[..., None], axis=-1)[..., 0]
    loss = -np.log(np.maximum(picked, 1e-12))
    return loss, p - onehot
