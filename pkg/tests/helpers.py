"""Independent oracles shared by the test modules."""

import numpy as np

EPS = 1e-5
REL_TOL = 1e-4


def numerical_grad(f, x, eps=EPS):
    """Central differences of scalar f with respect to every entry of x (modified in place, then restored)."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + eps
        up = f()
        x[i] = orig - eps
        down = f()
        x[i] = orig
        grad[i] = (up - down) / (2 * eps)
    return grad


def rel_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


def conv_loop(x, w, b, stride, pad, groups):
    """Direct sliding-window cross-correlation on a single (C, H, W) input."""
    c, h, wd = x.shape
    f, cg, kh, kw = w.shape
    xp = np.zeros((c, h + 2 * pad, wd + 2 * pad))
    xp[:, pad : pad + h, pad : pad + wd] = x
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    fg = f // groups
    out = np.zeros((f, oh, ow))
    for k in range(f):
        g = k // fg
        for i in range(oh):
            for j in range(ow):
                patch = xp[g * cg : (g + 1) * cg, i * stride : i * stride + kh, j * stride : j * stride + kw]
                out[k, i, j] = np.sum(patch * w[k]) + b[k]
    return out


def lrn_loop(x, n, k, alpha, beta):
    c = x.shape[0]
    out = np.empty_like(x)
    for ch in range(c):
        lo, hi = max(0, ch - n // 2), min(c - 1, ch + n // 2)
        s = np.sum(x[lo : hi + 1] ** 2, axis=0)
        out[ch] = x[ch] / (k + alpha / n * s) ** beta
    return out


def maxpool_loop(x, window, stride, pad):
    c, h, w = x.shape
    xp = np.full((c, h + 2 * pad, w + 2 * pad), -np.inf)
    xp[:, pad : pad + h, pad : pad + w] = x
    oh = (h + 2 * pad - window) // stride + 1
    ow = (w + 2 * pad - window) // stride + 1
    out = np.empty((c, oh, ow))
    for ch in range(c):
        for i in range(oh):
            for j in range(ow):
                out[ch, i, j] = xp[ch, i * stride : i * stride + window, j * stride : j * stride + window].max()
    return out


def silhouette(Y, labels):
    """Mean silhouette coefficient by direct enumeration."""
    Y = np.asarray(Y, dtype=np.float64)
    labels = np.asarray(labels)
    scores = []
    for i in range(len(Y)):
        d = np.sqrt(np.sum((Y - Y[i]) ** 2, axis=1))
        same = labels == labels[i]
        same[i] = False
        a = d[same].mean()
        b = min(d[labels == k].mean() for k in np.unique(labels) if k != labels[i])
        scores.append((b - a) / max(a, b))
    return float(np.mean(scores))
