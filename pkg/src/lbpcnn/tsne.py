"""Exact O(N^2) t-SNE and a dependency-free SVG scatter plot."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

log = logging.getLogger(__name__)

SIGMA_BOUNDS = (1e-20, 1e20)
ENTROPY_TOL = 1e-5
MAX_BISECTIONS = 64


@dataclass(frozen=True)
class EmbeddingConfig:
    output_dims: int = 2
    perplexity: float = 15.0
    iterations: int = 500
    learning_rate: float = 100.0
    exaggeration: float = 4.0
    exaggeration_iters: int = 100
    momentum_initial: float = 0.5
    momentum_final: float = 0.8
    momentum_switch: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.output_dims != 2:
            raise ValueError("only 2-D embeddings are supported")


def _check_points(X, perplexity):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected an (N, D) array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains non-finite values")
    n = len(X)
    if n < 3:
        raise ValueError(f"t-SNE needs at least 3 points, got {n}")
    # the entropy of N-1 neighbours is at most ln(N-1)
    if not 1 < perplexity < n - 1:
        raise ValueError(f"perplexity must lie in (1, {n - 1}) for {n} points, got {perplexity}")
    if perplexity >= (n - 1) / 3:
        log.warning("perplexity %g is large for %d points; (N-1)/3 = %.3g is the usual ceiling", perplexity, n, (n - 1) / 3)
    if np.all(X == X[0]):
        raise ValueError("all input points are identical")
    return X


def squared_distances(X):
    sq = np.sum(X * X, axis=1)
    d = sq[:, None] + sq[None, :] - 2 * X @ X.T
    np.fill_diagonal(d, 0)
    return np.maximum(d, 0)


def conditional_row(d_row, sigma):
    """p_{j|i} for one point given its squared distances to the others."""
    z = -(d_row - d_row.min()) / (2 * sigma * sigma)
    e = np.exp(z)
    return e / e.sum()


def row_entropy(p):
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def _calibrate(d_row, target):
    lo, hi = np.log(SIGMA_BOUNDS[0]), np.log(SIGMA_BOUNDS[1])
    best = None
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        p = conditional_row(d_row, np.exp(mid))
        h = row_entropy(p)
        if best is None or abs(h - target) < abs(best[2] - target):
            best = (np.exp(mid), p, h)
        if abs(h - target) <= ENTROPY_TOL:
            break
        if h > target:
            hi = mid
        else:
            lo = mid
    return best


def input_affinities(X, perplexity: float, return_sigmas: bool = False):
    """Symmetric joint affinities P with per-point bandwidths matched to ``perplexity``."""
    X = _check_points(X, perplexity)
    n = len(X)
    d = squared_distances(X)
    target = np.log(perplexity)
    cond = np.zeros((n, n))
    sigmas = np.empty(n)
    others = ~np.eye(n, dtype=bool)
    for i in range(n):
        sigma, p, h = _calibrate(d[i, others[i]], target)
        if abs(h - target) > ENTROPY_TOL:
            # tied distances bound the reachable entropy; keep the closest row
            log.warning("point %d: entropy %.6g cannot reach ln(perplexity) = %.6g", i, h, target)
        cond[i, others[i]] = p
        sigmas[i] = sigma
    P = (cond + cond.T) / (2 * n)
    return (P, sigmas) if return_sigmas else P


def student_q(Y):
    """Returns (Q, kernel) where kernel_ij = 1 / (1 + |y_i - y_j|^2) with a zero diagonal."""
    kernel = 1.0 / (1.0 + squared_distances(Y))
    np.fill_diagonal(kernel, 0)
    return kernel / kernel.sum(), kernel


def kl_divergence(P, Y) -> float:
    Q, _ = student_q(Y)
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-300))))


def kl_gradient(P, Y):
    """dKL/dy_i = 4 sum_j (p_ij - q_ij)(1 + |y_i - y_j|^2)^-1 (y_i - y_j)."""
    Q, kernel = student_q(Y)
    W = (P - Q) * kernel
    return 4 * (W.sum(axis=1)[:, None] * Y - W @ Y)


def tsne_embed(X, cfg: EmbeddingConfig = EmbeddingConfig(), init=None):
    """Embed ``X`` in 2-D; return (Y, KL trace with one entry per iteration).

    ``init`` overrides the seeded Gaussian initialisation (std 1e-4).
    """
    P = input_affinities(X, cfg.perplexity)
    n = len(P)
    if init is None:
        Y = np.random.default_rng(cfg.seed).normal(0, 1e-4, (n, cfg.output_dims))
    else:
        Y = np.array(init, dtype=np.float64)
    velocity = np.zeros_like(Y)
    trace = []
    for it in range(cfg.iterations):
        scale = cfg.exaggeration if it < cfg.exaggeration_iters else 1.0
        momentum = cfg.momentum_initial if it < cfg.momentum_switch else cfg.momentum_final
        grad = kl_gradient(scale * P, Y)
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite t-SNE gradient at iteration {it}")
        velocity = momentum * velocity - cfg.learning_rate * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)
        trace.append(kl_divergence(P, Y))
    return Y, trace


def load_feature_csv(path) -> np.ndarray:
    """N rows of comma-separated features; '#' lines are skipped."""
    return np.atleast_2d(np.loadtxt(path, delimiter=",", comments="#", dtype=np.float64))


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def scatter_svg(Y, labels, size: int = 480, title: str = "") -> str:
    Y = np.asarray(Y, dtype=np.float64)
    labels = [str(lab) for lab in labels]
    if len(Y) != len(labels):
        raise ValueError(f"{len(Y)} points but {len(labels)} labels")
    classes = list(dict.fromkeys(labels))
    lo, hi = (Y.min(axis=0), Y.max(axis=0)) if len(Y) else (np.zeros(2), np.ones(2))
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    lo, span = lo - 0.05 * span, span * 1.1
    legend_h = 16 * len(classes) + 8
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + legend_h}" '
        f'viewBox="0 0 {size} {size + legend_h}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white" stroke="black"/>',
    ]
    if title:
        out.append(f'<title>{escape(title)}</title>')
    for (x, y), lab in zip(Y, labels):
        px = (x - lo[0]) / span[0] * size
        py = size - (y - lo[1]) / span[1] * size
        color = PALETTE[classes.index(lab) % len(PALETTE)]
        out.append(f'<circle cx="{px:.3f}" cy="{py:.3f}" r="3" fill="{color}"/>')
    for k, lab in enumerate(classes):
        y = size + 14 + 16 * k
        out.append(f'<rect x="8" y="{y - 9}" width="10" height="10" fill="{PALETTE[k % len(PALETTE)]}"/>')
        out.append(f'<text x="24" y="{y}" font-size="12" font-family="sans-serif">{escape(lab)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_scatter_svg(Y, labels, path, title: str = "") -> None:
    Path(path).write_text(scatter_svg(Y, labels, title=title))
