"""Mini-batch SGD with momentum."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .functional import cross_entropy, softmax
from .model import Model, ShapeError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    momentum: float = 0.9
    batch_size: int = 20
    epochs: int = 80
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be at least 1")


class TrainingError(RuntimeError):
    pass


def sgdm_step(weights, grads, velocities, lr, momentum):
    """v <- momentum * v + g;  w <- w - lr * v.  Returns (weights, velocities)."""
    weights = np.asarray(weights)
    grads = np.asarray(grads)
    velocities = np.asarray(velocities)
    if not weights.shape == grads.shape == velocities.shape:
        raise ValueError(f"shape mismatch: {weights.shape}, {grads.shape}, {velocities.shape}")
    v = momentum * velocities + grads
    w = weights - lr * v
    return w.astype(weights.dtype, copy=False), v.astype(velocities.dtype, copy=False)


def _sample_tensor(sample):
    return sample.tensor if hasattr(sample, "tensor") else sample[0]


def _sample_label(sample):
    return sample.label if hasattr(sample, "label") else sample[1]


def train(model: Model, samples, cfg: TrainConfig, on_epoch=None) -> tuple[Model, list[float]]:
    """Train ``model`` in place on ``samples``; return it and the mean loss per epoch.

    ``samples`` holds objects with ``tensor`` and ``label`` attributes (or
    (tensor, label) pairs). Shuffling and dropout draw from one generator
    seeded with ``cfg.seed``. ``on_epoch(epoch, model)`` runs after each
    epoch; returning True stops training early.
    """
    if not samples:
        raise ValueError("train needs at least one sample")
    X = np.stack([np.asarray(_sample_tensor(s)) for s in samples]).astype(model.dtype, copy=False)
    y = np.array([_sample_label(s) for s in samples], dtype=np.intp)
    if X.shape[1:] != model.input_shape:
        raise ShapeError(f"sample shape {X.shape[1:]} does not match model input {model.input_shape}")

    rng = np.random.default_rng(cfg.seed)
    trainable = [layer for layer in model.layers if layer.spec.weighted and layer.spec.trainable]
    velocity = {(layer.label, k): np.zeros_like(v) for layer in trainable for k, v in layer.params.items()}
    trace = []
    n = len(X)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            logits = model.logits(X[idx], training=True, rng=rng)
            losses, grad = cross_entropy(softmax(logits.astype(np.float64)), y[idx])
            loss = float(losses.sum())
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            total += loss
            model.backward_logits((grad / len(idx)).astype(model.dtype))
            for layer in trainable:
                for k in layer.params:
                    key = (layer.label, k)
                    layer.params[k], velocity[key] = sgdm_step(
                        layer.params[k], layer.grads[k], velocity[key], cfg.learning_rate, cfg.momentum
                    )
        trace.append(total / n)
        log.info("epoch %d/%d  loss %.6f", epoch + 1, cfg.epochs, trace[-1])
        if on_epoch is not None and on_epoch(epoch, model):
            break
    return model, trace
