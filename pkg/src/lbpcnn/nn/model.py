"""Layer objects, model construction, inference and transfer-learning surgery."""

from __future__ import annotations

import copy
from dataclasses import dataclass, replace

import numpy as np

from . import functional as F
from .config import LayerSpec, ModelConfig


class ShapeError(ValueError):
    pass


class Layer:
    """One network stage. Weighted layers keep ``params`` and ``grads`` dicts."""

    def __init__(self, spec: LayerSpec, in_shape: tuple):
        self.spec = spec
        self.in_shape = in_shape
        self.out_shape = in_shape
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    @property
    def label(self):
        return self.spec.label

    def forward(self, x, training=False, rng=None):
        return x

    def backward(self, grad):
        return grad

    def init_params(self, rng, dtype):
        pass


class Input(Layer):
    def __init__(self, spec, in_shape):
        super().__init__(spec, (spec["channels"], spec["size"], spec["size"]))


class Conv(Layer):
    def __init__(self, spec, in_shape):
        super().__init__(spec, in_shape)
        if len(in_shape) != 3:
            raise ShapeError(f"{spec.label}: convolution needs a (C,H,W) input, got {in_shape}")
        c, h, w = in_shape
        f, k, groups = spec["filters"], spec["kernel"], spec["groups"]
        if c % groups or f % groups:
            raise ShapeError(f"{spec.label}: {c} channels / {f} filters not divisible by {groups} groups")
        oh = F.output_extent(h, k, spec["stride"], spec["pad"])
        ow = F.output_extent(w, k, spec["stride"], spec["pad"])
        if oh < 1 or ow < 1:
            raise ShapeError(f"{spec.label}: {k}x{k} kernel does not fit a {h}x{w} input")
        self.out_shape = (f, oh, ow)
        self.weight_shape = (f, c // groups, k, k)

    def init_params(self, rng, dtype):
        f, cg, k, _ = self.weight_shape
        std = np.sqrt(2.0 / (cg * k * k))
        self.params = {
            "weight": (rng.standard_normal(self.weight_shape, dtype=dtype) * dtype(std)).astype(dtype),
            "bias": np.zeros(f, dtype=dtype),
        }

    def forward(self, x, training=False, rng=None):
        self._cache = x
        s = self.spec
        return F.conv_forward(x, self.params["weight"], self.params["bias"], s["stride"], s["pad"], s["groups"])

    def backward(self, grad):
        s = self.spec
        gx, gw, gb = F.conv_backward(grad, self._cache, self.params["weight"], s["stride"], s["pad"], s["groups"])
        self.grads = {"weight": gw, "bias": gb}
        return gx


class ReLU(Layer):
    def forward(self, x, training=False, rng=None):
        self._cache = x
        return F.relu(x)

    def backward(self, grad):
        return F.relu_backward(grad, self._cache)


class LRN(Layer):
    def __init__(self, spec, in_shape):
        super().__init__(spec, in_shape)
        if len(in_shape) != 3:
            raise ShapeError(f"{spec.label}: normalization needs a (C,H,W) input, got {in_shape}")

    def _args(self):
        s = self.spec
        return s["n"], s["k"], s["alpha"], s["beta"]

    def forward(self, x, training=False, rng=None):
        self._cache = x
        return F.lrn_forward(x, *self._args()).astype(x.dtype, copy=False)

    def backward(self, grad):
        return F.lrn_backward(grad, self._cache, *self._args()).astype(grad.dtype, copy=False)


class MaxPool(Layer):
    def __init__(self, spec, in_shape):
        super().__init__(spec, in_shape)
        if len(in_shape) != 3:
            raise ShapeError(f"{spec.label}: pooling needs a (C,H,W) input, got {in_shape}")
        c, h, w = in_shape
        oh = F.output_extent(h, spec["window"], spec["stride"], spec["pad"])
        ow = F.output_extent(w, spec["window"], spec["stride"], spec["pad"])
        if oh < 1 or ow < 1:
            raise ShapeError(f"{spec.label}: {spec['window']}x{spec['window']} window does not fit {h}x{w}")
        self.out_shape = (c, oh, ow)

    def forward(self, x, training=False, rng=None):
        out, self._cache = F.maxpool_forward(x, self.spec["window"], self.spec["stride"], self.spec["pad"])
        return out

    def backward(self, grad):
        return F.maxpool_backward(grad, self._cache)


class FC(Layer):
    def __init__(self, spec, in_shape):
        super().__init__(spec, in_shape)
        self.fan_in = int(np.prod(in_shape))
        self.out_shape = (spec["units"],)
        self.weight_shape = (spec["units"], self.fan_in)

    def init_params(self, rng, dtype):
        std = np.sqrt(2.0 / self.fan_in)
        self.params = {
            "weight": (rng.standard_normal(self.weight_shape, dtype=dtype) * dtype(std)).astype(dtype),
            "bias": np.zeros(self.spec["units"], dtype=dtype),
        }

    def forward(self, x, training=False, rng=None):
        flat = x.reshape(x.shape[0], -1)
        self._cache = (flat, x.shape)
        return F.fc_forward(flat, self.params["weight"], self.params["bias"])

    def backward(self, grad):
        flat, shape = self._cache
        gx, gw, gb = F.fc_backward(grad, flat, self.params["weight"])
        self.grads = {"weight": gw, "bias": gb}
        return gx.reshape(shape)


class Dropout(Layer):
    def forward(self, x, training=False, rng=None):
        out, self._cache = F.dropout_forward(x, self.spec["p"], training, rng)
        return out

    def backward(self, grad):
        return F.dropout_backward(grad, self._cache)


class Softmax(Layer):
    def forward(self, x, training=False, rng=None):
        return F.softmax(x)


_LAYER_TYPES = {
    "input": Input,
    "conv": Conv,
    "relu": ReLU,
    "lrn": LRN,
    "maxpool": MaxPool,
    "fc": FC,
    "dropout": Dropout,
    "softmax": Softmax,
    "output": Layer,
}


@dataclass
class Decision:
    label: int
    probabilities: np.ndarray
    stream_tag: str


class Model:
    """A built network. Layers run on batches of shape (N, C, H, W)."""

    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype).type
        self.layers: list[Layer] = []
        shape = None
        for prev, spec in zip((None,) + config.layers[:-1], config.layers):
            try:
                layer = _LAYER_TYPES[spec.kind](spec, shape)
            except ShapeError as exc:
                raise ShapeError(f"{exc} (input from layer {prev.label!r})" if prev else str(exc)) from None
            self.layers.append(layer)
            shape = layer.out_shape
        if shape != (config.class_count,):
            raise ShapeError(f"network output shape {shape} is not ({config.class_count},)")

    @property
    def input_shape(self):
        return self.layers[0].out_shape

    def layer(self, label: str) -> Layer:
        return self.layers[self.config.index_of(label)]

    def weighted_layers(self):
        return [layer for layer in self.layers if layer.spec.weighted]

    def _check_input(self, x):
        x = np.asarray(x)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"input shape {x.shape[1:]} does not match model input {self.input_shape}")
        return x.astype(self.dtype, copy=False)

    def logits(self, x, training=False, rng=None):
        """Forward through every layer before the softmax."""
        out = self._check_input(x)
        for layer in self.layers[:-2]:
            out = layer.forward(out, training, rng)
        return out

    def forward_until(self, x, stop: int):
        """Evaluation-mode forward through layers[0..stop] inclusive."""
        out = self._check_input(x)
        for layer in self.layers[: stop + 1]:
            out = layer.forward(out, False, None)
        return out

    def backward_logits(self, grad):
        """Backpropagate a logit gradient, stopping below the earliest trainable layer."""
        weighted = [i for i, layer in enumerate(self.layers) if layer.spec.weighted and layer.spec.trainable]
        if not weighted:
            return
        for layer in reversed(self.layers[weighted[0] : -2]):
            grad = layer.backward(grad)
        for layer in self.layers[: weighted[0]]:
            layer.grads = {}

    def probabilities(self, x):
        return F.softmax(self.logits(x))

    def __deepcopy__(self, memo):
        clone = copy.copy(self)
        clone.layers = []
        for layer in self.layers:
            new = copy.copy(layer)
            new.params = {k: v.copy() for k, v in layer.params.items()}
            new.grads = {}
            new._cache = None
            clone.layers.append(new)
        return clone


def build_model(config: ModelConfig, seed: int = 0, dtype=np.float32) -> Model:
    """Shape-check ``config`` and initialise conv/fc weights (He Gaussian, zero bias)."""
    model = Model(config, dtype)
    rng = np.random.default_rng(seed)
    for layer in model.weighted_layers():
        layer.init_params(rng, model.dtype)
    return model


def resolve_label(config: ModelConfig, label: str) -> str:
    """Map the alias ``fc-final`` to the label of the last fully-connected layer."""
    if label == "fc-final":
        return config.final_fc.label
    config.index_of(label)
    return label


def transfer_modify(model: Model, class_count: int, freeze_before: str | None = None, seed: int = 0) -> Model:
    """Return a copy whose final fc has ``class_count`` freshly initialised outputs.

    With ``freeze_before`` set, every layer strictly before that label is made
    non-trainable; otherwise all layers are trainable.
    """
    config = model.config
    final = config.final_fc
    fi = config.index_of(final.label)
    stop = config.index_of(resolve_label(config, freeze_before)) if freeze_before is not None else 0
    layers = list(config.layers)
    layers[fi] = replace(final, params={"units": class_count})
    layers = [replace(spec, trainable=i >= stop) for i, spec in enumerate(layers)]
    new_config = ModelConfig(tuple(layers))

    new = Model(new_config, model.dtype)
    for old_layer, new_layer in zip(model.layers, new.layers):
        if old_layer.spec.weighted and old_layer.label != final.label:
            new_layer.params = {k: v.copy() for k, v in old_layer.params.items()}
    new.layers[fi].init_params(np.random.default_rng(seed), new.dtype)
    return new


def predict(model: Model, tensor, stream_tag: str = "") -> Decision:
    probs = model.probabilities(tensor)[0]
    return Decision(int(np.argmax(probs)), probs, stream_tag)


def predict_batch(model: Model, tensors, stream_tags) -> list[Decision]:
    probs = model.probabilities(np.stack(tensors))
    return [Decision(int(np.argmax(p)), p, tag) for p, tag in zip(probs, stream_tags)]


def extract_activations(model: Model, tensor, layer_label: str) -> np.ndarray:
    """Evaluation-mode output of the named layer, flattened."""
    index = model.config.index_of(resolve_label(model.config, layer_label))
    return model.forward_until(tensor, index).reshape(-1)
