"""Declarative network descriptions and the line-oriented architecture format.

One layer per line::

    label kind key=value ...

``#`` starts a comment. Recognised kinds and keys:

========  ==========================================
input     size, channels
conv      filters, kernel, stride, pad, groups
relu
lrn       n, k, alpha, beta
maxpool   window, stride, pad
fc        units
dropout   p
softmax
output    loss (only ``crossentropy``)
========  ==========================================

Any layer also accepts ``trainable=0|1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

KINDS = ("input", "conv", "relu", "lrn", "maxpool", "fc", "dropout", "softmax", "output")
WEIGHTED_KINDS = ("conv", "fc")

_DEFAULTS = {
    "input": {"size": 227, "channels": 3},
    "conv": {"stride": 1, "pad": 0, "groups": 1},
    "relu": {},
    "lrn": {"n": 5, "k": 2.0, "alpha": 1e-4, "beta": 0.75},
    "maxpool": {"stride": 2, "pad": 0},
    "fc": {},
    "dropout": {"p": 0.5},
    "softmax": {},
    "output": {"loss": "crossentropy"},
}
_REQUIRED = {"conv": ("filters", "kernel"), "maxpool": ("window",), "fc": ("units",)}
_FLOAT_KEYS = {"k", "alpha", "beta", "p"}
_STR_KEYS = {"loss"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    label: str
    params: dict = field(default_factory=dict)
    trainable: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r} for layer {self.label!r}")
        merged = dict(_DEFAULTS[self.kind])
        merged.update(self.params)
        missing = [k for k in _REQUIRED.get(self.kind, ()) if k not in merged]
        if missing:
            raise ConfigError(f"layer {self.label!r} ({self.kind}) is missing {', '.join(missing)}")
        unknown = set(merged) - set(_DEFAULTS[self.kind]) - set(_REQUIRED.get(self.kind, ()))
        if unknown:
            raise ConfigError(f"layer {self.label!r} ({self.kind}) has unknown keys {sorted(unknown)}")
        if self.kind == "dropout" and not 0 <= merged["p"] < 1:
            raise ConfigError(f"dropout rate of {self.label!r} must lie in [0, 1)")
        if self.kind == "output" and merged["loss"] != "crossentropy":
            raise ConfigError(f"layer {self.label!r}: only crossentropy loss is supported")
        object.__setattr__(self, "params", merged)

    @property
    def weighted(self) -> bool:
        return self.kind in WEIGHTED_KINDS

    def __getitem__(self, key):
        return self.params[key]


@dataclass(frozen=True)
class ModelConfig:
    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if len(layers) < 3 or layers[0].kind != "input":
            raise ConfigError("the first layer must be an input layer")
        if layers[-2].kind != "softmax" or layers[-1].kind != "output":
            raise ConfigError("the last two layers must be softmax then output")
        if any(spec.kind in ("input", "softmax", "output") for spec in layers[1:-2]):
            raise ConfigError("input/softmax/output layers may only appear at the ends")
        labels = [spec.label for spec in layers]
        dupes = sorted({lab for lab in labels if labels.count(lab) > 1})
        if dupes:
            raise ConfigError(f"duplicate layer labels: {', '.join(dupes)}")
        if not any(spec.kind == "fc" for spec in layers):
            raise ConfigError("a model needs at least one fully-connected layer")

    @property
    def input_size(self) -> int:
        return self.layers[0]["size"]

    @property
    def input_channels(self) -> int:
        return self.layers[0]["channels"]

    @property
    def final_fc(self) -> LayerSpec:
        return [spec for spec in self.layers if spec.kind == "fc"][-1]

    @property
    def class_count(self) -> int:
        return self.final_fc["units"]

    def index_of(self, label: str) -> int:
        for i, spec in enumerate(self.layers):
            if spec.label == label:
                return i
        raise KeyError(f"no layer labelled {label!r}")

    def with_layer(self, index: int, spec: LayerSpec) -> "ModelConfig":
        layers = list(self.layers)
        layers[index] = spec
        return ModelConfig(tuple(layers))


def _parse_value(key, raw):
    if key in _STR_KEYS:
        return raw
    if key == "trainable":
        if raw not in ("0", "1", "true", "false"):
            raise ValueError(raw)
        return raw in ("1", "true")
    if key in _FLOAT_KEYS:
        return float(raw)
    return int(raw)


def parse_model_config(text: str) -> ModelConfig:
    layers = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ConfigError(f"line {lineno}: expected 'label kind key=value ...'")
        label, kind, params, trainable = parts[0], parts[1], {}, True
        for item in parts[2:]:
            key, sep, raw = item.partition("=")
            if not sep:
                raise ConfigError(f"line {lineno}: expected key=value, got {item!r}")
            try:
                value = _parse_value(key, raw)
            except ValueError:
                raise ConfigError(f"line {lineno}: bad value {raw!r} for {key}") from None
            if key == "trainable":
                trainable = value
            else:
                params[key] = value
        try:
            layers.append(LayerSpec(kind, label, params, trainable))
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return ModelConfig(tuple(layers))


def format_model_config(config: ModelConfig) -> str:
    lines = []
    for spec in config.layers:
        items = [spec.label, spec.kind] + [f"{k}={v}" for k, v in spec.params.items()]
        if not spec.trainable:
            items.append("trainable=0")
        lines.append(" ".join(items))
    return "\n".join(lines) + "\n"


def load_model_config(path) -> ModelConfig:
    return parse_model_config(Path(path).read_text())


ALEXNET = """\
# AlexNet with a two-class head
data    input   size=227 channels=3
conv1   conv    filters=96 kernel=11 stride=4 pad=0 groups=1
relu1   relu
norm1   lrn     n=5 k=2 alpha=0.0001 beta=0.75
pool1   maxpool window=3 stride=2 pad=0
conv2   conv    filters=256 kernel=5 stride=1 pad=2 groups=2
relu2   relu
norm2   lrn     n=5 k=2 alpha=0.0001 beta=0.75
pool2   maxpool window=3 stride=2 pad=0
conv3   conv    filters=384 kernel=3 stride=1 pad=1 groups=1
relu3   relu
conv4   conv    filters=384 kernel=3 stride=1 pad=1 groups=2
relu4   relu
conv5   conv    filters=256 kernel=3 stride=1 pad=1 groups=2
relu5   relu
pool5   maxpool window=3 stride=2 pad=0
fc6     fc      units=4096
relu6   relu
drop6   dropout p=0.5
fc7     fc      units=4096
relu7   relu
drop7   dropout p=0.5
fc8     fc      units=2
prob    softmax
output  output  loss=crossentropy
"""

TINY = """\
# desk-scale network for 32x32 inputs
data    input   size=32 channels=3
conv1   conv    filters=8 kernel=5 stride=1 pad=2
relu1   relu
pool1   maxpool window=2 stride=2
conv2   conv    filters=16 kernel=3 stride=1 pad=1
relu2   relu
pool2   maxpool window=2 stride=2
fc3     fc      units=32
relu3   relu
drop3   dropout p=0.5
fc4     fc      units=2
prob    softmax
output  output
"""

PRESETS = {"alexnet": ALEXNET, "tiny": TINY}


def preset(name: str, class_count: int | None = None) -> ModelConfig:
    try:
        config = parse_model_config(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    if class_count is not None:
        i = config.index_of(config.final_fc.label)
        config = config.with_layer(i, replace(config.final_fc, params={"units": class_count}))
    return config
