"""Binary weights file.

Little-endian layout::

    b"GLCW"  u32 version=1  u32 layer_count
    per weighted layer:
        u16 label_len  label (UTF-8)  u8 tensor_count
        per tensor: u8 ndim  u32 extent * ndim  float32 * prod(extents)

Tensors are written in the order weight, bias.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import Model

MAGIC = b"GLCW"
VERSION = 1
TENSOR_NAMES = ("weight", "bias")


class WeightsFormatError(ValueError):
    pass


class WeightsShapeError(ValueError):
    def __init__(self, message, layer):
        super().__init__(message)
        self.layer = layer


def dumps_weights(model: Model) -> bytes:
    layers = model.weighted_layers()
    out = [MAGIC, struct.pack("<II", VERSION, len(layers))]
    for layer in layers:
        label = layer.label.encode("utf-8")
        out.append(struct.pack("<H", len(label)) + label + struct.pack("<B", len(TENSOR_NAMES)))
        for name in TENSOR_NAMES:
            t = layer.params[name]
            out.append(struct.pack("<B", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
            out.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WeightsFormatError(f"truncated weights file: needed {n} bytes at offset {self.pos}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads_weights(model: Model, data: bytes) -> None:
    """Validate ``data`` fully against ``model``, then copy the tensors in."""
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise WeightsFormatError("not a weights file (bad magic)")
    version, count = r.unpack("<II")
    if version != VERSION:
        raise WeightsFormatError(f"unsupported weights version {version}")
    layers = {layer.label: layer for layer in model.weighted_layers()}
    staged = {}
    for _ in range(count):
        (n,) = r.unpack("<H")
        label = r.take(n).decode("utf-8")
        (tcount,) = r.unpack("<B")
        if label not in layers:
            raise WeightsShapeError(f"weights file has layer {label!r} which the model lacks", label)
        if tcount != len(TENSOR_NAMES):
            raise WeightsShapeError(f"layer {label!r}: expected {len(TENSOR_NAMES)} tensors, got {tcount}", label)
        for name in TENSOR_NAMES:
            (ndim,) = r.unpack("<B")
            shape = r.unpack(f"<{ndim}I")
            expected = layers[label].params[name].shape
            if tuple(shape) != expected:
                raise WeightsShapeError(f"layer {label!r} {name}: file shape {shape} != model shape {expected}", label)
            raw = r.take(4 * int(np.prod(shape)))
            staged[label, name] = np.frombuffer(raw, dtype="<f4").reshape(shape)
    missing = sorted(set(layers) - {label for label, _ in staged})
    if missing:
        raise WeightsShapeError(f"weights file lacks layers {', '.join(missing)}", missing[0])
    if r.pos != len(data):
        raise WeightsFormatError(f"{len(data) - r.pos} trailing bytes after the last layer")
    for (label, name), t in staged.items():
        layers[label].params[name] = t.astype(model.dtype)


def read_weight_shapes(path) -> dict:
    """{label: [tensor shapes]} of a weights file, without needing a model."""
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise WeightsFormatError("not a weights file (bad magic)")
    version, count = r.unpack("<II")
    if version != VERSION:
        raise WeightsFormatError(f"unsupported weights version {version}")
    shapes = {}
    for _ in range(count):
        (n,) = r.unpack("<H")
        label = r.take(n).decode("utf-8")
        (tcount,) = r.unpack("<B")
        shapes[label] = []
        for _ in range(tcount):
            (ndim,) = r.unpack("<B")
            shape = r.unpack(f"<{ndim}I")
            r.take(4 * int(np.prod(shape)))
            shapes[label].append(tuple(shape))
    return shapes


def save_weights(model: Model, path) -> None:
    Path(path).write_bytes(dumps_weights(model))


def load_weights(model: Model, path) -> Model:
    loads_weights(model, Path(path).read_bytes())
    return model
