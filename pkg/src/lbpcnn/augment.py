"""Training and testing sample streams: colour planes, plus LBP planes for training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import ImageU8, replicate_to_3ch, resize_bilinear, split_channels, to_tensor
from .labels import LBP_STREAMS, RAW_STREAMS
from .lbp import lbp_image


@dataclass(frozen=True, eq=False)
class Sample:
    tensor: np.ndarray
    label: int
    source_id: str
    stream_tag: str


def plane_sample(plane: ImageU8, label: int, source_id: str, tag: str, input_size: int, dtype=np.float32) -> Sample:
    """Resize a single plane, replicate it into 3 channels and tensorize it."""
    rgb = replicate_to_3ch(resize_bilinear(plane, input_size, input_size))
    return Sample(to_tensor(rgb, dtype), label, source_id, tag)


def channel_planes(image: ImageU8, lbp: bool) -> list[tuple[str, ImageU8]]:
    """(tag, plane) pairs at the original resolution; LBP codes are taken before resizing."""
    planes = list(zip(RAW_STREAMS, split_channels(image)))
    if lbp:
        planes += [(tag, lbp_image(p)) for tag, (_, p) in zip(LBP_STREAMS, planes)]
    return planes


def augment_training_image(image: ImageU8, label: int, input_size: int, source_id: str = "", dtype=np.float32) -> list[Sample]:
    """Six samples: R, G, B and the LBP image of each."""
    return [plane_sample(p, label, source_id, tag, input_size, dtype) for tag, p in channel_planes(image, lbp=True)]


def prepare_test_image(image: ImageU8, label: int, input_size: int, source_id: str = "", dtype=np.float32) -> list[Sample]:
    """Three samples (R, G, B); test images are never LBP-augmented."""
    return [plane_sample(p, label, source_id, tag, input_size, dtype) for tag, p in channel_planes(image, lbp=False)]
