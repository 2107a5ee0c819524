"""Basic 3x3 local binary pattern operator producing same-size LBP images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import ImageU8

# (dy, dx) clockwise from the top-left neighbour; index 0 carries the MSB
NEIGHBOR_OFFSETS = (
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
)


@dataclass(frozen=True)
class LbpConfig:
    """LBP(P=8, R=1), neighbour >= centre sets the bit, MSB at top-left.

    Only this parameterization is supported; the fields exist so callers can
    state it explicitly.
    """

    neighbor_count: int = 8
    radius: int = 1

    def __post_init__(self):
        if self.neighbor_count != 8 or self.radius != 1:
            raise ValueError("only LBP with 8 neighbours at radius 1 is supported")


DEFAULT_LBP = LbpConfig()


def _check(gray: ImageU8) -> None:
    if gray.channels != 1:
        raise ValueError(f"LBP needs a 1-channel image, got {gray.channels} channels")
    if gray.width < 3 or gray.height < 3:
        raise ValueError(f"LBP needs at least 3x3 pixels, got {gray.width}x{gray.height}")


def lbp_image(gray: ImageU8, cfg: LbpConfig = DEFAULT_LBP) -> ImageU8:
    """LBP code image, same size as ``gray`` (borders use replicate padding)."""
    _check(gray)
    plane = gray.plane
    h, w = plane.shape
    padded = np.pad(plane, 1, mode="edge")
    codes = np.zeros((h, w), dtype=np.uint8)
    for i, (dy, dx) in enumerate(NEIGHBOR_OFFSETS):
        neighbor = padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        codes |= (neighbor >= plane).astype(np.uint8) << np.uint8(7 - i)
    return ImageU8(codes)


def lbp_brute_force(gray: ImageU8, x: int, y: int, cfg: LbpConfig = DEFAULT_LBP) -> int:
    """Single-pixel LBP code by explicit neighbour enumeration; a test oracle."""
    _check(gray)
    if not (0 <= x < gray.width and 0 <= y < gray.height):
        raise IndexError(f"pixel ({x}, {y}) outside {gray.width}x{gray.height} image")
    plane = gray.plane
    center = int(plane[y, x])
    code = 0
    for i, (dy, dx) in enumerate(NEIGHBOR_OFFSETS):
        ny = min(max(y + dy, 0), gray.height - 1)
        nx = min(max(x + dx, 0), gray.width - 1)
        if int(plane[ny, nx]) >= center:
            code += 2 ** (7 - i)
    return code


def lbp_histogram(gray: ImageU8) -> np.ndarray:
    """Normalized 256-bin histogram of LBP codes."""
    counts = np.bincount(lbp_image(gray).plane.ravel(), minlength=256).astype(np.float64)
    return counts / counts.sum()
