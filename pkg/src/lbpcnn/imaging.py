"""8-bit raster images: PNM codec, channel splitting, resizing, tensor conversion."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class ImageU8:
    """A height x width x channels array of uint8 intensities.

    ``pixels`` is stored as an (h, w, c) array, which is the row-major,
    channel-interleaved layout of the raster.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w, 1|3) pixels, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"empty image of shape {px.shape}")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255):
                raise ValueError("intensities must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def data(self) -> bytes:
        return self.pixels.tobytes()

    @property
    def plane(self) -> np.ndarray:
        """The (h, w) array of a single-channel image."""
        if self.channels != 1:
            raise ValueError(f"plane() needs a 1-channel image, got {self.channels}")
        return self.pixels[:, :, 0]

    def __eq__(self, other):
        if not isinstance(other, ImageU8):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"ImageU8({self.width}x{self.height}x{self.channels})"


class PnmError(ValueError):
    """Base class for PNM parse failures; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class PnmHeaderError(PnmError):
    pass


class PnmMaxvalError(PnmError):
    pass


class PnmTruncatedError(PnmError):
    pass


_MAGIC_CHANNELS = {b"P2": 1, b"P3": 3, b"P5": 1, b"P6": 3}
_WHITESPACE = b" \t\n\r\v\f"


def _next_token(buf: bytes, pos: int) -> tuple[bytes, int, int]:
    """Return (token, start, end) of the next whitespace-delimited token, skipping '#' comments."""
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c in _WHITESPACE and c:
            pos += 1
        elif c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and buf[pos : pos + 1] not in _WHITESPACE and buf[pos : pos + 1] != b"#":
        pos += 1
    return buf[start:pos], start, pos


def _header_int(buf: bytes, pos: int, what: str) -> tuple[int, int, int]:
    tok, start, end = _next_token(buf, pos)
    if not tok:
        raise PnmTruncatedError(f"missing {what} in header", start)
    if not tok.isdigit():
        raise PnmHeaderError(f"invalid {what} {tok[:16]!r}", start)
    return int(tok), start, end


def decode_pnm(data: bytes) -> ImageU8:
    """Decode a P2/P3/P5/P6 image with maxval 255."""
    data = bytes(data)
    magic = data[:2]
    if magic not in _MAGIC_CHANNELS:
        raise PnmHeaderError(f"bad magic {magic!r}", 0)
    channels = _MAGIC_CHANNELS[magic]
    pos = 2
    width, start, pos = _header_int(data, pos, "width")
    height, _, pos = _header_int(data, pos, "height")
    if width < 1 or height < 1:
        raise PnmHeaderError(f"non-positive dimensions {width}x{height}", start)
    maxval, maxval_start, pos = _header_int(data, pos, "maxval")
    if maxval != 255:
        raise PnmMaxvalError(f"maxval must be 255, got {maxval}", maxval_start)
    count = width * height * channels

    if magic in (b"P5", b"P6"):
        # exactly one whitespace byte separates the header from the raster
        if pos >= len(data) or data[pos : pos + 1] not in _WHITESPACE:
            raise PnmTruncatedError("missing whitespace before raster", pos)
        pos += 1
        raster = data[pos : pos + count]
        if len(raster) < count:
            raise PnmTruncatedError(f"raster needs {count} bytes, found {len(raster)}", pos + len(raster))
        values = np.frombuffer(raster, dtype=np.uint8)
    else:
        values = np.empty(count, dtype=np.uint8)
        for i in range(count):
            tok, start, pos = _next_token(data, pos)
            if not tok:
                raise PnmTruncatedError(f"raster needs {count} samples, found {i}", start)
            if not tok.isdigit() or int(tok) > 255:
                raise PnmHeaderError(f"invalid sample {tok[:16]!r}", start)
            values[i] = int(tok)
    return ImageU8(values.reshape(height, width, channels))


def encode_pnm(image: ImageU8) -> bytes:
    """Encode as raw PGM (P5) or raw PPM (P6)."""
    magic = b"P5" if image.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, image.width, image.height)
    return header + image.data


def read_pnm(path) -> ImageU8:
    return decode_pnm(Path(path).read_bytes())


def write_pnm(image: ImageU8, path) -> None:
    Path(path).write_bytes(encode_pnm(image))


def split_channels(image: ImageU8) -> tuple[ImageU8, ImageU8, ImageU8]:
    if image.channels != 3:
        raise ValueError(f"split_channels needs 3 channels, got {image.channels}")
    px = image.pixels
    return ImageU8(px[:, :, 0:1]), ImageU8(px[:, :, 1:2]), ImageU8(px[:, :, 2:3])


def merge_channels(r: ImageU8, g: ImageU8, b: ImageU8) -> ImageU8:
    """Interleave three 1-channel planes; inverse of split_channels."""
    for p in (r, g, b):
        if p.channels != 1:
            raise ValueError("merge_channels needs 1-channel planes")
    return ImageU8(np.concatenate([r.pixels, g.pixels, b.pixels], axis=2))


def _bilinear_axis(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centres: src = (dst + 0.5) * n_in / n_out - 0.5
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(image: ImageU8, out_w: int, out_h: int) -> ImageU8:
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    if (out_w, out_h) == (image.width, image.height):
        return image
    px = image.pixels.astype(np.float64)
    y0, y1, fy = _bilinear_axis(image.height, out_h)
    x0, x1, fx = _bilinear_axis(image.width, out_w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = px[y0][:, x0] * (1 - fx) + px[y0][:, x1] * fx
    bottom = px[y1][:, x0] * (1 - fx) + px[y1][:, x1] * fx
    out = top * (1 - fy) + bottom * fy
    # round half up, then clamp
    out = np.clip(np.floor(out + 0.5), 0, 255)
    return ImageU8(out.astype(np.uint8))


def replicate_to_3ch(gray: ImageU8) -> ImageU8:
    if gray.channels != 1:
        raise ValueError(f"replicate_to_3ch needs 1 channel, got {gray.channels}")
    return ImageU8(np.repeat(gray.pixels, 3, axis=2))


def to_tensor(image: ImageU8, dtype=np.float64) -> np.ndarray:
    """(channels, height, width) array of intensity / 255."""
    chw = np.transpose(image.pixels, (2, 0, 1)).astype(np.float64) / 255.0
    return np.ascontiguousarray(chw, dtype=dtype)
