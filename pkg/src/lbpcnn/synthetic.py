"""Two-class texture corpus standing in for a fundus image set.

Class ``normal`` images are smooth, low-frequency blob fields; class
``glaucoma`` images are fine checkerboards. Both classes share the same
per-image colour means, so mean intensity does not separate them while local
texture (and hence LBP) does.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .imaging import ImageU8, write_pnm
from .labels import CLASSES


def _blobs(rng, size, base):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    out = np.empty((size, size, 3))
    for c in range(3):
        field = np.zeros((size, size))
        for _ in range(3):
            cy, cx = rng.uniform(0, size, 2)
            width = rng.uniform(size / 4, size / 2)
            field += rng.uniform(-40, 40) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2))
        out[:, :, c] = field - field.mean() + base[c]
    return out


def _checker(rng, size, base):
    cell = int(rng.integers(1, 3))
    yy, xx = np.mgrid[0:size, 0:size]
    sign = np.where(((yy // cell) + (xx // cell)) % 2 == 0, 1.0, -1.0)
    out = np.empty((size, size, 3))
    for c in range(3):
        out[:, :, c] = base[c] + rng.uniform(20, 40) * sign + rng.normal(0, 2, (size, size))
    return out


def synthetic_image(kind: int, size: int, base, rng) -> ImageU8:
    field = _blobs(rng, size, base) if kind == 0 else _checker(rng, size, base)
    return ImageU8(np.clip(np.floor(field + 0.5), 0, 255).astype(np.uint8))


def generate_synthetic_dataset(n_per_class: int, image_size: int, seed: int, out_dir):
    """Write ``2 * n_per_class`` PPM images plus ``manifest.csv``; return the manifest."""
    from .harness import DatasetManifest

    if n_per_class < 2:
        raise ValueError("n_per_class must be at least 2")
    if image_size < 8:
        raise ValueError("image_size must be at least 8")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    # one shared set of colour means so both classes have matched intensity
    bases = rng.uniform(90, 166, (n_per_class, 3))
    entries = []
    for label, name in enumerate(CLASSES):
        for i in range(n_per_class):
            fname = f"{name}_{i:04d}.ppm"
            write_pnm(synthetic_image(label, image_size, bases[i], rng), out / fname)
            entries.append((fname, label))
    lines = [f"{path},{CLASSES[label]}" for path, label in entries]
    (out / "manifest.csv").write_text("\n".join(lines) + "\n")
    return DatasetManifest(tuple(entries), out)
