"""Synthetic labelled datasets for demos and tests."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional

import numpy as np

from idaug.sample import LabeledSample, save_sample, write_manifest


def _background(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    base = rng.uniform(40, 200, size=3)
    slope = rng.uniform(-60, 60, size=(2, 3))
    img = base + xx[..., None] * slope[0] + yy[..., None] * slope[1]
    img += rng.normal(0, 12, size=(h, w, 3))
    return np.clip(img, 0, 255).astype(np.uint8)


def _object(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    color = rng.uniform(0, 255, size=3)
    period = rng.uniform(3, 8)
    yy, xx = np.mgrid[0:h, 0:w]
    stripes = 40 * np.sin((xx + yy) * 2 * math.pi / period)
    img = color + stripes[..., None] + rng.normal(0, 6, size=(h, w, 3))
    return np.clip(img, 0, 255).astype(np.uint8)


def toy_sample(rng: np.random.Generator, sid: str, width: int, height: int,
               box_fraction: Optional[float] = None, centered: bool = False,
               shape: str = "ellipse") -> LabeledSample:
    """One sample: a textured ellipse or rectangle over a noisy gradient.

    ``box_fraction`` fixes the box-area / image-area ratio (max - min widths).
    """
    if box_fraction is None:
        box_fraction = float(rng.uniform(0.15, 0.5))
    aspect = float(rng.uniform(0.6, 1.6))
    area = box_fraction * width * height
    bw = int(round(min(width - 1, math.sqrt(area * aspect))))
    bh = int(round(min(height - 1, area / max(bw, 1))))
    bw, bh = max(bw, 8), max(bh, 8)
    if centered:
        x0 = (width - 1 - bw) // 2
        y0 = (height - 1 - bh) // 2
    else:
        x0 = int(rng.integers(0, width - bw))
        y0 = int(rng.integers(0, height - bh))

    image = _background(rng, height, width)
    mask = np.zeros((height, width), dtype=np.uint8)
    yy, xx = np.mgrid[0 : bh + 1, 0 : bw + 1]
    if shape == "rectangle":
        inside = np.ones((bh + 1, bw + 1), dtype=bool)
    else:
        cy, cx = bh / 2.0, bw / 2.0
        inside = ((yy - cy) / (cy + 0.5)) ** 2 + ((xx - cx) / (cx + 0.5)) ** 2 <= 1.0
        # make sure the box is exactly bw x bh
        inside[int(cy), :] = True
        inside[:, int(cx)] = True
    region = (slice(y0, y0 + bh + 1), slice(x0, x0 + bw + 1))
    obj = _object(rng, bh + 1, bw + 1)
    image[region][inside] = obj[inside]
    mask[region][inside] = 255
    return LabeledSample.from_arrays(sid, image, mask)


def make_toy_dataset(out_dir, n: int = 9, width: int = 96, height: int = 96, seed: int = 0,
                     box_fraction: Optional[float] = None, centered: bool = False) -> Path:
    """Write ``n`` toy samples under ``out_dir`` and return the manifest path."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(n):
        shape = "rectangle" if i % 4 == 3 else "ellipse"
        sample = toy_sample(rng, f"s{i:04d}", width, height, box_fraction, centered, shape)
        entries.append(save_sample(sample, out_dir))
    return write_manifest(entries, out_dir / "manifest.jsonl")
