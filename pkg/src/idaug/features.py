"""Colour and texture descriptor: 64-bin H, S, V and uniform-LBP histograms.

The four histograms are L1-normalised independently and concatenated into a
256-long vector. Objects are described through their mask; backgrounds and
background patches are described whole.
"""

from __future__ import annotations

import colorsys
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from idaug.errors import ImageTooSmallError, ManifestError, ZeroVectorError

BINS = 64
FEATURE_LENGTH = 4 * BINS
LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class LbpParams:
    points: int = 24
    radius: float = 3.0
    method: str = "uniform"

    @property
    def n_codes(self) -> int:
        return self.points + 2


DEFAULT_LBP = LbpParams()


# --- colour -----------------------------------------------------------------


def rgb_to_hsv(pixel: Sequence[int]) -> tuple[float, float, float]:
    """Hexcone HSV of an 8-bit RGB triple: hue in degrees, s and v in [0, 1].

    Hue is reported as 0 for achromatic pixels.
    """
    r, g, b = (int(c) / 255.0 for c in pixel)
    h, s, v = colorsys.rgb_to_hsv(r, g, b)
    return (h * 360.0) % 360.0, s, v


def hsv_bin_indices(image: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-pixel 64-bin indices for hue, saturation and value.

    Works in exact integer arithmetic so bin boundaries never depend on
    floating point rounding.
    """
    rgb = np.asarray(image, dtype=np.int64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    delta = mx - mn

    # hue / 360 = numerator / (6 * delta)
    num = np.where(
        r == mx,
        np.mod(g - b, 6 * np.maximum(delta, 1)),
        np.where(g == mx, 2 * delta + (b - r), 4 * delta + (r - g)),
    )
    safe = np.maximum(delta, 1)
    h_bin = np.where(delta > 0, (BINS * num) // (6 * safe), 0)
    s_bin = np.where(mx > 0, np.minimum((BINS * delta) // np.maximum(mx, 1), BINS - 1), 0)
    v_bin = np.minimum((BINS * mx) // 255, BINS - 1)
    return h_bin, s_bin, v_bin


def _select(mask: Optional[np.ndarray], shape: tuple[int, int]) -> Optional[np.ndarray]:
    if mask is None:
        return None
    mask = np.asarray(mask)
    if mask.shape != shape:
        raise ValueError(f"mask shape {mask.shape} does not match image shape {shape}")
    return mask > 0


def hsv_counts(image: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Integer ``(3, 64)`` H/S/V bin counts over the selected pixels."""
    bins = hsv_bin_indices(image)
    sel = _select(mask, np.asarray(image).shape[:2])
    out = np.zeros((3, BINS), dtype=np.int64)
    for c, idx in enumerate(bins):
        flat = idx[sel] if sel is not None else idx.ravel()
        out[c] = np.bincount(flat, minlength=BINS)
    return out


def _normalize(counts: np.ndarray) -> tuple[np.ndarray, bool]:
    total = counts.sum(axis=-1, keepdims=True)
    if np.any(total == 0):
        return np.zeros(counts.shape, dtype=np.float64), True
    return counts / total, False


def hsv_histogram(image: np.ndarray, mask: Optional[np.ndarray] = None) -> tuple[np.ndarray, bool]:
    """L1-normalised ``(3, 64)`` histograms and an emptiness flag."""
    return _normalize(hsv_counts(image, mask))


# --- texture ----------------------------------------------------------------


def to_gray(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim == 2:
        return image.astype(np.float64)
    rgb = image[..., :3].astype(np.float64)
    return rgb[..., 0] * LUMA[0] + rgb[..., 1] * LUMA[1] + rgb[..., 2] * LUMA[2]


def circle_offsets(params: LbpParams = DEFAULT_LBP) -> np.ndarray:
    """``(P, 2)`` array of (dy, dx) sampling offsets, rounded to 5 decimals."""
    angles = 2 * np.pi * np.arange(params.points) / params.points
    dy = np.round(-params.radius * np.sin(angles), 5)
    dx = np.round(params.radius * np.cos(angles), 5)
    return np.stack([dy, dx], axis=1) + 0.0  # drop negative zeros


def lbp_margin(params: LbpParams = DEFAULT_LBP) -> int:
    return int(math.ceil(params.radius))


def lbp_image(gray: np.ndarray, params: LbpParams = DEFAULT_LBP) -> np.ndarray:
    """Uniform LBP code per pixel; ``-1`` where the circle leaves the image.

    Codes are ``0..P`` for uniform patterns (the number of set bits) and
    ``P + 1`` otherwise. A neighbour bit is set when the bilinear sample is
    ``>=`` the centre value.

    Raises:
        ImageTooSmallError: if either side is below ``2 * ceil(R) + 1``.
    """
    if params.method != "uniform":
        raise ValueError(f"unsupported LBP method {params.method!r}")
    g = to_gray(gray)
    h, w = g.shape
    m = lbp_margin(params)
    if h < 2 * m + 1 or w < 2 * m + 1:
        raise ImageTooSmallError(f"{w}x{h} image is smaller than the {2 * m + 1}px LBP window")

    centre = g[m : h - m, m : w - m]
    ih, iw = centre.shape

    def window(oy: int, ox: int) -> np.ndarray:
        return g[m + oy : m + oy + ih, m + ox : m + ox + iw]

    bits = np.empty((params.points, ih, iw), dtype=bool)
    for p, (dy, dx) in enumerate(circle_offsets(params)):
        y0, x0 = int(math.floor(dy)), int(math.floor(dx))
        fy, fx = dy - y0, dx - x0
        y1 = y0 + 1 if fy > 0 else y0
        x1 = x0 + 1 if fx > 0 else x0
        top = window(y0, x0) + fx * (window(y0, x1) - window(y0, x0))
        bottom = window(y1, x0) + fx * (window(y1, x1) - window(y1, x0))
        bits[p] = (top + fy * (bottom - top)) >= centre

    ones = bits.sum(axis=0)
    transitions = (bits != np.roll(bits, 1, axis=0)).sum(axis=0)
    codes = np.full((h, w), -1, dtype=np.int16)
    codes[m : h - m, m : w - m] = np.where(transitions <= 2, ones, params.points + 1)
    return codes


def lbp_counts(codes: np.ndarray, mask: Optional[np.ndarray] = None, params: LbpParams = DEFAULT_LBP) -> np.ndarray:
    """Integer 64-bin counts of valid codes; bins are equal-width over ``[0, P + 2)``."""
    codes = np.asarray(codes)
    valid = codes >= 0
    sel = _select(mask, codes.shape)
    if sel is not None:
        valid &= sel
    bins = (codes[valid].astype(np.int64) * BINS) // params.n_codes
    return np.bincount(bins, minlength=BINS)


def lbp_histogram(codes: np.ndarray, mask: Optional[np.ndarray] = None,
                  params: LbpParams = DEFAULT_LBP) -> tuple[np.ndarray, bool]:
    return _normalize(lbp_counts(codes, mask, params))


def lbp_bin_of(code: int, params: LbpParams = DEFAULT_LBP) -> int:
    return (code * BINS) // params.n_codes


# --- descriptor -------------------------------------------------------------


def extract_features(
    image: np.ndarray,
    mask: Optional[np.ndarray] = None,
    params: LbpParams = DEFAULT_LBP,
    strict: bool = True,
) -> np.ndarray:
    """256-long ``[H | S | V | LBP]`` descriptor of ``image`` (under ``mask`` if given).

    LBP codes are computed on the whole image and only then restricted to
    the mask, so object pixels see their true neighbourhood. With
    ``strict=False`` an image too small for the LBP window gets an all-zero
    texture block instead of raising.
    """
    color, _ = hsv_histogram(image, mask)
    try:
        codes = lbp_image(image, params)
        texture, _ = lbp_histogram(codes, mask, params)
    except ImageTooSmallError:
        if strict:
            raise
        texture = np.zeros(BINS)
    return np.concatenate([color.ravel(), texture])


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """``sum(a*b) / (|a| |b|)``; lies in [0, 1] for non-negative vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine similarity is undefined for a zero vector")
    return min(1.0, float(np.dot(a, b)) / (na * nb))


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 1.0 - cosine_similarity(a, b)


# --- feature store ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FeatureStore:
    """Immutable table of descriptors keyed by sample id."""

    ids: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        if self.vectors.shape != (len(self.ids), FEATURE_LENGTH):
            raise ValueError(f"expected {len(self.ids)}x{FEATURE_LENGTH} vectors, got {self.vectors.shape}")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("feature store ids must be unique")
        self.vectors.setflags(write=False)

    def __len__(self) -> int:
        return len(self.ids)

    def get(self, id: str) -> np.ndarray:
        return self.vectors[self.ids.index(id)]

    def as_dict(self) -> dict[str, np.ndarray]:
        return dict(zip(self.ids, self.vectors))


def write_feature_store(store: FeatureStore, path: str | os.PathLike) -> Path:
    """Write ``id,256`` header then ``id,v1,...,v256`` rows (17 significant digits)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"id,{FEATURE_LENGTH}\n")
        for sid, vec in zip(store.ids, store.vectors):
            if "," in sid or "\n" in sid:
                raise ValueError(f"id {sid!r} cannot be stored in a feature file")
            fh.write(sid + "," + ",".join(f"{v:.16e}" for v in vec) + "\n")
    return path


def read_feature_store(path: str | os.PathLike) -> FeatureStore:
    path = Path(path)
    if not path.is_file():
        raise ManifestError("feature file not found", path=path)
    ids: list[str] = []
    rows: list[list[float]] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != f"id,{FEATURE_LENGTH}":
            raise ManifestError(f"bad header {header!r}", path=path, line=1)
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split(",")
            if len(parts) != FEATURE_LENGTH + 1:
                raise ManifestError(f"expected {FEATURE_LENGTH + 1} fields, got {len(parts)}", path, lineno)
            try:
                rows.append([float(v) for v in parts[1:]])
            except ValueError:
                raise ManifestError("non-numeric feature value", path, lineno) from None
            ids.append(parts[0])
    vectors = np.array(rows, dtype=np.float64).reshape(len(ids), FEATURE_LENGTH)
    try:
        return FeatureStore(tuple(ids), vectors)
    except ValueError as exc:
        raise ManifestError(str(exc), path=path) from None
