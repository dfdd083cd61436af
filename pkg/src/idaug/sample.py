"""Raster and dataset types, manifest I/O and bounding boxes.

Images are plain ``numpy`` arrays: ``(H, W, 3)`` uint8 for RGB images and
``(H, W)`` uint8 for masks. Ground-truth masks are stored binary (0/255).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from idaug.errors import (
    DecodeError,
    DegenerateObjectError,
    DimensionMismatchError,
    ManifestError,
    NonSalientError,
)

MASK_THRESHOLD = 128


@dataclass(frozen=True)
class BoundingBox:
    """Inclusive axis-aligned box in pixel coordinates."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    @property
    def width(self) -> int:
        # max - min, so a one-pixel-wide box has width 0
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def pixel_width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def pixel_height(self) -> int:
        return self.y_max - self.y_min + 1

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    image_path: Path
    mask_path: Path


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered dataset listing; the position of an entry is its dataset index."""

    entries: tuple[ManifestEntry, ...]
    path: Optional[Path] = None

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    def __getitem__(self, index: int) -> ManifestEntry:
        return self.entries[index]

    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def by_id(self) -> dict[str, ManifestEntry]:
        return {e.id: e for e in self.entries}


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """RGB image with its binary salience mask.

    ``bbox`` is ``None`` exactly when the mask is empty (a non-salient sample).
    """

    id: str
    image: np.ndarray
    mask: np.ndarray
    bbox: Optional[BoundingBox]

    @property
    def salient(self) -> bool:
        return self.bbox is not None

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @classmethod
    def from_arrays(cls, id: str, image: np.ndarray, mask: np.ndarray) -> "LabeledSample":
        image = as_rgb(image)
        mask = binarize_mask(mask)
        check_same_size(image, mask)
        bbox = compute_bounding_box(mask) if mask.any() else None
        image.setflags(write=False)
        mask.setflags(write=False)
        return cls(id=id, image=image, mask=mask, bbox=bbox)


def as_rgb(image: np.ndarray) -> np.ndarray:
    """Return an owned ``(H, W, 3)`` uint8 copy; gray is replicated, alpha dropped."""
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise TypeError(f"expected uint8 image, got {image.dtype}")
    if image.ndim == 2:
        image = np.repeat(image[:, :, None], 3, axis=2)
    elif image.ndim == 3 and image.shape[2] == 1:
        image = np.repeat(image, 3, axis=2)
    elif image.ndim == 3 and image.shape[2] == 4:
        image = image[:, :, :3]
    elif not (image.ndim == 3 and image.shape[2] == 3):
        raise ValueError(f"unsupported image shape {image.shape}")
    if image.shape[0] < 1 or image.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    return np.ascontiguousarray(image).copy()


def binarize_mask(mask: np.ndarray, threshold: int = MASK_THRESHOLD) -> np.ndarray:
    """Map samples >= ``threshold`` to 255 and everything else to 0."""
    mask = np.asarray(mask)
    if mask.ndim == 3:
        mask = mask[:, :, 0]
    if mask.ndim != 2:
        raise ValueError(f"unsupported mask shape {mask.shape}")
    return np.where(mask >= threshold, 255, 0).astype(np.uint8)


def check_same_size(image: np.ndarray, mask: np.ndarray) -> None:
    if image.shape[:2] != mask.shape[:2]:
        raise DimensionMismatchError(
            f"mask is {mask.shape[1]}x{mask.shape[0]} but image is "
            f"{image.shape[1]}x{image.shape[0]}"
        )


def compute_bounding_box(mask: np.ndarray) -> BoundingBox:
    """Tightest box around the pixels of ``mask`` that are > 0.

    Raises:
        NonSalientError: if the mask has no nonzero pixel.
    """
    mask = np.asarray(mask)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise NonSalientError("mask has no nonzero pixel")
    cols = np.flatnonzero(mask.any(axis=0))
    return BoundingBox(int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1]))


def require_area(bbox: Optional[BoundingBox], sample_id: str = "") -> BoundingBox:
    """Return ``bbox`` or raise when it is missing or has zero area."""
    if bbox is None:
        raise NonSalientError(f"sample {sample_id!r} has an empty mask")
    if bbox.area == 0:
        raise DegenerateObjectError(
            f"sample {sample_id!r} has a degenerate {bbox.pixel_width}x{bbox.pixel_height} box"
        )
    return bbox


# --- manifest I/O -----------------------------------------------------------

_REQUIRED_KEYS = ("id", "image_path", "mask_path")


def load_manifest(path: str | os.PathLike) -> DatasetManifest:
    """Read a newline-delimited JSON manifest.

    Blank lines are ignored. Relative paths are resolved against the
    directory holding the manifest.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError("manifest file not found", path=path)
    base = path.parent
    entries: list[ManifestEntry] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"malformed record ({exc.msg})", path, lineno) from None
            if not isinstance(record, dict):
                raise ManifestError("record is not an object", path, lineno)
            missing = [k for k in _REQUIRED_KEYS if k not in record]
            if missing:
                raise ManifestError(f"record lacks {', '.join(missing)}", path, lineno)
            if not all(isinstance(record[k], str) for k in _REQUIRED_KEYS):
                raise ManifestError("id, image_path and mask_path must be strings", path, lineno)
            sid = record["id"]
            if sid in seen:
                raise ManifestError(
                    f"duplicate id {sid!r} (first seen on line {seen[sid]})", path, lineno
                )
            seen[sid] = lineno
            entries.append(
                ManifestEntry(
                    id=sid,
                    image_path=base / record["image_path"],
                    mask_path=base / record["mask_path"],
                )
            )
    return DatasetManifest(tuple(entries), path=path)


def write_manifest(entries: Iterable[ManifestEntry], path: str | os.PathLike) -> Path:
    """Write ``entries`` with paths relative to the manifest's directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.parent.resolve()
    lines = []
    seen = set()
    for e in entries:
        if e.id in seen:
            raise ManifestError(f"duplicate id {e.id!r}", path=path)
        seen.add(e.id)
        record = {
            "id": e.id,
            "image_path": _relative(e.image_path, base),
            "mask_path": _relative(e.mask_path, base),
        }
        lines.append(json.dumps(record, ensure_ascii=False) + "\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(lines)
    return path


def _relative(p: Path, base: Path) -> str:
    return Path(os.path.relpath(Path(p).resolve(), base)).as_posix()


# --- sample I/O -------------------------------------------------------------


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Decode an image file to an RGB uint8 array."""
    try:
        with Image.open(path) as im:
            if im.mode in ("I;16", "I;16B", "I", "F"):
                im = im.point(lambda v: v / 256).convert("L")
            return np.asarray(im.convert("RGB")).copy()
    except FileNotFoundError:
        raise DecodeError(f"image not found: {path}") from None
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from None


def read_gray(path: str | os.PathLike) -> np.ndarray:
    """Decode an image file to a single-channel uint8 array."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L")).copy()
    except FileNotFoundError:
        raise DecodeError(f"image not found: {path}") from None
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from None


def write_png(array: np.ndarray, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(array)).save(path, format="PNG")
    return path


def load_sample(entry: ManifestEntry) -> LabeledSample:
    image = read_image(entry.image_path)
    mask = read_gray(entry.mask_path)
    if image.shape[:2] != mask.shape:
        raise DimensionMismatchError(
            f"{entry.id}: mask is {mask.shape[1]}x{mask.shape[0]} but image is "
            f"{image.shape[1]}x{image.shape[0]}"
        )
    return LabeledSample.from_arrays(entry.id, image, mask)


def save_sample(sample: LabeledSample, directory: str | os.PathLike) -> ManifestEntry:
    """Write ``images/<id>.png`` and ``masks/<id>.png`` under ``directory``."""
    directory = Path(directory)
    image_path = write_png(sample.image, directory / "images" / f"{sample.id}.png")
    mask_path = write_png(sample.mask, directory / "masks" / f"{sample.id}.png")
    return ManifestEntry(sample.id, image_path, mask_path)
