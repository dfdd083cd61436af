"""Object resizing, placement and compositing onto generated backgrounds.

Sizes follow the dataset index: sample ``i`` gets a target box-to-image area
ratio drawn uniformly from ``SIZE_BANDS[i % 3]``. Objects that cannot fit at
that size fall back to half the largest undistorted scale, rotating by
+-90 degrees first when object and background orientations disagree.
"""

from __future__ import annotations

import functools
import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from idaug.errors import PlacementError
from idaug.features import extract_features
from idaug.matcher import MatchResult, find_best_patch, slice_patches
from idaug.sample import (
    BoundingBox,
    DatasetManifest,
    LabeledSample,
    ManifestEntry,
    compute_bounding_box,
    load_sample,
    read_image,
    require_area,
    save_sample,
    write_manifest,
)
from idaug.workers import Outcome, run_all

SIZE_BANDS = ((0.075, 0.1), (0.1, 0.2), (0.2, 0.3))
ALPHA_THRESHOLD = 0.5


def size_band(i: int) -> tuple[float, float]:
    return SIZE_BANDS[i % 3]


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for one sample, independent of processing order."""
    return np.random.default_rng([int(seed), int(index)])


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class PlacementPlan:
    object_id: str
    background_id: str
    index: int
    scale: float
    rotation: int
    anchor: tuple[int, int]
    size: tuple[int, int]
    fallback_used: bool
    target_fraction: float

    def as_record(self) -> dict:
        record = asdict(self)
        record["anchor"] = list(self.anchor)
        record["size"] = list(self.size)
        return record


@dataclass(frozen=True)
class ScaleChoice:
    scale: float
    rotation: int
    fallback_used: bool
    target_fraction: float
    size: tuple[int, int]


def sample_scale(i: int, rng: Optional[np.random.Generator], a_b: float, a_phi: float,
                 fraction: Optional[float] = None) -> tuple[float, float]:
    """Scale that makes the box area ``R * a_b``, with ``R ~ U(size_band(i))``.

    Pass ``fraction`` to force ``R`` instead of drawing it.
    """
    if a_phi <= 0:
        raise PlacementError("object box has zero area")
    if a_b <= 0:
        raise PlacementError("background has zero area")
    if fraction is None:
        lo, hi = size_band(i)
        fraction = float(rng.uniform(lo, hi))
    return math.sqrt(fraction * a_b / a_phi), fraction


def resized_size(box_w: int, box_h: int, scale: float) -> tuple[int, int]:
    """Pixel size of a crop whose box extent (max - min) is scaled by ``scale``."""
    return round_half_up(box_w * scale) + 1, round_half_up(box_h * scale) + 1


def _orientation(w: float, h: float) -> str:
    if w > h:
        return "landscape"
    if h > w:
        return "portrait"
    return "square"


def same_orientation(w1: float, h1: float, w2: float, h2: float) -> bool:
    a, b = _orientation(w1, h1), _orientation(w2, h2)
    return a == b or "square" in (a, b)


def fallback_scale(box_w: int, box_h: int, bg_w: int, bg_h: int) -> float:
    return 0.5 * min(bg_w / box_w, bg_h / box_h)


def choose_scale(i: int, box_w: int, box_h: int, bg_w: int, bg_h: int,
                 rng: np.random.Generator, fraction: Optional[float] = None) -> ScaleChoice:
    """Size an object box of extent ``box_w x box_h`` for a ``bg_w x bg_h`` background.

    ``R`` is always drawn first; the rotation sign, when needed, second.
    """
    if box_w <= 0 or box_h <= 0:
        raise PlacementError(f"degenerate object box {box_w}x{box_h}")
    scale, fraction = sample_scale(i, rng, bg_w * bg_h, box_w * box_h, fraction)
    size = resized_size(box_w, box_h, scale)
    if size[0] <= bg_w and size[1] <= bg_h:
        return ScaleChoice(scale, 0, False, fraction, size)

    rotation = 0
    if not same_orientation(box_w, box_h, bg_w, bg_h):
        rotation = 90 if rng.random() < 0.5 else -90
        box_w, box_h = box_h, box_w
    scale = fallback_scale(box_w, box_h, bg_w, bg_h)
    size = resized_size(box_w, box_h, scale)
    if size[0] > bg_w or size[1] > bg_h:
        raise PlacementError(f"object cannot fit a {bg_w}x{bg_h} background even after fallback")
    return ScaleChoice(scale, rotation, True, fraction, size)


# --- resampling -------------------------------------------------------------


def _axis_coords(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # align-corners sampling: first and last output samples hit the source edges
    if n_out == 1 or n_in == 1:
        pos = np.zeros(n_out)
    else:
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.minimum(np.floor(pos).astype(np.int64), max(n_in - 2, 0))
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def resize_bilinear(array: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with corner alignment; returns float64."""
    src = np.asarray(array, dtype=np.float64)
    y0, y1, fy = _axis_coords(out_h, src.shape[0])
    x0, x1, fx = _axis_coords(out_w, src.shape[1])
    if src.ndim == 3:
        fy = fy[:, None, None]
        fx = fx[None, :, None]
    else:
        fy = fy[:, None]
        fx = fx[None, :]
    top = src[y0][:, x0] + fx * (src[y0][:, x1] - src[y0][:, x0])
    bottom = src[y1][:, x0] + fx * (src[y1][:, x1] - src[y1][:, x0])
    return top + fy * (bottom - top)


def rotate(array: np.ndarray, rotation: int) -> np.ndarray:
    """Rotate by 0, +90 (counter-clockwise) or -90 degrees."""
    if rotation == 0:
        return array
    if rotation == 90:
        return np.rot90(array, 1)
    if rotation == -90:
        return np.rot90(array, -1)
    raise ValueError(f"rotation must be 0 or +-90, got {rotation}")


def resample_object(sample: LabeledSample, plan: PlacementPlan | ScaleChoice) -> tuple[np.ndarray, np.ndarray]:
    """Crop the object box, rotate, and resize to ``plan.size``.

    Returns the uint8 RGB crop and a float alpha map in [0, 1].
    """
    box = require_area(sample.bbox, sample.id)
    ys = slice(box.y_min, box.y_max + 1)
    xs = slice(box.x_min, box.x_max + 1)
    crop = rotate(sample.image[ys, xs], plan.rotation)
    alpha = rotate(sample.mask[ys, xs].astype(np.float64) / 255.0, plan.rotation)
    out_w, out_h = plan.size
    if (out_h, out_w) == crop.shape[:2]:
        return np.ascontiguousarray(crop), np.ascontiguousarray(alpha)
    pixels = np.clip(np.floor(resize_bilinear(crop, out_h, out_w) + 0.5), 0, 255).astype(np.uint8)
    alpha = np.clip(resize_bilinear(alpha, out_h, out_w), 0.0, 1.0)
    return pixels, alpha


def composite(background: np.ndarray, crop: np.ndarray, alpha: np.ndarray,
              anchor: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Blend ``crop`` over ``background`` at ``anchor`` with per-pixel ``alpha``.

    Returns the new image (rounded half-up) and its 0/255 ground truth, which
    is ``alpha >= 0.5`` inside the pasted region.
    """
    x, y = anchor
    ch, cw = crop.shape[:2]
    bh, bw = background.shape[:2]
    if x < 0 or y < 0 or x + cw > bw or y + ch > bh:
        raise PlacementError(f"{cw}x{ch} crop at ({x},{y}) overflows {bw}x{bh} background")
    out = np.array(background, dtype=np.uint8, copy=True)
    region = out[y : y + ch, x : x + cw].astype(np.float64)
    a = alpha[:, :, None]
    blended = a * crop.astype(np.float64) + (1.0 - a) * region
    out[y : y + ch, x : x + cw] = np.clip(np.floor(blended + 0.5), 0, 255).astype(np.uint8)
    mask = np.zeros((bh, bw), dtype=np.uint8)
    mask[y : y + ch, x : x + cw] = np.where(alpha >= ALPHA_THRESHOLD, 255, 0)
    return out, mask


# --- per-sample planning ----------------------------------------------------


def plan_placement(
    i: int,
    sample: LabeledSample,
    background: np.ndarray,
    rng: np.random.Generator,
    background_id: str = "",
    fraction: Optional[float] = None,
) -> tuple[PlacementPlan, np.ndarray, np.ndarray]:
    """Choose scale, rotation and anchor for pasting ``sample`` onto ``background``.

    The anchor is the patch of the background grid (patches sized like the
    resized object) whose descriptor is farthest from the resized object's.
    Returns the plan with the resampled crop and alpha map.
    """
    box = require_area(sample.bbox, sample.id)
    bh, bw = background.shape[:2]
    choice = choose_scale(i, box.width, box.height, bw, bh, rng, fraction)
    crop, alpha = resample_object(sample, choice)
    a_star = extract_features(crop, alpha >= ALPHA_THRESHOLD, strict=False)
    grid = slice_patches((bw, bh), choice.size)
    anchor = find_best_patch(a_star, background, grid)
    plan = PlacementPlan(
        object_id=sample.id,
        background_id=background_id,
        index=i,
        scale=choice.scale,
        rotation=choice.rotation,
        anchor=anchor,
        size=choice.size,
        fallback_used=choice.fallback_used,
        target_fraction=choice.target_fraction,
    )
    return plan, crop, alpha


def synthesize_sample(i: int, sample: LabeledSample, background: np.ndarray, seed: int,
                      background_id: str = "", out_id: Optional[str] = None) -> tuple[LabeledSample, PlacementPlan]:
    rng = sample_rng(seed, i)
    plan, crop, alpha = plan_placement(i, sample, background, rng, background_id)
    image, mask = composite(background, crop, alpha, plan.anchor)
    out = LabeledSample.from_arrays(out_id or augmented_id(sample.id), image, mask)
    return out, plan


def augmented_id(object_id: str) -> str:
    return f"{object_id}_ida"


def _synth_job(task: tuple[int, ManifestEntry, ManifestEntry], seed: int, out_dir: Path) -> tuple[ManifestEntry, dict]:
    i, entry, bg_entry = task
    sample = load_sample(entry)
    background = read_image(bg_entry.image_path)
    out, plan = synthesize_sample(i, sample, background, seed, bg_entry.id)
    saved = save_sample(out, out_dir)
    record = {"id": out.id, **plan.as_record(),
              "bbox": list(out.bbox.as_tuple()) if out.bbox else None}
    return saved, record


def synthesize(
    manifest: DatasetManifest,
    backgrounds: DatasetManifest,
    matches: dict[str, MatchResult],
    seed: int,
    out_dir,
    jobs: int = 1,
) -> tuple[Path, list[Outcome]]:
    """Build one augmented sample per input sample.

    Writes ``images/``, ``masks/``, ``manifest.jsonl`` and ``provenance.jsonl``
    under ``out_dir``. Sample ``i`` is seeded from ``(seed, i)``, so results do
    not depend on ``jobs``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bg_by_id = backgrounds.by_id()
    tasks: list[tuple[str, tuple]] = []
    missing: list[Outcome] = []
    for i, entry in enumerate(manifest):
        match = matches.get(entry.id)
        if match is None:
            missing.append(Outcome(entry.id, error=f"no match for object {entry.id!r}"))
            continue
        bg_entry = bg_by_id.get(match.background_id)
        if bg_entry is None:
            missing.append(Outcome(entry.id, error=f"background {match.background_id!r} not in background manifest"))
            continue
        tasks.append((entry.id, (i, entry, bg_entry)))

    job = functools.partial(_synth_job, seed=int(seed), out_dir=out_dir)
    outcomes = run_all(job, tasks, jobs=jobs, stage="synth")
    done = [o for o in outcomes if o.ok]
    manifest_path = write_manifest([o.value[0] for o in done], out_dir / "manifest.jsonl")
    with open(out_dir / "provenance.jsonl", "w", encoding="utf-8") as fh:
        for o in done:
            fh.write(json.dumps(o.value[1], sort_keys=True) + "\n")
    order = {e.id: n for n, e in enumerate(manifest)}
    all_outcomes = sorted(missing + outcomes, key=lambda o: order.get(o.key, -1))
    return manifest_path, all_outcomes


def area_fraction(mask: np.ndarray) -> float:
    """Box area (max - min convention) over image area."""
    box = compute_bounding_box(mask)
    return box.area / float(mask.shape[0] * mask.shape[1])


# --- baseline augmenters ----------------------------------------------------


def hflip(image: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mirror image and mask about the vertical axis."""
    return np.ascontiguousarray(image[:, ::-1]), np.ascontiguousarray(mask[:, ::-1])


def hflip_box(box: BoundingBox, width: int) -> BoundingBox:
    return BoundingBox(width - 1 - box.x_max, box.y_min, width - 1 - box.x_min, box.y_max)


@dataclass(frozen=True)
class GridMaskParams:
    d: int
    ratio: float = 0.6
    offset: tuple[int, int] = (0, 0)
    p: float = 0.7

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("GridMask period d must be >= 2")
        if not 0.0 < self.ratio < 1.0:
            raise ValueError("GridMask keep ratio must lie in (0, 1)")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("GridMask probability must lie in [0, 1]")

    @property
    def side(self) -> int:
        return max(1, round_half_up(self.d * (1.0 - self.ratio)))


def sample_gridmask_params(rng: np.random.Generator, d_range: tuple[int, int] = (96, 224),
                           ratio: float = 0.6, p: float = 0.7) -> GridMaskParams:
    d = int(rng.integers(d_range[0], d_range[1] + 1))
    dx, dy = (int(v) for v in rng.integers(0, d, size=2))
    return GridMaskParams(d=d, ratio=ratio, offset=(dx, dy), p=p)


def gridmask_mask(height: int, width: int, params: GridMaskParams) -> np.ndarray:
    """Boolean map of erased pixels: squares of ``side`` repeated every ``d``."""
    dx, dy = params.offset
    ys = np.mod(np.arange(height) - dy, params.d) < params.side
    xs = np.mod(np.arange(width) - dx, params.d) < params.side
    return ys[:, None] & xs[None, :]


def gridmask(image: np.ndarray, params: GridMaskParams, rng: np.random.Generator) -> np.ndarray:
    """With probability ``params.p`` zero the grid squares; otherwise return a copy."""
    out = np.array(image, copy=True)
    if rng.random() >= params.p:
        return out
    out[gridmask_mask(out.shape[0], out.shape[1], params)] = 0
    return out


def _hflip_job(task: tuple[int, ManifestEntry], seed: int, p: float, out_dir: Path) -> ManifestEntry:
    i, entry = task
    sample = load_sample(entry)
    rng = sample_rng(seed, i)
    image, mask = sample.image, sample.mask
    if rng.random() < p:
        image, mask = hflip(image, mask)
    return save_sample(LabeledSample.from_arrays(f"{sample.id}_hflip", image, mask), out_dir)


def _gridmask_job(task: tuple[int, ManifestEntry], seed: int, d_range: tuple[int, int],
                  ratio: float, p: float, out_dir: Path) -> ManifestEntry:
    i, entry = task
    sample = load_sample(entry)
    rng = sample_rng(seed, i)
    params = sample_gridmask_params(rng, d_range, ratio, p)
    image = gridmask(sample.image, params, rng)
    return save_sample(LabeledSample.from_arrays(f"{sample.id}_grid", image, sample.mask), out_dir)


def augment_manifest(manifest: DatasetManifest, out_dir, kind: str, seed: int = 0, jobs: int = 1,
                     p: Optional[float] = None, d_range: tuple[int, int] = (96, 224),
                     ratio: float = 0.6) -> tuple[Path, list[Outcome]]:
    """Apply ``hflip`` or ``gridmask`` to every sample and write a new dataset."""
    out_dir = Path(out_dir)
    if kind == "hflip":
        job = functools.partial(_hflip_job, seed=seed, p=1.0 if p is None else p, out_dir=out_dir)
    elif kind == "gridmask":
        job = functools.partial(_gridmask_job, seed=seed, d_range=d_range, ratio=ratio,
                                p=0.7 if p is None else p, out_dir=out_dir)
    else:
        raise ValueError(f"unknown augmentation {kind!r}")
    tasks = [(e.id, (i, e)) for i, e in enumerate(manifest)]
    outcomes = run_all(job, tasks, jobs=jobs, stage=kind)
    path = write_manifest([o.value for o in outcomes if o.ok], out_dir / "manifest.jsonl")
    return path, outcomes
