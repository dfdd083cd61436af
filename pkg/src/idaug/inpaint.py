"""Background generation: erase the labelled object and fill the hole.

The built-in backend fills the hole with the discrete harmonic (Laplace)
interpolant of the surrounding pixels. Learned inpainters are reached through
:func:`inpaint_external`, which talks to any command line tool via PNG files.
"""

from __future__ import annotations

import functools
import logging
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix, diags
from scipy.sparse.linalg import splu

from idaug.errors import BackendError, DecodeError, DimensionMismatchError, InpaintError
from idaug.sample import (
    DatasetManifest,
    ManifestEntry,
    as_rgb,
    load_sample,
    read_image,
    write_manifest,
    write_png,
)
from idaug.workers import Outcome, run_all

log = logging.getLogger("idaug")

DEFAULT_DILATION = 5
JACOBI_TOL = 0.5
JACOBI_MAX_ITER = 2000

_NEIGHBOURS = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True, eq=False)
class InpaintRequest:
    image: np.ndarray
    hole: np.ndarray
    dilation_radius: int = DEFAULT_DILATION

    def __post_init__(self):
        if self.image.shape[:2] != self.hole.shape[:2]:
            raise DimensionMismatchError(
                f"hole is {self.hole.shape[1]}x{self.hole.shape[0]} but image is "
                f"{self.image.shape[1]}x{self.image.shape[0]}"
            )
        if self.dilation_radius < 0:
            raise ValueError("dilation_radius must be >= 0")


@dataclass(frozen=True, eq=False)
class BackgroundImage:
    id: str
    image: np.ndarray
    hole: np.ndarray

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def area(self) -> int:
        return self.width * self.height


def disc(radius: int) -> np.ndarray:
    """Boolean disc structuring element: offsets with dx^2 + dy^2 <= r^2."""
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (xx * xx + yy * yy) <= r * r


def dilate_mask(mask: np.ndarray, radius: int) -> np.ndarray:
    """Morphological dilation of a binary mask by a disc; returns 0/255 uint8."""
    binary = np.asarray(mask) > 0
    if radius > 0 and binary.any():
        binary = ndimage.binary_dilation(binary, structure=disc(radius))
    return np.where(binary, 255, 0).astype(np.uint8)


def hole_boundary(hole: np.ndarray) -> np.ndarray:
    """Known pixels that are 4-adjacent to the hole."""
    hole = np.asarray(hole) > 0
    cross = ndimage.generate_binary_structure(2, 1)
    return ndimage.binary_dilation(hole, structure=cross) & ~hole


def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.floor(values + 0.5)


def _harmonic_direct(image: np.ndarray, hole: np.ndarray) -> np.ndarray:
    h, w, c = image.shape
    ys, xs = np.nonzero(hole)
    n = ys.size
    index = np.full((h, w), -1, dtype=np.int64)
    index[ys, xs] = np.arange(n)
    values = image.astype(np.float64)

    degree = np.zeros(n)
    rhs = np.zeros((n, c))
    rows, cols = [], []
    for dy, dx in _NEIGHBOURS:
        ny, nx = ys + dy, xs + dx
        inside = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
        degree += inside
        src = np.flatnonzero(inside)
        ny, nx = ny[inside], nx[inside]
        in_hole = hole[ny, nx]
        rows.append(src[in_hole])
        cols.append(index[ny[in_hole], nx[in_hole]])
        # src is unique within one direction, so plain fancy-index += is safe
        rhs[src[~in_hole]] += values[ny[~in_hole], nx[~in_hole]]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    adjacency = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    system = (diags(degree) - adjacency).tocsc()
    solution = splu(system).solve(rhs)
    out = values.copy()
    out[ys, xs] = solution
    return out


def _harmonic_jacobi(image: np.ndarray, hole: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    h, w, _ = image.shape
    values = image.astype(np.float64)
    border = hole_boundary(hole)
    values[hole] = values[border].mean(axis=0)

    count = np.zeros((h, w))
    count[1:, :] += 1
    count[:-1, :] += 1
    count[:, 1:] += 1
    count[:, :-1] += 1
    count = count[:, :, None]

    for _ in range(max_iter):
        total = np.zeros_like(values)
        total[1:, :] += values[:-1, :]
        total[:-1, :] += values[1:, :]
        total[:, 1:] += values[:, :-1]
        total[:, :-1] += values[:, 1:]
        updated = total / count
        change = np.abs(updated[hole] - values[hole]).max()
        values[hole] = updated[hole]
        if change < tol:
            break
    return values


def inpaint_diffusion(
    req: InpaintRequest,
    id: str = "",
    method: str = "direct",
    tol: float = JACOBI_TOL,
    max_iter: int = JACOBI_MAX_ITER,
) -> BackgroundImage:
    """Fill the (dilated) hole by harmonic diffusion from its boundary, per channel.

    ``method="direct"`` solves the discrete Laplace system exactly with a
    sparse LU factorisation. ``method="jacobi"`` iterates until the largest
    per-pixel change drops below ``tol`` gray levels or ``max_iter`` sweeps.
    Pixels outside the hole are returned unchanged.

    Raises:
        InpaintError: if the hole covers the whole image.
    """
    image = as_rgb(req.image)
    hole = dilate_mask(req.hole, req.dilation_radius) > 0
    if not hole.any():
        return BackgroundImage(id, image, np.zeros(hole.shape, np.uint8))
    if hole.all():
        raise InpaintError("hole covers the entire image; nothing to diffuse from")

    if method == "direct":
        filled = _harmonic_direct(image, hole)
    elif method == "jacobi":
        filled = _harmonic_jacobi(image, hole, tol, max_iter)
    else:
        raise ValueError(f"unknown diffusion method {method!r}")

    # the exact solution obeys the maximum principle; clipping only absorbs round-off
    border = image[hole_boundary(hole)].astype(np.float64)
    lo, hi = border.min(axis=0), border.max(axis=0)
    fill = np.clip(filled[hole], lo, hi)
    out = image.copy()
    out[hole] = _round_half_up(fill).astype(np.uint8)
    return BackgroundImage(id, out, np.where(hole, 255, 0).astype(np.uint8))


def inpaint_external(cmd: str, req: InpaintRequest, id: str = "", timeout: Optional[float] = None) -> BackgroundImage:
    """Run an external inpainting command through temporary PNG files.

    ``cmd`` is a template with ``{image}``, ``{mask}`` and ``{out}``
    placeholders, e.g. ``"python test.py --image {image} --mask {mask} --output {out}"``.
    Only the output dimensions are validated, since learned backends may
    repaint pixels outside the hole.
    """
    for name in ("{image}", "{mask}", "{out}"):
        if name not in cmd:
            raise ValueError(f"command template lacks the {name} placeholder")
    image = as_rgb(req.image)
    hole = dilate_mask(req.hole, req.dilation_radius)
    with tempfile.TemporaryDirectory(prefix="idaug-inpaint-") as tmp:
        tmp = Path(tmp)
        image_path = write_png(image, tmp / "image.png")
        mask_path = write_png(hole, tmp / "mask.png")
        out_path = tmp / "out.png"
        command = cmd.format(
            image=shlex.quote(str(image_path)),
            mask=shlex.quote(str(mask_path)),
            out=shlex.quote(str(out_path)),
        )
        try:
            proc = subprocess.run(
                shlex.split(command), capture_output=True, text=True, timeout=timeout
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise BackendError(f"could not run inpainting backend ({exc})") from None
        if proc.returncode != 0:
            raise BackendError(f"inpainting backend exited with status {proc.returncode}", proc.stderr)
        if not out_path.is_file():
            raise BackendError("inpainting backend wrote no output", proc.stderr)
        try:
            result = read_image(out_path)
        except DecodeError as exc:
            raise BackendError(str(exc)) from None
    if result.shape != image.shape:
        raise DimensionMismatchError(
            f"backend output is {result.shape[1]}x{result.shape[0]}, "
            f"expected {image.shape[1]}x{image.shape[0]}"
        )
    return BackgroundImage(id, result, hole)


def _background_job(
    entry: ManifestEntry,
    out_dir: Path,
    backend: str,
    cmd: Optional[str],
    dilation_radius: int,
) -> ManifestEntry:
    sample = load_sample(entry)
    req = InpaintRequest(sample.image, sample.mask, dilation_radius)
    if backend == "diffusion":
        bg = inpaint_diffusion(req, id=sample.id)
    elif backend == "external":
        if not cmd:
            raise ValueError("external backend needs a command template")
        bg = inpaint_external(cmd, req, id=sample.id)
    else:
        raise ValueError(f"unknown inpainting backend {backend!r}")
    image_path = write_png(bg.image, out_dir / "images" / f"{bg.id}.png")
    mask_path = write_png(bg.hole, out_dir / "masks" / f"{bg.id}.png")
    return ManifestEntry(bg.id, image_path, mask_path)


def generate_backgrounds(
    manifest: DatasetManifest,
    out_dir,
    backend: str = "diffusion",
    cmd: Optional[str] = None,
    dilation_radius: int = DEFAULT_DILATION,
    jobs: int = 1,
) -> tuple[Path, list[Outcome]]:
    """Inpaint one background per sample and write them with a manifest.

    The output manifest lists ``images/<id>.png`` with the fill mask actually
    used as ``mask_path``. Failed samples are reported in the returned outcomes
    and left out of the manifest.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    job = functools.partial(
        _background_job, out_dir=out_dir, backend=backend, cmd=cmd, dilation_radius=dilation_radius
    )
    items = [(e.id, e) for e in manifest]
    # external backends are subprocesses already; threads are enough to overlap them
    outcomes = run_all(job, items, jobs=jobs, threads=backend == "external", stage="inpaint")
    manifest_path = write_manifest([o.value for o in outcomes if o.ok], out_dir / "manifest.jsonl")
    return manifest_path, outcomes
