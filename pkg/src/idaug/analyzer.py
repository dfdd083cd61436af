"""Position and size statistics of a dataset's object boxes."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from idaug.sample import BoundingBox, DatasetManifest, binarize_mask, compute_bounding_box, read_gray

log = logging.getLogger("idaug")

SIZE_BINS = 10
DEFAULT_GRID = 64


@dataclass
class DistributionReport:
    ids: list[str] = field(default_factory=list)
    centers: list[tuple[float, float]] = field(default_factory=list)
    fractions: list[float] = field(default_factory=list)
    size_histogram: np.ndarray = field(default_factory=lambda: np.zeros(SIZE_BINS, dtype=np.int64))
    density_grid: np.ndarray = field(default_factory=lambda: np.zeros((DEFAULT_GRID, DEFAULT_GRID), dtype=np.int64))
    skipped: list[str] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.ids)


def box_center(box: BoundingBox, width: int, height: int) -> tuple[float, float]:
    """Box centre normalised by ``dimension - 1`` so edge pixels map to 0 and 1."""
    cx = (box.x_min + box.x_max) / (2.0 * (width - 1)) if width > 1 else 0.5
    cy = (box.y_min + box.y_max) / (2.0 * (height - 1)) if height > 1 else 0.5
    return cx, cy


def size_bin(fraction: float) -> int:
    return min(int(np.floor(fraction * SIZE_BINS)), SIZE_BINS - 1)


def analyze_masks(items: Iterable[tuple[str, np.ndarray]], grid: int = DEFAULT_GRID) -> DistributionReport:
    """Build the report from ``(id, mask)`` pairs; empty masks are skipped."""
    report = DistributionReport(density_grid=np.zeros((grid, grid), dtype=np.int64))
    for sid, mask in items:
        if not np.any(mask):
            report.skipped.append(sid)
            continue
        h, w = mask.shape[:2]
        box = compute_bounding_box(mask)
        cx, cy = box_center(box, w, h)
        fraction = box.area / float(w * h)
        report.ids.append(sid)
        report.centers.append((cx, cy))
        report.fractions.append(fraction)
        report.size_histogram[size_bin(fraction)] += 1
        col = min(int(cx * grid), grid - 1)
        row = min(int(cy * grid), grid - 1)
        report.density_grid[row, col] += 1
    if report.skipped:
        log.warning("stage=stats event=skipped-non-salient count=%d", len(report.skipped))
    return report


def analyze(manifest: DatasetManifest, grid: int = DEFAULT_GRID) -> DistributionReport:
    return analyze_masks(((e.id, binarize_mask(read_gray(e.mask_path))) for e in manifest), grid)


def emit_report(report: DistributionReport, directory) -> list[Path]:
    """Write ``centers.csv``, ``sizes.csv``, ``density.csv`` and ``report.svg``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []

    path = directory / "centers.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "cx", "cy", "area_fraction"])
        for sid, (cx, cy), f in zip(report.ids, report.centers, report.fractions):
            w.writerow([sid, repr(cx), repr(cy), repr(f)])
    paths.append(path)

    path = directory / "sizes.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin", "lower", "upper", "count"])
        for b, n in enumerate(report.size_histogram):
            w.writerow([b, f"{b / SIZE_BINS:.1f}", f"{(b + 1) / SIZE_BINS:.1f}", int(n)])
    paths.append(path)

    path = directory / "density.csv"
    g = report.density_grid.shape[0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row"] + [f"c{j}" for j in range(g)])
        for r in range(g):
            w.writerow([r] + [int(v) for v in report.density_grid[r]])
    paths.append(path)

    path = directory / "report.svg"
    path.write_text(render_svg(report), encoding="utf-8")
    paths.append(path)
    return paths


def _heat(t: float) -> str:
    # black -> red -> yellow
    r = int(255 * min(1.0, 2 * t))
    g = int(255 * max(0.0, 2 * t - 1))
    return f"rgb({r},{g},0)"


def render_svg(report: DistributionReport, size: int = 320) -> str:
    pad = 30
    width = 2 * size + 3 * pad
    height = size + 2 * pad
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{pad}" y="{pad - 10}">box centres (n={report.count})</text>',
        f'<rect x="{pad}" y="{pad}" width="{size}" height="{size}" fill="black"/>',
    ]
    grid = report.density_grid
    g = grid.shape[0]
    peak = grid.max() if grid.size and grid.max() > 0 else 1
    cell = size / g
    for r, c in zip(*np.nonzero(grid)):
        out.append(
            f'<rect x="{pad + c * cell:.2f}" y="{pad + r * cell:.2f}" width="{cell:.2f}" '
            f'height="{cell:.2f}" fill="{_heat(grid[r, c] / peak)}"/>'
        )
    for cx, cy in report.centers:
        out.append(f'<circle cx="{pad + cx * size:.2f}" cy="{pad + cy * size:.2f}" r="1.5" '
                   f'fill="cyan" fill-opacity="0.6"/>')

    x0 = 2 * pad + size
    out.append(f'<text x="{x0}" y="{pad - 10}">box area / image area</text>')
    hist = report.size_histogram
    top = hist.max() if hist.max() > 0 else 1
    bar = size / SIZE_BINS
    for b, n in enumerate(hist):
        bh = size * n / top
        out.append(f'<rect x="{x0 + b * bar:.2f}" y="{pad + size - bh:.2f}" width="{bar - 2:.2f}" '
                   f'height="{bh:.2f}" fill="steelblue"/>')
        out.append(f'<text x="{x0 + b * bar:.2f}" y="{pad + size + 14}">{b / SIZE_BINS:.1f}</text>')
    out.append('</svg>')
    return "\n".join(out) + "\n"
