import csv

import numpy as np
import pytest

from idaug.analyzer import analyze, analyze_masks, box_center, emit_report, size_bin
from idaug.sample import BoundingBox, load_manifest
from idaug.toy import make_toy_dataset


def _box_mask(h, w, y0, y1, x0, x1):
    m = np.zeros((h, w), np.uint8)
    m[y0:y1, x0:x1] = 255
    return m


def test_centered_40_box():
    report = analyze_masks([("a", _box_mask(100, 100, 30, 70, 30, 70))])
    cx, cy = report.centers[0]
    assert (cx, cy) == (pytest.approx(0.5, abs=0.01), pytest.approx(0.5, abs=0.01))
    assert cx == (30 + 69) / 198
    assert report.fractions[0] == pytest.approx(0.1521, abs=1e-15)
    assert report.size_histogram[1] == 1


def test_exact_center_in_odd_image():
    assert box_center(BoundingBox(30, 30, 70, 70), 101, 101) == (0.5, 0.5)
    assert box_center(BoundingBox(0, 0, 100, 100), 101, 101) == (0.5, 0.5)


def test_full_box_and_corner():
    report = analyze_masks([("full", np.full((50, 60), 255, np.uint8)),
                            ("corner", _box_mask(50, 60, 0, 1, 0, 1))])
    assert report.centers[0] == (0.5, 0.5)
    assert size_bin(report.fractions[0]) == 9
    assert report.centers[1] == (0.0, 0.0)


def test_invariants_and_skips(rng):
    masks = [("e", np.zeros((10, 10), np.uint8))]
    for i in range(20):
        y0, x0 = rng.integers(0, 30, 2)
        masks.append((f"m{i}", _box_mask(40, 40, y0, y0 + 5, x0, x0 + 7)))
    report = analyze_masks(masks, grid=8)
    assert report.skipped == ["e"]
    assert report.size_histogram.sum() == report.count == 20
    assert report.density_grid.sum() == 20
    assert all(0 <= c <= 1 for xy in report.centers for c in xy)


def test_emit_report(tmp_path):
    manifest = load_manifest(make_toy_dataset(tmp_path / "toy", n=5, width=40, height=40))
    paths = emit_report(analyze(manifest, grid=4), tmp_path / "stats")
    assert [p.name for p in paths] == ["centers.csv", "sizes.csv", "density.csv", "report.svg"]
    with open(paths[0]) as fh:
        assert len(list(csv.DictReader(fh))) == 5
    with open(paths[1]) as fh:
        assert sum(int(r["count"]) for r in csv.DictReader(fh)) == 5
    assert paths[3].read_text().startswith("<svg")


def test_empty_report(tmp_path):
    paths = emit_report(analyze_masks([]), tmp_path)
    with open(paths[0]) as fh:
        assert list(csv.DictReader(fh)) == []
