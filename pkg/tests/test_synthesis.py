import math

import numpy as np
import pytest

from idaug.errors import PlacementError
from idaug.sample import BoundingBox, compute_bounding_box, load_manifest, read_image
from idaug.synthesis import (
    GridMaskParams,
    PlacementPlan,
    ScaleChoice,
    augment_manifest,
    choose_scale,
    composite,
    fallback_scale,
    gridmask,
    gridmask_mask,
    hflip,
    hflip_box,
    plan_placement,
    resample_object,
    resize_bilinear,
    resized_size,
    rotate,
    same_orientation,
    sample_rng,
    sample_scale,
    size_band,
    synthesize_sample,
)
from idaug.toy import make_toy_dataset

from conftest import make_sample
from oracles import resize_align_corners


def test_bands_follow_index(rng):
    for i in range(30):
        lo, hi = size_band(i)
        _, r = sample_scale(i, rng, 10000, 2500)
        assert lo <= r < hi
    assert size_band(0) == (0.075, 0.1) and size_band(4) == (0.1, 0.2) and size_band(2) == (0.2, 0.3)


def test_scale_examples():
    s, _ = sample_scale(0, None, 160000, 10000, fraction=0.1)
    assert s == pytest.approx(math.sqrt(1.6), abs=1e-15)
    assert s == pytest.approx(1.264911, abs=1e-6)
    s, _ = sample_scale(1, None, 160000, 10000, fraction=10000 / 160000)
    assert s == 1.0


def test_scale_rejects_degenerate():
    with pytest.raises(PlacementError):
        sample_scale(0, None, 100, 0, fraction=0.1)


def test_fallback_same_orientation(rng):
    choice = choose_scale(0, 100, 50, 400, 300, rng, fraction=0.29 * 100)  # far too big
    assert choice.fallback_used and choice.rotation == 0
    assert choice.scale == 2.0 == fallback_scale(100, 50, 400, 300)
    assert choice.size[0] <= 400 and choice.size[1] <= 300


def test_fit_first_branch(rng):
    choice = choose_scale(0, 40, 30, 400, 300, rng)
    assert not choice.fallback_used and choice.rotation == 0


def test_orientation_rules():
    assert same_orientation(100, 50, 400, 300)
    assert same_orientation(50, 50, 30, 60) and same_orientation(30, 60, 50, 50)
    assert not same_orientation(100, 50, 300, 400)


def test_rotation_branch_swaps_dims(rng):
    choice = choose_scale(0, 200, 50, 100, 300, rng, fraction=10.0)
    assert choice.rotation in (90, -90) and choice.fallback_used
    assert choice.scale == pytest.approx(0.5 * min(100 / 50, 300 / 200))
    assert choice.size[0] <= 100 and choice.size[1] <= 300


def test_resized_size_tracks_box_extent():
    # a 10x10 pixel block spans 9 pixels max - min, so doubling spans 18
    assert resized_size(9, 9, 2.0) == (19, 19)
    assert resized_size(9, 4, 1.0) == (10, 5)


def _sample_with_disc(rng):
    image = rng.integers(0, 256, (30, 30, 3), dtype=np.uint8)
    yy, xx = np.mgrid[0:30, 0:30]
    mask = np.where((yy - 15) ** 2 + (xx - 14) ** 2 <= 20, 255, 0).astype(np.uint8)
    mask[15, 10:19] = 255
    mask[11:20, 14] = 255
    return make_sample("d", image, mask)


def _plan(size, rotation=0):
    return ScaleChoice(1.0, rotation, False, 0.0, size)


def test_identity_resample(rng):
    s = _sample_with_disc(rng)
    b = s.bbox
    crop, alpha = resample_object(s, _plan((b.pixel_width, b.pixel_height)))
    assert np.array_equal(crop, s.image[b.y_min : b.y_max + 1, b.x_min : b.x_max + 1])
    assert set(np.unique(alpha)) <= {0.0, 1.0}


def test_double_rotation_is_half_turn(rng):
    crop = rng.integers(0, 256, (5, 8, 3), dtype=np.uint8)
    assert np.array_equal(rotate(rotate(crop, 90), 90), np.rot90(crop, 2))
    assert np.array_equal(rotate(rotate(crop, 90), -90), crop)


def test_resize_matches_oracle(rng):
    src = rng.random((10, 13, 3)) * 255
    for shape in [(20, 26), (7, 5), (10, 13), (1, 4)]:
        assert np.allclose(resize_bilinear(src, *shape), resize_align_corners(src, *shape), atol=1e-9)


def test_upscaled_alpha_area(rng):
    image = rng.integers(0, 256, (10, 10, 3), dtype=np.uint8)
    yy, xx = np.mgrid[0:10, 0:10]
    mask = np.where((yy - 4.5) ** 2 + (xx - 4.5) ** 2 <= 4.6 ** 2, 255, 0).astype(np.uint8)
    s = make_sample("c", image, mask)
    assert s.bbox.pixel_width == 10
    _, alpha = resample_object(s, _plan((20, 20)))
    oracle = resize_align_corners(mask / 255.0, 20, 20)
    assert np.array_equal(alpha > 0, oracle > 0)
    assert abs((alpha >= 0.5).sum() - 4 * (mask > 0).sum()) <= 0.05 * 4 * (mask > 0).sum()


def test_composite_cases(rng):
    bg = rng.integers(0, 256, (20, 20, 3), dtype=np.uint8)
    crop = rng.integers(0, 256, (5, 6, 3), dtype=np.uint8)
    out, mask = composite(bg, crop, np.ones((5, 6)), (3, 4))
    assert np.array_equal(out[4:9, 3:9], crop)
    assert mask.sum() == 30 * 255
    out, mask = composite(bg, crop, np.zeros((5, 6)), (3, 4))
    assert np.array_equal(out, bg) and not mask.any()
    white = np.full((4, 4, 3), 255, np.uint8)
    out, mask = composite(white, np.zeros((2, 2, 3), np.uint8), np.full((2, 2), 0.5), (1, 1))
    assert np.all(out[1:3, 1:3] == 128) and np.all(mask[1:3, 1:3] == 255)


def test_composite_keeps_background_where_alpha_zero(rng):
    bg = rng.integers(0, 256, (20, 20, 3), dtype=np.uint8)
    alpha = rng.random((8, 8))
    alpha[alpha < 0.3] = 0.0
    out, _ = composite(bg, rng.integers(0, 256, (8, 8, 3), dtype=np.uint8), alpha, (2, 2))
    region = out[2:10, 2:10]
    assert np.array_equal(region[alpha == 0], bg[2:10, 2:10][alpha == 0])
    assert np.array_equal(out[10:], bg[10:])


def test_composite_overflow():
    with pytest.raises(PlacementError):
        composite(np.zeros((5, 5, 3), np.uint8), np.zeros((3, 3, 3), np.uint8), np.ones((3, 3)), (3, 0))


def test_plan_and_synthesize_sample(rng):
    s = _sample_with_disc(rng)
    bg = rng.integers(0, 256, (80, 100, 3), dtype=np.uint8)
    plan, crop, alpha = plan_placement(0, s, bg, sample_rng(4, 0), "bg")
    assert isinstance(plan, PlacementPlan) and crop.shape[:2] == alpha.shape == plan.size[::-1]
    x, y = plan.anchor
    assert 0 <= x <= 100 - plan.size[0] and 0 <= y <= 80 - plan.size[1]
    a, plan_a = synthesize_sample(0, s, bg, seed=4)
    b, plan_b = synthesize_sample(0, s, bg, seed=4)
    assert plan_a == plan_b and np.array_equal(a.image, b.image) and np.array_equal(a.mask, b.mask)
    assert a.id == "d_ida" and a.salient


def test_hflip():
    image = np.arange(2 * 10 * 3, dtype=np.uint8).reshape(2, 10, 3)
    mask = np.zeros((2, 10), np.uint8)
    mask[1, 0] = 255
    fi, fm = hflip(image, mask)
    assert fm[1, 9] == 255 and np.array_equal(fi[:, 9], image[:, 0])
    assert all(np.array_equal(a, b) for a, b in zip(hflip(fi, fm), (image, mask)))
    assert hflip_box(BoundingBox(2, 3, 5, 7), 10) == BoundingBox(4, 3, 7, 7)


def test_gridmask_probability_zero_is_identity(rng):
    image = rng.integers(0, 256, (50, 50, 3), dtype=np.uint8)
    assert np.array_equal(gridmask(image, GridMaskParams(16, 0.6, p=0.0), rng), image)


def test_gridmask_erased_fraction(rng):
    image = np.full((320, 320, 3), 255, np.uint8)
    out = gridmask(image, GridMaskParams(32, 0.6, (0, 0), p=1.0), rng)
    erased = np.mean(np.all(out == 0, axis=2))
    assert abs(erased - 0.4 ** 2) <= 0.02
    assert np.all((out == 0) | (out == 255))


def test_gridmask_tiny_squares():
    p = GridMaskParams(40, 0.999)
    assert p.side == 1
    assert gridmask_mask(400, 400, p).mean() == pytest.approx(1 / 40 ** 2)


def test_gridmask_params_validated():
    with pytest.raises(ValueError):
        GridMaskParams(1)
    with pytest.raises(ValueError):
        GridMaskParams(10, ratio=1.0)


def test_baseline_augment_manifests(tmp_path):
    manifest = load_manifest(make_toy_dataset(tmp_path / "toy", n=3, width=40, height=40))
    path, outcomes = augment_manifest(manifest, tmp_path / "flip", "hflip")
    assert all(o.ok for o in outcomes)
    flipped = load_manifest(path)
    assert flipped.ids() == [f"{i}_hflip" for i in manifest.ids()]
    assert np.array_equal(read_image(flipped[0].image_path), read_image(manifest[0].image_path)[:, ::-1])
    path, _ = augment_manifest(manifest, tmp_path / "grid", "gridmask", d_range=(8, 12), p=1.0)
    assert load_manifest(path).ids() == [f"{i}_grid" for i in manifest.ids()]


def test_fitted_outputs_in_band(tmp_path, rng):
    s = _sample_with_disc(rng)
    bg = rng.integers(0, 256, (120, 120, 3), dtype=np.uint8)
    for i in range(9):
        out, plan = synthesize_sample(i, s, bg, seed=11)
        if plan.fallback_used:
            continue
        box = compute_bounding_box(out.mask)
        a_b = 120 * 120
        lo, hi = size_band(i)
        assert (box.width - 1) * (box.height - 1) / a_b < hi
        assert (box.width + 1) * (box.height + 1) / a_b >= lo
