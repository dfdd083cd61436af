import sys

import numpy as np
import pytest

from idaug.errors import BackendError, DimensionMismatchError, InpaintError
from idaug.inpaint import (
    InpaintRequest,
    dilate_mask,
    generate_backgrounds,
    hole_boundary,
    inpaint_diffusion,
    inpaint_external,
)
from idaug.sample import load_manifest, read_image
from idaug.toy import make_toy_dataset

from oracles import dilate_naive


def _random_mask(rng, h=20, w=24, p=0.05):
    return np.where(rng.random((h, w)) < p, 255, 0).astype(np.uint8)


@pytest.mark.parametrize("radius", [1, 2, 3])
def test_dilation_matches_naive(rng, radius):
    mask = _random_mask(rng)
    assert np.array_equal(dilate_mask(mask, radius), dilate_naive(mask, radius))


def test_dilation_radius_zero_and_full():
    mask = np.zeros((5, 5), np.uint8)
    mask[2, 2] = 1
    assert np.array_equal(dilate_mask(mask, 0) > 0, mask > 0)
    full = np.full((5, 5), 255, np.uint8)
    assert np.array_equal(dilate_mask(full, 3), full)


def test_dilation_monotone_and_commutes_with_union(rng):
    a, b = _random_mask(rng), _random_mask(rng)
    assert np.all(dilate_mask(a, 3) >= dilate_mask(a, 2))
    union = np.maximum(a, b)
    assert np.array_equal(dilate_mask(union, 2), np.maximum(dilate_mask(a, 2), dilate_mask(b, 2)))


def test_constant_image_stays_constant():
    image = np.full((30, 30, 3), 77, np.uint8)
    hole = np.zeros((30, 30), np.uint8)
    hole[10:20, 8:22] = 255
    out = inpaint_diffusion(InpaintRequest(image, hole, 2)).image
    assert np.all(out == 77)


@pytest.mark.parametrize("method,kw", [("direct", {}), ("jacobi", {"tol": 1e-4, "max_iter": 20000})])
def test_linear_gradient_reproduced(method, kw):
    xs = np.arange(64) * 3
    image = np.repeat(np.repeat(xs[None, :, None], 40, axis=0), 3, axis=2).astype(np.uint8)
    hole = np.zeros((40, 64), np.uint8)
    hole[:, 20:30] = 255  # full-height stripe keeps the gradient harmonic with the free edges
    out = inpaint_diffusion(InpaintRequest(image, hole, 0), method=method, **kw).image
    assert np.abs(out.astype(int) - image.astype(int)).max() <= 1


def test_linear_gradient_interior_hole():
    xs = np.arange(50) * 4
    image = np.repeat(np.repeat(xs[None, :, None], 50, axis=0), 3, axis=2).astype(np.uint8)
    hole = np.zeros((50, 50), np.uint8)
    hole[15:35, 15:35] = 255
    out = inpaint_diffusion(InpaintRequest(image, hole, 0)).image
    assert np.abs(out.astype(int) - image.astype(int)).max() <= 1


def test_empty_hole_is_identity(rng):
    image = rng.integers(0, 256, (12, 12, 3), dtype=np.uint8)
    bg = inpaint_diffusion(InpaintRequest(image, np.zeros((12, 12), np.uint8)))
    assert np.array_equal(bg.image, image)
    assert not bg.hole.any()


def test_full_hole_raises():
    with pytest.raises(InpaintError):
        inpaint_diffusion(InpaintRequest(np.zeros((8, 8, 3), np.uint8), np.full((8, 8), 255, np.uint8)))


def test_request_checks_dimensions():
    with pytest.raises(DimensionMismatchError):
        InpaintRequest(np.zeros((8, 8, 3), np.uint8), np.zeros((8, 9), np.uint8))


def test_hole_boundary_is_outer_ring():
    hole = np.zeros((7, 7), bool)
    hole[3, 3] = True
    ring = hole_boundary(hole)
    assert sorted(zip(*np.nonzero(ring))) == [(2, 3), (3, 2), (3, 4), (4, 3)]


def test_external_pass_through(rng):
    image = rng.integers(0, 256, (16, 20, 3), dtype=np.uint8)
    hole = np.zeros((16, 20), np.uint8)
    hole[4:8, 4:8] = 255
    cmd = f"{sys.executable} -c \"import shutil,sys; shutil.copy(sys.argv[1], sys.argv[2])\" {{image}} {{out}} {{mask}}"
    bg = inpaint_external(cmd, InpaintRequest(image, hole, 1), id="x")
    assert np.array_equal(bg.image, image)


def test_external_failure_carries_stderr(rng):
    image = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
    cmd = f"{sys.executable} -c \"import sys; sys.stderr.write('boom'); sys.exit(1)\" {{image}} {{mask}} {{out}}"
    with pytest.raises(BackendError) as exc:
        inpaint_external(cmd, InpaintRequest(image, np.zeros((8, 8), np.uint8)))
    assert "boom" in exc.value.stderr


def test_external_wrong_size(rng):
    image = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
    script = "import sys; from PIL import Image; Image.new('RGB', (64, 64)).save(sys.argv[3])"
    cmd = f"{sys.executable} -c \"{script}\" {{image}} {{mask}} {{out}}"
    with pytest.raises(DimensionMismatchError):
        inpaint_external(cmd, InpaintRequest(image, np.zeros((8, 8), np.uint8)))


def test_external_template_needs_placeholders():
    with pytest.raises(ValueError):
        inpaint_external("cp {image}", InpaintRequest(np.zeros((4, 4, 3), np.uint8), np.zeros((4, 4), np.uint8)))


def test_generate_backgrounds(tmp_path):
    manifest = load_manifest(make_toy_dataset(tmp_path / "toy", n=4, width=48, height=40))
    path, outcomes = generate_backgrounds(manifest, tmp_path / "bg", dilation_radius=2)
    assert all(o.ok for o in outcomes)
    bgs = load_manifest(path)
    assert bgs.ids() == manifest.ids()
    for e in bgs:
        assert read_image(e.image_path).shape == (40, 48, 3)
    first = {e.id: read_image(e.image_path) for e in bgs}
    path2, _ = generate_backgrounds(manifest, tmp_path / "bg2", dilation_radius=2)
    for e in load_manifest(path2):
        assert np.array_equal(read_image(e.image_path), first[e.id])
