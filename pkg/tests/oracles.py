"""Slow, independent reference computations used as test oracles.

Nothing here imports the code under test.
"""

import math
from fractions import Fraction

import mpmath
import numpy as np
from scipy import ndimage


def cosine_mp(a, b, dps=50):
    with mpmath.workdps(dps):
        dot = mpmath.fsum(mpmath.mpf(float(x)) * mpmath.mpf(float(y)) for x, y in zip(a, b))
        na = mpmath.sqrt(mpmath.fsum(mpmath.mpf(float(x)) ** 2 for x in a))
        nb = mpmath.sqrt(mpmath.fsum(mpmath.mpf(float(y)) ** 2 for y in b))
        return float(dot / (na * nb))


def hsv_bins_pixel(r, g, b):
    """Exact H/S/V bin of one pixel with rational arithmetic."""
    r, g, b = int(r), int(g), int(b)
    mx, mn = max(r, g, b), min(r, g, b)
    d = mx - mn
    if d == 0:
        hue = Fraction(0)
    elif mx == r:
        hue = (60 * Fraction(g - b, d)) % 360
    elif mx == g:
        hue = 60 * (2 + Fraction(b - r, d))
    else:
        hue = 60 * (4 + Fraction(r - g, d))
    sat = Fraction(d, mx) if mx else Fraction(0)
    val = Fraction(mx, 255)
    return (
        min(math.floor(hue * 64 / 360), 63),
        min(math.floor(sat * 64), 63),
        min(math.floor(val * 64), 63),
    )


def hsv_counts_naive(image, mask=None):
    h, w = image.shape[:2]
    counts = np.zeros((3, 64), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            if mask is not None and mask[y, x] == 0:
                continue
            for c, k in enumerate(hsv_bins_pixel(*image[y, x])):
                counts[c, k] += 1
    return counts


def luma(image):
    img = image.astype(np.float64)
    return img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114


def _uniform_code(bits):
    p = len(bits)
    changes = sum(bits[i] != bits[i - 1] for i in range(p))
    return sum(bits) if changes <= 2 else p + 1


def _offset(p, points, radius):
    theta = 2 * math.pi * p / points
    return round(-radius * math.sin(theta), 5), round(radius * math.cos(theta), 5)


def lbp_naive(gray, points=24, radius=3.0):
    """Per-pixel loops with the four-weight bilinear formula; -1 on the border."""
    h, w = gray.shape
    m = math.ceil(radius)
    out = np.full((h, w), -1, dtype=np.int64)
    offs = [_offset(p, points, radius) for p in range(points)]
    for y in range(m, h - m):
        for x in range(m, w - m):
            c = gray[y, x]
            bits = []
            for dy, dx in offs:
                sy, sx = y + dy, x + dx
                y0, x0 = math.floor(sy), math.floor(sx)
                wy, wx = sy - y0, sx - x0
                v = (1 - wy) * (1 - wx) * gray[y0, x0]
                if wx:
                    v += (1 - wy) * wx * gray[y0, x0 + 1]
                if wy:
                    v += wy * (1 - wx) * gray[y0 + 1, x0]
                if wx and wy:
                    v += wy * wx * gray[y0 + 1, x0 + 1]
                bits.append(1 if v >= c else 0)
            out[y, x] = _uniform_code(bits)
    return out


def lbp_map_coordinates(gray, points=24, radius=3.0):
    """Same definition, sampled with scipy's spline interpolation at order 1."""
    h, w = gray.shape
    m = math.ceil(radius)
    yy, xx = np.mgrid[m : h - m, m : w - m].astype(np.float64)
    centre = gray[m : h - m, m : w - m]
    bits = []
    for p in range(points):
        dy, dx = _offset(p, points, radius)
        sample = ndimage.map_coordinates(gray, [yy + dy, xx + dx], order=1, mode="nearest")
        bits.append((sample >= centre).astype(np.int64))
    bits = np.array(bits)
    ones = bits.sum(axis=0)
    changes = np.abs(bits - np.concatenate([bits[-1:], bits[:-1]])).sum(axis=0)
    out = np.full((h, w), -1, dtype=np.int64)
    out[m : h - m, m : w - m] = np.where(changes <= 2, ones, points + 1)
    return out


def lbp_hist_naive(codes, mask=None, n_codes=26):
    counts = np.zeros(64, dtype=np.int64)
    for (y, x), code in np.ndenumerate(codes):
        if code < 0 or (mask is not None and mask[y, x] == 0):
            continue
        counts[int(Fraction(int(code) * 64, n_codes))] += 1  # floor of a positive fraction
    return counts


def dilate_naive(mask, radius):
    h, w = mask.shape
    out = np.zeros_like(mask)
    pts = list(zip(*np.nonzero(mask)))
    for y in range(h):
        for x in range(w):
            if any((y - py) ** 2 + (x - px) ** 2 <= radius * radius for py, px in pts):
                out[y, x] = 255
    return out


def pr_brute_force(preds, gts, beta):
    """Loop over images and thresholds, counting pixels directly."""
    thresholds = list(range(1, 255))
    p_mean, r_mean = [], []
    kept = [(p, g) for p, g in zip(preds, gts) if np.any(g)]
    for th in thresholds:
        ps, rs = [], []
        for pred, gt in kept:
            tp = fp = fn = 0
            for v, t in zip(pred.ravel().tolist(), gt.ravel().tolist()):
                hit = v > th
                if hit and t:
                    tp += 1
                elif hit:
                    fp += 1
                elif t:
                    fn += 1
            ps.append(tp / (tp + fp) if tp + fp else 0.0)
            rs.append(tp / (tp + fn))
        p_mean.append(sum(ps) / len(ps))
        r_mean.append(sum(rs) / len(rs))
    b2 = beta * beta
    f = [
        (1 + b2) * p * r / (b2 * p + r) if b2 * p + r > 0 else 0.0
        for p, r in zip(p_mean, r_mean)
    ]
    best = max(range(len(f)), key=lambda i: (f[i], -i))
    return thresholds, p_mean, r_mean, f, (f[best], thresholds[best], p_mean[best], r_mean[best])


def resize_align_corners(array, out_h, out_w):
    src = np.asarray(array, dtype=np.float64)
    h, w = src.shape[:2]
    ys = np.linspace(0, h - 1, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0, w - 1, out_w) if out_w > 1 else np.zeros(1)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    if src.ndim == 2:
        return ndimage.map_coordinates(src, [yy, xx], order=1, mode="nearest")
    return np.stack(
        [ndimage.map_coordinates(src[..., c], [yy, xx], order=1, mode="nearest") for c in range(src.shape[2])],
        axis=-1,
    )
