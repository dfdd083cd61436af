"""Pairing objects with backgrounds and choosing where the object lands.

Distances are cosine distances (``1 - similarity``) between descriptors.
Per object every candidate background is ranked, then one neighbour is
selected either as the one whose distance is closest to ``mu + sigma`` of the
retained neighbours or as the ``floor(k / 2)``-th neighbour.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from idaug.errors import ManifestError, MatchError, ZeroVectorError
from idaug.features import FeatureStore, cosine_distance, extract_features

log = logging.getLogger("idaug")

CRITERIA = ("mu_plus_sigma", "median")
READINGS = ("distance", "similarity")


@dataclass(frozen=True)
class Neighbor:
    background_id: str
    distance: float


@dataclass(frozen=True)
class NeighborList:
    """k nearest backgrounds of one object, ascending by distance then id."""

    object_id: str
    entries: tuple[Neighbor, ...]
    mu: float
    sigma: float

    @property
    def k(self) -> int:
        return len(self.entries)

    def distances(self) -> np.ndarray:
        return np.array([e.distance for e in self.entries])


@dataclass(frozen=True)
class MatchResult:
    object_id: str
    background_id: str
    criterion: str
    distance: float
    mu: float
    sigma: float


@dataclass(frozen=True)
class PatchGrid:
    patch_w: int
    patch_h: int
    anchors: tuple[tuple[int, int], ...]


def normalize_criterion(name: str) -> str:
    key = name.replace("-", "_").lower()
    aliases = {"mu_sigma": "mu_plus_sigma", "mu_plus_sigma": "mu_plus_sigma", "median": "median"}
    if key not in aliases:
        raise ValueError(f"unknown criterion {name!r}; use mu-sigma or median")
    return aliases[key]


class BackgroundIndex:
    """Row-normalised background descriptors for repeated exhaustive queries."""

    def __init__(self, store: FeatureStore):
        norms = np.linalg.norm(store.vectors, axis=1)
        keep = norms > 0
        for sid in np.asarray(store.ids, dtype=object)[~keep]:
            log.warning("stage=match sample=%s event=skipped reason=zero-feature-vector", sid)
        self.ids = tuple(sid for sid, k in zip(store.ids, keep) if k)
        self.unit = store.vectors[keep] / norms[keep, None]
        # lexicographic position of each id, used as the secondary sort key
        order = sorted(range(len(self.ids)), key=self.ids.__getitem__)
        self.id_rank = np.empty(len(self.ids), dtype=np.int64)
        self.id_rank[order] = np.arange(len(self.ids))

    def __len__(self) -> int:
        return len(self.ids)

    def distances(self, vector: np.ndarray) -> np.ndarray:
        norm = np.linalg.norm(vector)
        if norm == 0:
            raise ZeroVectorError("object feature vector is zero")
        sims = self.unit @ (np.asarray(vector, dtype=np.float64) / norm)
        return np.clip(1.0 - sims, 0.0, 1.0)


def rank_backgrounds(
    object_id: str,
    object_features: np.ndarray,
    store: FeatureStore | BackgroundIndex,
    k: Optional[int] = None,
    exclude_self: bool = True,
) -> NeighborList:
    """Exhaustive k-nearest backgrounds of one object by cosine distance.

    ``k=None`` keeps every candidate. ``mu`` and ``sigma`` are the mean and
    population standard deviation of the retained distances.
    """
    index = store if isinstance(store, BackgroundIndex) else BackgroundIndex(store)
    dist = index.distances(object_features)
    candidates = np.arange(len(index))
    if exclude_self:
        candidates = np.array([i for i in candidates if index.ids[i] != object_id], dtype=np.int64)
    if k is None:
        k = candidates.size
    if k < 1 or candidates.size < k:
        raise MatchError(f"{object_id}: need k={k} candidates, have {candidates.size}")
    order = candidates[np.lexsort((index.id_rank[candidates], dist[candidates]))][:k]
    kept = dist[order]
    entries = tuple(Neighbor(index.ids[i], float(d)) for i, d in zip(order, kept))
    return NeighborList(object_id, entries, float(np.mean(kept)), float(np.std(kept)))


def select_background(neighbors: NeighborList, criterion: str = "mu_plus_sigma",
                      reading: str = "distance") -> MatchResult:
    """Pick one background from a ranked neighbour list.

    ``mu_plus_sigma`` takes the neighbour closest to ``mu + sigma``; ties go
    to the smaller distance, then the smaller id (the list order).
    ``median`` takes 0-based entry ``floor(k / 2)``. With
    ``reading="similarity"`` the statistics are taken over similarities,
    which in distance terms targets ``mu - sigma``.
    """
    criterion = normalize_criterion(criterion)
    if reading not in READINGS:
        raise ValueError(f"reading must be one of {READINGS}")
    if not neighbors.entries:
        raise MatchError(f"{neighbors.object_id}: empty neighbour list")
    if criterion == "median":
        pick = neighbors.k // 2
    else:
        target = neighbors.mu + neighbors.sigma if reading == "distance" else neighbors.mu - neighbors.sigma
        pick = int(np.argmin(np.abs(neighbors.distances() - target)))
    chosen = neighbors.entries[pick]
    return MatchResult(neighbors.object_id, chosen.background_id, criterion,
                       chosen.distance, neighbors.mu, neighbors.sigma)


def match_all(
    objects: FeatureStore,
    backgrounds: FeatureStore,
    criterion: str = "mu_plus_sigma",
    k: Optional[int] = None,
    exclude_self: bool = True,
    reading: str = "distance",
) -> list[MatchResult]:
    index = BackgroundIndex(backgrounds)
    results = []
    for oid, vec in zip(objects.ids, objects.vectors):
        neighbors = rank_backgrounds(oid, vec, index, k=k, exclude_self=exclude_self)
        results.append(select_background(neighbors, criterion, reading))
    return results


MATCH_COLUMNS = ("object_id", "background_id", "distance", "mu", "sigma")


def write_matches(matches: list[MatchResult], path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MATCH_COLUMNS)
        for m in matches:
            writer.writerow([m.object_id, m.background_id, repr(m.distance), repr(m.mu), repr(m.sigma)])
    return path


def read_matches(path: str | os.PathLike) -> dict[str, MatchResult]:
    path = Path(path)
    if not path.is_file():
        raise ManifestError("matches file not found", path=path)
    out: dict[str, MatchResult] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MATCH_COLUMNS:
            raise ManifestError(f"expected columns {','.join(MATCH_COLUMNS)}", path=path, line=1)
        for lineno, row in enumerate(reader, start=2):
            try:
                out[row["object_id"]] = MatchResult(
                    row["object_id"], row["background_id"], "",
                    float(row["distance"]), float(row["mu"]), float(row["sigma"]),
                )
            except (TypeError, ValueError):
                raise ManifestError("malformed match row", path, lineno) from None
    return out


# --- intra-image placement --------------------------------------------------


def _axis_anchors(total: int, size: int) -> list[int]:
    anchors = list(range(0, total - size + 1, size))
    if anchors[-1] != total - size:
        anchors.append(total - size)
    return anchors


def slice_patches(background_size: tuple[int, int], patch_size: tuple[int, int]) -> PatchGrid:
    """Tile a ``(w_b, h_b)`` background with ``(w, h)`` patches at stride = patch size.

    The last patch on each axis is pulled back inside the image so every
    patch keeps the full size. Anchors are ``(x, y)`` in row-major order.
    """
    wb, hb = background_size
    w, h = patch_size
    if w < 1 or h < 1:
        raise ValueError("patch size must be positive")
    if w > wb or h > hb:
        raise MatchError(f"{w}x{h} patch does not fit a {wb}x{hb} background")
    xs = _axis_anchors(wb, w)
    ys = _axis_anchors(hb, h)
    return PatchGrid(w, h, tuple((x, y) for y in ys for x in xs))


def find_best_patch(a_star: np.ndarray, background: np.ndarray, grid: PatchGrid) -> tuple[int, int]:
    """Anchor whose patch descriptor is farthest (cosine) from ``a_star``.

    Ties resolve to the first anchor in row-major order.
    """
    if not grid.anchors:
        raise MatchError("empty patch grid")
    best, best_d = grid.anchors[0], -1.0
    for x, y in grid.anchors:
        patch = background[y : y + grid.patch_h, x : x + grid.patch_w]
        d = cosine_distance(a_star, extract_features(patch, strict=False))
        if d > best_d:
            best, best_d = (x, y), d
    return best
