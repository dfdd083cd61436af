"""Salience map metrics and multi-metric model ranking.

Prediction maps are uint8 in [0, 255]; ground truths are binary masks
(nonzero = object). A map is binarised at threshold ``th`` as ``value > th``.
"""

from __future__ import annotations

import csv
import glob
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from idaug.errors import DimensionMismatchError, EvaluationError

THRESHOLDS = np.arange(1, 255)
DEFAULT_BETA = 0.3
DEFAULT_FIXED_TH = 127
EPS = np.spacing(1)


def _check_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"prediction shape {a.shape} != ground truth shape {b.shape}")


def binarize(saliency: np.ndarray, th: int) -> np.ndarray:
    """0/255 map of pixels strictly above ``th``."""
    return np.where(np.asarray(saliency) > th, 255, 0).astype(np.uint8)


def is_non_salient(gt: np.ndarray) -> bool:
    """All-zero ground truths are left out of precision/recall/F aggregation."""
    return not np.any(gt)


non_salient_policy = is_non_salient


@dataclass(frozen=True)
class BinaryConfusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    def specificity(self) -> float:
        d = self.tn + self.fp
        # no negatives to misclassify
        return self.tn / d if d else 1.0

    def fpr(self) -> float:
        return 1.0 - self.specificity()

    def fnr(self) -> float:
        return 1.0 - self.recall()

    def pwc(self) -> float:
        return 100.0 * (self.fn + self.fp) / self.total


def confusion(pred: np.ndarray, gt: np.ndarray) -> BinaryConfusion:
    """Pixel confusion counts of two binary maps (nonzero = positive)."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    _check_shapes(pred, gt)
    p = pred > 0
    g = gt > 0
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(p.size - tp - fp - fn)
    return BinaryConfusion(tp, fp, tn, fn)


def f_beta(precision: float, recall: float, beta: float = DEFAULT_BETA) -> float:
    b2 = beta * beta
    denom = b2 * precision + recall
    return (1 + b2) * precision * recall / denom if denom > 0 else 0.0


# --- threshold sweep --------------------------------------------------------


@dataclass(frozen=True)
class ThresholdSweep:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    fbeta: np.ndarray
    beta: float
    n_images: int
    n_excluded: int

    @property
    def beta_squared(self) -> float:
        return self.beta * self.beta


@dataclass(frozen=True)
class BestF:
    fbeta: float
    threshold: int
    precision: float
    recall: float


def _above_counts(values: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Number of ``values`` strictly greater than each threshold."""
    hist = np.bincount(values.ravel(), minlength=256)
    at_least = np.cumsum(hist[::-1])[::-1]
    at_least = np.append(at_least, 0)
    return at_least[thresholds + 1]


def per_image_pr(pred: np.ndarray, gt: np.ndarray, thresholds: np.ndarray = THRESHOLDS) -> tuple[np.ndarray, np.ndarray]:
    """Precision and recall of one map at every threshold."""
    pred = np.asarray(pred, dtype=np.uint8)
    gt = np.asarray(gt) > 0
    _check_shapes(pred, gt)
    tp = _above_counts(pred[gt], thresholds)
    fp = _above_counts(pred[~gt], thresholds)
    n_pos = np.count_nonzero(gt)
    predicted = tp + fp
    precision = np.divide(tp, predicted, out=np.zeros(len(thresholds)), where=predicted > 0)
    recall = tp / n_pos if n_pos else np.zeros(len(thresholds))
    return precision, recall


def mean_pr_curve(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray],
                  beta: float = DEFAULT_BETA) -> ThresholdSweep:
    """Mean per-image precision and recall, and their F_beta, for thresholds 1..254.

    Raises:
        EvaluationError: with no pairs, or when every ground truth is empty.
    """
    if len(preds) != len(gts):
        raise EvaluationError(f"{len(preds)} predictions for {len(gts)} ground truths")
    if not preds:
        raise EvaluationError("no images to evaluate")
    p_sum = np.zeros(len(THRESHOLDS))
    r_sum = np.zeros(len(THRESHOLDS))
    used = 0
    for pred, gt in zip(preds, gts):
        if is_non_salient(gt):
            _check_shapes(np.asarray(pred), np.asarray(gt))
            continue
        p, r = per_image_pr(pred, gt)
        p_sum += p
        r_sum += r
        used += 1
    if used == 0:
        raise EvaluationError("every ground truth is empty; F-measure is undefined")
    precision = p_sum / used
    recall = r_sum / used
    b2 = beta * beta
    denom = b2 * precision + recall
    fb = np.divide((1 + b2) * precision * recall, denom, out=np.zeros_like(denom), where=denom > 0)
    return ThresholdSweep(THRESHOLDS.copy(), precision, recall, fb, beta, len(preds), len(preds) - used)


def best_fbeta(sweep: ThresholdSweep) -> BestF:
    """Maximum F_beta over the sweep; ties go to the smallest threshold."""
    k = int(np.argmax(sweep.fbeta))
    return BestF(float(sweep.fbeta[k]), int(sweep.thresholds[k]),
                 float(sweep.precision[k]), float(sweep.recall[k]))


# --- continuous metrics -----------------------------------------------------


def _unit(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) / 255.0


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean absolute difference of the two maps scaled to [0, 1]."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    _check_shapes(pred, gt)
    return float(np.mean(np.abs(_unit(pred) - _unit(gt))))


def _object_score(x: np.ndarray) -> float:
    mean = float(np.mean(x))
    std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    return 2.0 * mean / (mean * mean + 1.0 + std + EPS)


def _ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    if n == 0:
        return 0.0
    x = pred.mean()
    y = gt.mean()
    dx = pred - x
    dy = gt - y
    var_x = np.sum(dx * dx) / (n - 1 + EPS)
    var_y = np.sum(dy * dy) / (n - 1 + EPS)
    cov = np.sum(dx * dy) / (n - 1 + EPS)
    alpha = 4 * x * y * cov
    beta = (x * x + y * y) * (var_x + var_y)
    if alpha != 0:
        return float(alpha / (beta + EPS))
    return 1.0 if beta == 0 else 0.0


def s_measure(pred: np.ndarray, gt: np.ndarray, alpha: float = 0.5) -> float:
    """Structure measure: blend of object-aware and region-aware similarity.

    ``pred`` is scaled by 1/255; ``gt`` is treated as binary.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    _check_shapes(pred, gt)
    p = _unit(pred)
    g = gt > 0
    fg_ratio = float(np.mean(g))
    if fg_ratio == 0:
        return float(1.0 - np.mean(p))
    if fg_ratio == 1:
        return float(np.mean(p))

    object_part = fg_ratio * _object_score(p[g]) + (1 - fg_ratio) * _object_score(1.0 - p[~g])

    h, w = g.shape
    cy, cx = np.argwhere(g).mean(axis=0).round()
    cy, cx = int(cy) + 1, int(cx) + 1
    gf = g.astype(np.float64)
    area = h * w
    w_lt = cx * cy / area
    w_rt = cy * (w - cx) / area
    w_lb = (h - cy) * cx / area
    w_rb = 1 - w_lt - w_rt - w_lb
    region_part = (
        w_lt * _ssim(p[:cy, :cx], gf[:cy, :cx])
        + w_rt * _ssim(p[:cy, cx:], gf[:cy, cx:])
        + w_lb * _ssim(p[cy:, :cx], gf[cy:, :cx])
        + w_rb * _ssim(p[cy:, cx:], gf[cy:, cx:])
    )
    return float(max(0.0, alpha * object_part + (1 - alpha) * region_part))


# --- per-model evaluation ---------------------------------------------------


@dataclass(frozen=True)
class MetricVector:
    model_id: str
    s_measure: float
    f_beta: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    mae: float
    specificity: Optional[float]
    fpr: Optional[float]
    fnr: Optional[float]
    pwc: Optional[float]


METRIC_NAMES = tuple(f.name for f in fields(MetricVector) if f.name != "model_id")
HIGHER_IS_BETTER = {
    "s_measure": True, "f_beta": True, "precision": True, "recall": True, "specificity": True,
    "mae": False, "fpr": False, "fnr": False, "pwc": False,
}


@dataclass(frozen=True)
class ModelEvaluation:
    metrics: MetricVector
    sweep: Optional[ThresholdSweep]
    best: Optional[BestF]
    fixed_th: int
    beta: float
    n_images: int
    n_excluded: int


def evaluate_model(model_id: str, preds: Sequence[np.ndarray], gts: Sequence[np.ndarray],
                   beta: float = DEFAULT_BETA, fixed_th: int = DEFAULT_FIXED_TH) -> ModelEvaluation:
    """All metrics of one model over a dataset.

    S-measure and MAE average over every image. The fixed-threshold binary
    metrics average per-image values over images with a non-empty ground
    truth; they are ``None`` when there is none.
    """
    if len(preds) != len(gts) or not preds:
        raise EvaluationError("need the same, non-zero number of predictions and ground truths")
    sm = float(np.mean([s_measure(p, g) for p, g in zip(preds, gts)]))
    err = float(np.mean([mae(p, g) for p, g in zip(preds, gts)]))

    confusions = [confusion(binarize(p, fixed_th), g) for p, g in zip(preds, gts) if not is_non_salient(g)]
    excluded = len(preds) - len(confusions)
    if confusions:
        prec = float(np.mean([c.precision() for c in confusions]))
        rec = float(np.mean([c.recall() for c in confusions]))
        spec = float(np.mean([c.specificity() for c in confusions]))
        fnr = float(np.mean([c.fnr() for c in confusions]))
        metrics = MetricVector(model_id, sm, f_beta(prec, rec, beta), prec, rec, err, spec,
                               float(np.mean([c.fpr() for c in confusions])), fnr,
                               float(np.mean([c.pwc() for c in confusions])))
        sweep = mean_pr_curve(preds, gts, beta)
        best = best_fbeta(sweep)
    else:
        metrics = MetricVector(model_id, sm, None, None, None, err, None, None, None, None)
        sweep = best = None
    return ModelEvaluation(metrics, sweep, best, fixed_th, beta, len(preds), excluded)


# --- ranking ----------------------------------------------------------------


@dataclass(frozen=True)
class RankTable:
    model_ids: tuple[str, ...]
    ranks: dict[str, tuple[int, ...]]
    average: tuple[float, ...]

    def rows(self) -> list[tuple[str, float, dict[str, int]]]:
        """Models ordered by average rank, then id."""
        order = sorted(range(len(self.model_ids)), key=lambda i: (self.average[i], self.model_ids[i]))
        return [(self.model_ids[i], self.average[i], {m: r[i] for m, r in self.ranks.items()}) for i in order]


def competition_rank(values: Sequence[float], higher_is_better: bool) -> tuple[int, ...]:
    """1 + number of strictly better values ("1, 2, 2, 4" ranking)."""
    v = np.asarray(values, dtype=np.float64)
    if higher_is_better:
        return tuple(int(1 + np.count_nonzero(v > x)) for x in v)
    return tuple(int(1 + np.count_nonzero(v < x)) for x in v)


def average_ranking(models: Sequence[MetricVector], metrics: Sequence[str] = METRIC_NAMES) -> RankTable:
    """Mean per-metric rank of every model; ranks close to 1 are better."""
    if len(models) < 2:
        raise EvaluationError("ranking needs at least two models")
    ranks: dict[str, tuple[int, ...]] = {}
    for name in metrics:
        column = [getattr(m, name) for m in models]
        missing = [m.model_id for m, v in zip(models, column) if v is None or math.isnan(v)]
        if missing:
            raise EvaluationError(f"metric {name!r} missing for {', '.join(missing)}")
        ranks[name] = competition_rank(column, HIGHER_IS_BETTER[name])
    average = tuple(float(np.mean([ranks[n][i] for n in metrics])) for i in range(len(models)))
    return RankTable(tuple(m.model_id for m in models), ranks, average)


# --- files ------------------------------------------------------------------

EXTRA_COLUMNS = ("fixed_th", "beta", "f_beta_star", "best_th", "p_star", "r_star", "n_images", "n_excluded")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics(ev: ModelEvaluation, path: str | os.PathLike) -> Path:
    """One-row CSV: MetricVector fields in order, then sweep summary columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    m = ev.metrics
    best = ev.best
    row = [getattr(m, f.name) for f in fields(MetricVector)] + [
        ev.fixed_th, ev.beta,
        best.fbeta if best else None, best.threshold if best else None,
        best.precision if best else None, best.recall if best else None,
        ev.n_images, ev.n_excluded,
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f.name for f in fields(MetricVector)] + list(EXTRA_COLUMNS))
        w.writerow([_fmt(v) for v in row])
    return path


def write_sweep(sweep: ThresholdSweep, path: str | os.PathLike) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "precision", "recall", "f_beta"])
        for t, p, r, f in zip(sweep.thresholds, sweep.precision, sweep.recall, sweep.fbeta):
            w.writerow([int(t), repr(float(p)), repr(float(r)), repr(float(f))])
    return path


def read_metrics(path: str | os.PathLike) -> tuple[MetricVector, dict[str, str]]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != 1:
        raise EvaluationError(f"{path}: expected exactly one metrics row, found {len(rows)}")
    row = rows[0]
    values = {}
    for f in fields(MetricVector):
        if f.name not in row:
            raise EvaluationError(f"{path}: missing column {f.name!r}")
        raw = row[f.name]
        values[f.name] = raw if f.name == "model_id" else (float(raw) if raw != "" else None)
    extras = {k: row.get(k, "") for k in EXTRA_COLUMNS}
    return MetricVector(**values), extras


def rank_metric_files(pattern: str, fixed_th: int = DEFAULT_FIXED_TH) -> RankTable:
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise EvaluationError(f"no metrics files match {pattern!r}")
    models = []
    for p in paths:
        mv, extras = read_metrics(p)
        if extras.get("fixed_th") not in ("", None) and int(extras["fixed_th"]) != fixed_th:
            raise EvaluationError(
                f"{p} was computed at fixed threshold {extras['fixed_th']}, not {fixed_th}"
            )
        models.append(mv)
    ids = [m.model_id for m in models]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise EvaluationError(f"duplicate model ids: {', '.join(dupes)}")
    return average_ranking(models)


def write_ranks(table: RankTable, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metrics = list(table.ranks)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model_id", "average_rank"] + [f"rank_{m}" for m in metrics])
        for model, avg, ranks in table.rows():
            w.writerow([model, repr(avg)] + [ranks[m] for m in metrics])
    return path
