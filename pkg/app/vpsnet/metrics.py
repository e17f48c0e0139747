"""Evaluation metrics: S-measure, mean E-measure, weighted F-measure, Dice, IoU, MAE.

Dice and IoU binarize the prediction at 0.5. S-measure uses alpha = 0.5; an
all-background mask scores ``1 - mean(pred)`` and an all-foreground mask scores
``mean(pred)``. E-measure is averaged over 256 thresholds ``(k + 0.5) / 256`` and
each threshold's score is the pixel mean of the enhanced alignment matrix.
Weighted F uses beta^2 = 1 with the usual 7x7, sigma 5 Gaussian error smoothing
and the distance-based background importance.

Frames are averaged within a clip, then clips are averaged (clip-balanced),
in sorted clip order and with ``math.fsum``.
"""
import logging
import math
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import ndimage

from .exceptions import EmptyInputError, ShapeError

logger = logging.getLogger(__name__)

EPS = np.finfo(np.float64).eps
ALPHA = 0.5
BETA2 = 1.0
NUM_THRESHOLDS = 256
THRESHOLDS = (np.arange(NUM_THRESHOLDS) + 0.5) / NUM_THRESHOLDS

COLUMNS = OrderedDict(
    [
        ("s_measure", "S_alpha"),
        ("e_measure_mean", "E_phi^mn"),
        ("weighted_f", "F_beta^w"),
        ("dice", "Dice"),
        ("iou", "IoU"),
        ("mae", "MAE"),
    ]
)


@dataclass(frozen=True)
class MetricReport:
    dice: float
    iou: float
    mae: float
    s_measure: float
    e_measure_mean: float
    weighted_f: float

    def as_dict(self):
        return asdict(self)

    @classmethod
    def mean(cls, reports):
        reports = list(reports)
        if not reports:
            raise EmptyInputError("cannot average an empty list of reports")
        return cls(**{f.name: math.fsum(getattr(r, f.name) for r in reports) / len(reports) for f in fields(cls)})


@dataclass
class DatasetReport:
    overall: MetricReport
    clips: dict = field(default_factory=dict)  # clip id -> MetricReport, sorted by id
    frames: int = 0

    def as_dict(self):
        return {
            "overall": self.overall.as_dict(),
            "frames": self.frames,
            "clips": {cid: rep.as_dict() for cid, rep in self.clips.items()},
        }


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt) > 0.5
    if pred.shape != gt.shape or pred.ndim != 2:
        raise ShapeError(f"prediction {pred.shape} and mask {gt.shape} must be equal 2-d grids")
    return np.clip(pred, 0.0, 1.0), gt


def dice_score(binary, gt):
    total = binary.sum() + gt.sum()
    if total == 0:
        return 1.0
    return 2.0 * np.logical_and(binary, gt).sum() / total


def iou_score(binary, gt):
    union = np.logical_or(binary, gt).sum()
    if union == 0:
        return 1.0
    return np.logical_and(binary, gt).sum() / union


def _object_score(values):
    if values.size == 0:
        return 0.0
    mu = values.mean()
    return 2.0 * mu / (mu * mu + 1.0 + values.std() + EPS)


def _s_object(pred, gt):
    fg = _object_score(pred[gt])
    bg = _object_score(1.0 - pred[~gt])
    u = gt.mean()
    return u * fg + (1.0 - u) * bg


def _centroid(gt):
    rows, cols = gt.shape
    total = gt.sum()
    if total == 0:
        return int(round(cols / 2)), int(round(rows / 2))
    x = int(round(float((gt.sum(axis=0) * np.arange(1, cols + 1)).sum()) / total))
    y = int(round(float((gt.sum(axis=1) * np.arange(1, rows + 1)).sum()) / total))
    return x, y


def _ssim(pred, gt):
    gt = gt.astype(np.float64)
    n = pred.size
    mx, my = pred.mean(), gt.mean()
    sx = ((pred - mx) ** 2).sum() / (n - 1 + EPS)
    sy = ((gt - my) ** 2).sum() / (n - 1 + EPS)
    sxy = ((pred - mx) * (gt - my)).sum() / (n - 1 + EPS)
    alpha = 4.0 * mx * my * sxy
    beta = (mx * mx + my * my) * (sx + sy)
    if alpha != 0:
        return alpha / (beta + EPS)
    return 1.0 if beta == 0 else 0.0


def _s_region(pred, gt):
    x, y = _centroid(gt)
    h, w = gt.shape
    area = float(h * w)
    quadrants = (
        (slice(0, y), slice(0, x)),
        (slice(0, y), slice(x, w)),
        (slice(y, h), slice(0, x)),
        (slice(y, h), slice(x, w)),
    )
    score = 0.0
    for rows, cols in quadrants:
        part = gt[rows, cols]
        if part.size == 0:
            continue
        score += part.size / area * _ssim(pred[rows, cols], part)
    return score


def s_measure(pred, gt):
    pred, gt = _pair(pred, gt)
    fg = gt.mean()
    if fg == 0:
        value = 1.0 - pred.mean()
    elif fg == 1:
        value = pred.mean()
    else:
        value = ALPHA * _s_object(pred, gt) + (1.0 - ALPHA) * _s_region(pred, gt)
    return float(np.clip(value, 0.0, 1.0))


def _enhanced_alignment(binary, gt):
    fm = binary.astype(np.float64)
    g = gt.astype(np.float64)
    if g.sum() == 0:
        enhanced = 1.0 - fm
    elif g.mean() == 1:
        enhanced = fm
    else:
        align_fm = fm - fm.mean()
        align_gt = g - g.mean()
        align = 2.0 * align_gt * align_fm / (align_gt * align_gt + align_fm * align_fm + EPS)
        enhanced = (align + 1.0) ** 2 / 4.0
    return float(enhanced.mean())


def e_measure(pred, gt):
    """Mean enhanced-alignment score over the threshold sweep."""
    pred, gt = _pair(pred, gt)
    return math.fsum(_enhanced_alignment(pred >= th, gt) for th in THRESHOLDS) / NUM_THRESHOLDS


def _gauss_kernel(size=7, sigma=5.0):
    half = (size - 1) / 2.0
    y, x = np.ogrid[-half:half + 1, -half:half + 1]
    kernel = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    kernel[kernel < np.finfo(kernel.dtype).eps * kernel.max()] = 0
    return kernel / kernel.sum()


def weighted_f_measure(pred, gt, beta2=BETA2):
    pred, gt = _pair(pred, gt)
    if not gt.any():
        return 1.0 if not pred.any() else 0.0
    if not pred.any():
        return 0.0
    g = gt.astype(np.float64)
    dist, (iy, ix) = ndimage.distance_transform_edt(~gt, return_indices=True)
    err = np.abs(pred - g)
    # background errors take the value at the nearest foreground pixel
    et = err.copy()
    et[~gt] = err[iy[~gt], ix[~gt]]
    ea = ndimage.correlate(et, _gauss_kernel(), mode="constant")
    min_e = err.copy()
    smoother = gt & (ea < err)
    min_e[smoother] = ea[smoother]
    importance = np.ones_like(g)
    importance[~gt] = 2.0 - np.exp(np.log(0.5) / 5.0 * dist[~gt])
    ew = min_e * importance
    tpw = g.sum() - ew[gt].sum()
    fpw = ew[~gt].sum()
    recall = 1.0 - ew[gt].mean()
    precision = tpw / (EPS + tpw + fpw)
    value = (1.0 + beta2) * recall * precision / (EPS + beta2 * precision + recall)
    return float(np.clip(value, 0.0, 1.0))


def frame_metrics(pred, gt) -> MetricReport:
    pred, gt = _pair(pred, gt)
    binary = pred >= 0.5
    return MetricReport(
        dice=float(dice_score(binary, gt)),
        iou=float(iou_score(binary, gt)),
        mae=float(np.abs(pred - gt).mean()),
        s_measure=s_measure(pred, gt),
        e_measure_mean=e_measure(pred, gt),
        weighted_f=weighted_f_measure(pred, gt),
    )


def evaluate_dataset(items, jobs=1) -> DatasetReport:
    """Aggregate ``(clip_id, pred, gt)`` triples frame -> clip -> dataset."""
    grouped = {}
    for clip_id, pred, gt in items:
        grouped.setdefault(str(clip_id), []).append((pred, gt))
    if not grouped:
        raise EmptyInputError("no frames to evaluate")

    order = sorted(grouped)
    pairs = [(cid, pred, gt) for cid in order for pred, gt in grouped[cid]]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(lambda item: frame_metrics(item[1], item[2]), pairs))
    else:
        reports = [frame_metrics(pred, gt) for _, pred, gt in pairs]

    per_clip = {cid: [] for cid in order}
    for (cid, _, _), rep in zip(pairs, reports):
        per_clip[cid].append(rep)
    clips = {cid: MetricReport.mean(per_clip[cid]) for cid in order}
    overall = MetricReport.mean(clips[cid] for cid in order)
    logger.info("evaluated %d frames across %d clips", len(pairs), len(clips))
    return DatasetReport(overall=overall, clips=clips, frames=len(pairs))


def format_table(rows, title="Clip"):
    """Aligned text table; ``rows`` maps a row label to a MetricReport."""
    rows = dict(rows)
    width = max([len(title)] + [len(str(k)) for k in rows])
    header = [title.ljust(width)] + [label.rjust(9) for label in COLUMNS.values()]
    lines = ["  ".join(header), "-" * len("  ".join(header))]
    for label, rep in rows.items():
        cells = [str(label).ljust(width)] + [f"{getattr(rep, key):9.4f}" for key in COLUMNS]
        lines.append("  ".join(cells))
    return "\n".join(lines)
