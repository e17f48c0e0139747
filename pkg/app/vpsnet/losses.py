"""Dice + weighted IoU + weighted BCE, summed over the three prediction heads.

Pixel weights ``w = 1 + 5 * |avgpool31(g) - g|`` (stride 1, zero padding counted
in the mean) emphasize pixels near mask boundaries. Every term is computed per
sample, averaged over the batch and the three heads are summed.
"""
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .exceptions import ShapeError

EPS = 1e-6
POOL_SIZE = 31
BOUNDARY_GAIN = 5.0
TERMS = ("dice", "wiou", "wbce")
HEADS = ("pred1", "pred2", "pred3")


def _as_batch(x):
    if x.dim() == 2:
        return x[None, None]
    if x.dim() == 3:
        return x[:, None]
    return x


def _check(m, g):
    m, g = _as_batch(m), _as_batch(g).to(m.dtype)
    if m.shape != g.shape:
        raise ShapeError(f"prediction {tuple(m.shape)} and mask {tuple(g.shape)} differ")
    return m, g


def boundary_weights(g):
    g = _as_batch(g)
    pooled = F.avg_pool2d(g, POOL_SIZE, stride=1, padding=POOL_SIZE // 2, count_include_pad=True)
    return 1.0 + BOUNDARY_GAIN * torch.abs(pooled - g)


def dice_loss(m, g):
    m, g = _check(m, g)
    inter = (m * g).sum(dim=(1, 2, 3))
    total = m.sum(dim=(1, 2, 3)) + g.sum(dim=(1, 2, 3))
    return (1.0 - (2.0 * inter + EPS) / (total + EPS)).mean()


def weighted_iou_loss(m, g):
    m, g = _check(m, g)
    w = boundary_weights(g)
    inter = (w * m * g).sum(dim=(1, 2, 3))
    union = (w * (m + g)).sum(dim=(1, 2, 3))
    return (1.0 - (inter + EPS) / (union - inter + EPS)).mean()


def weighted_bce_loss(logits, g):
    logits, g = _check(logits, g)
    w = boundary_weights(g)
    bce = F.binary_cross_entropy_with_logits(logits, g, reduction="none")
    return ((w * bce).sum(dim=(1, 2, 3)) / w.sum(dim=(1, 2, 3))).mean()


def segmentation_loss(logits, g):
    m = torch.sigmoid(logits)
    return {"dice": dice_loss(m, g), "wiou": weighted_iou_loss(m, g), "wbce": weighted_bce_loss(logits, g)}


@dataclass
class LossReport:
    terms: dict  # head -> term -> scalar tensor
    total: torch.Tensor

    def as_dict(self):
        out = {f"{head}.{name}": value.item() for head, parts in self.terms.items() for name, value in parts.items()}
        out["total"] = self.total.item()
        return out


def total_loss(preds, g):
    """Sum of the nine head/term losses for a PredictionTriple against ``g`` [B, 1, H, W]."""
    terms = {head: segmentation_loss(logits, g) for head, logits in zip(HEADS, preds.as_tuple())}
    total = sum(value for parts in terms.values() for value in parts.values())
    return LossReport(terms=terms, total=total)
