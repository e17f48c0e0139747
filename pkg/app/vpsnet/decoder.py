"""Cascade of prediction heads.

pred1 comes from a 1x1 conv on the aggregated stage-s feature; Decoder1 fuses the
upsampled aggregate with the current frame's stage-2 feature (index 2), Decoder2
fuses Decoder1's features with stage-1 (index 1). Each decoder is
``concat -> conv3x3 -> LN -> GELU -> conv3x3``. All three logit maps are
bilinearly resized to the frame resolution.
"""
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .encoder import LayerNorm2d, stage_channels
from .exceptions import ShapeError


@dataclass
class PredictionTriple:
    pred1: torch.Tensor  # [B, 1, H, W] logits
    pred2: torch.Tensor
    pred3: torch.Tensor
    coarse_logits: Optional[torch.Tensor] = None  # pred1 before resizing, [B, 1, Hs, Ws]

    def as_tuple(self):
        return self.pred1, self.pred2, self.pred3

    def probs(self):
        return tuple(torch.sigmoid(p) for p in self.as_tuple())


class DecoderBlock(nn.Module):
    def __init__(self, in_channels, channels):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, channels, 3, padding=1)
        self.norm = LayerNorm2d(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        return self.conv2(F.gelu(self.norm(self.conv1(x))))


def _resize(x, size):
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    return F.interpolate(x, size=tuple(size), mode="bilinear", align_corners=False)


class CascadeDecoder(nn.Module):
    def __init__(self, base_channels=32):
        super().__init__()
        c = base_channels
        skips = stage_channels(c)
        self.channels = c
        self.coarse = nn.Conv2d(c, 1, 1)
        self.decoder1 = DecoderBlock(c + skips[2], c)
        self.head1 = nn.Conv2d(c, 1, 1)
        self.decoder2 = DecoderBlock(c + skips[1], c)
        self.head2 = nn.Conv2d(c, 1, 1)

    def forward(self, agg, pyramid, out_size):
        """``agg`` [B, C, Hs, Ws]; ``pyramid`` the current frame's stage tensors [B, C_u, H_u, W_u]."""
        if agg.dim() != 4 or agg.shape[1] != self.channels:
            raise ShapeError(f"expected aggregate [B, {self.channels}, Hs, Ws], got {tuple(agg.shape)}")
        if len(pyramid) < 3:
            raise ShapeError(f"decoder needs stages 1 and 2, pyramid has {len(pyramid)} stages")
        stage1, stage2 = pyramid[1], pyramid[2]
        for name, feat in (("stage 1", stage1), ("stage 2", stage2)):
            if feat.shape[0] != agg.shape[0]:
                raise ShapeError(f"{name} batch {feat.shape[0]} differs from aggregate batch {agg.shape[0]}")

        coarse = self.coarse(agg)
        d1 = self.decoder1(torch.cat([_resize(agg, stage2.shape[-2:]), stage2], dim=1))
        d2 = self.decoder2(torch.cat([_resize(d1, stage1.shape[-2:]), stage1], dim=1))
        return PredictionTriple(
            pred1=_resize(coarse, out_size),
            pred2=_resize(self.head1(d1), out_size),
            pred3=_resize(self.head2(d2), out_size),
            coarse_logits=coarse,
        )


def coarse_head(agg, params):
    """``[C, Hs, Ws]`` or ``[B, C, Hs, Ws]`` -> logits ``[Hs, Ws]`` / ``[B, Hs, Ws]``."""
    head = params.coarse if isinstance(params, CascadeDecoder) else params
    if agg.dim() == 3:
        return head(agg.unsqueeze(0))[0, 0]
    return head(agg)[:, 0]


def decode(agg, pyramid, params, out_size):
    return params(agg, pyramid, out_size)
