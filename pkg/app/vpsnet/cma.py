"""Causal multi-scale aggregation.

Every source stage u is resized to the target stage grid (bilinear,
``align_corners=False``, no antialiasing), passed through a 3x3 conv with
replicate padding and a 1x1 conv to C channels, and the aligned grids are
concatenated in ascending stage order into a per-frame token set of S*C
channels. Attention tokens are spatial positions; frames are joined along the
token axis.

Queries: reference frames project their token set (S*C -> d); adjacent and
current frames project their aligned target-stage feature (C -> d). Keys and
values always project token sets. Visibility:

* reference frame r: its own tokens only;
* adjacent frame t: every reference frame plus adjacent frames up to t;
* current frame: every frame of the clip.

With ``causal=False`` the role structure is replaced by standard
cross-attention: every frame attends to the token sets of all other frames of
the clip, future ones included, and never to its own.

Multi-head attention splits after projection, scales scores by
``1/sqrt(d/heads)``, concatenates heads and projects d -> C. The result is added
to the aligned feature and refined by ``h + FFN(LN(h))``, for every role.
"""
import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .encoder import NUM_STAGES, stage_channels
from .exceptions import InvalidConfigError, MissingStageError, ShapeError, TimeOrderError
from .roles import ADJACENT, CURRENT, REFERENCE, validate_roles

ALL_STAGES = tuple(range(NUM_STAGES))


@dataclass
class TokenSet:
    grid: torch.Tensor  # [..., S*C, Hs, Ws]
    frame_index: int
    role: str

    @property
    def tokens(self):
        """[..., Hs*Ws, S*C]"""
        return self.grid.flatten(-2).transpose(-1, -2)


class AlignBlock(nn.Module):
    def __init__(self, in_channels, channels):
        super().__init__()
        self.conv3 = nn.Conv2d(in_channels, channels, 3, padding=1, padding_mode="replicate")
        self.conv1 = nn.Conv2d(channels, channels, 1)

    def forward(self, x, size):
        if tuple(x.shape[-2:]) != tuple(size):
            x = F.interpolate(x, size=tuple(size), mode="bilinear", align_corners=False)
        return self.conv1(self.conv3(x))


class CausalMultiScaleAggregation(nn.Module):
    def __init__(
        self,
        base_channels=32,
        target_stage=3,
        num_heads=4,
        model_dim=None,
        source_stages=ALL_STAGES,
        causal=True,
        ffn_ratio=4,
    ):
        super().__init__()
        source_stages = tuple(sorted(set(source_stages)))
        if not source_stages or any(u not in ALL_STAGES for u in source_stages):
            raise InvalidConfigError(f"source stages must be drawn from {ALL_STAGES}, got {source_stages}")
        if target_stage not in source_stages:
            raise InvalidConfigError(f"target stage {target_stage} is not among source stages {source_stages}")
        model_dim = model_dim or base_channels
        if model_dim % num_heads:
            raise InvalidConfigError(f"model dim {model_dim} is not divisible by {num_heads} heads")

        self.channels = base_channels
        self.target_stage = target_stage
        self.source_stages = source_stages
        self.num_heads = num_heads
        self.model_dim = model_dim
        self.causal = causal

        in_channels = stage_channels(base_channels)
        self.align = nn.ModuleDict({str(u): AlignBlock(in_channels[u], base_channels) for u in source_stages})
        token_dim = len(source_stages) * base_channels
        self.q_tokens = nn.Linear(token_dim, model_dim)
        self.q_feature = nn.Linear(base_channels, model_dim)
        self.key = nn.Linear(token_dim, model_dim)
        self.value = nn.Linear(token_dim, model_dim)
        self.out = nn.Linear(model_dim, base_channels)
        self.norm = nn.LayerNorm(base_channels)
        self.ffn = nn.Sequential(
            nn.Linear(base_channels, ffn_ratio * base_channels),
            nn.GELU(),
            nn.Linear(ffn_ratio * base_channels, base_channels),
        )

    @property
    def token_dim(self):
        return len(self.source_stages) * self.channels

    @property
    def _target_offset(self):
        return self.source_stages.index(self.target_stage) * self.channels

    def align_feature(self, feature, stage, size):
        lead = feature.shape[:-3]
        flat = feature.reshape(-1, *feature.shape[-3:])
        out = self.align[str(stage)](flat, size)
        return out.reshape(*lead, *out.shape[1:])

    def build_tokens(self, pyramid, target_stage=None):
        """Stage tensors ``[..., C_u, H_u, W_u]`` -> token grids ``[..., S*C, Hs, Ws]``."""
        target_stage = self.target_stage if target_stage is None else target_stage
        for u in set(self.source_stages) | {target_stage}:
            if u >= len(pyramid) or pyramid[u] is None:
                raise MissingStageError(f"pyramid has no stage {u}")
        size = pyramid[target_stage].shape[-2:]
        aligned = [self.align_feature(pyramid[u], u, size) for u in self.source_stages]
        return torch.cat(aligned, dim=-3)

    def target_feature(self, tokens):
        """Aligned target-stage block ``[..., C, Hs, Ws]`` of a token grid."""
        off = self._target_offset
        return tokens[..., off:off + self.channels, :, :]

    def forward(self, tokens, roles, frames=None, trace=None):
        """``tokens`` [B, T, S*C, Hs, Ws] -> aggregated features [B, len(frames), C, Hs, Ws].

        ``frames`` picks which frame outputs to compute (default: all). When
        ``trace`` is a list, one membership/row-sum record per frame is appended.
        """
        roles = validate_roles(roles)
        if tokens.dim() != 5 or tokens.shape[1] != len(roles) or tokens.shape[2] != self.token_dim:
            raise ShapeError(
                f"expected tokens [B, {len(roles)}, {self.token_dim}, Hs, Ws], got {tuple(tokens.shape)}"
            )
        token_sets = [TokenSet(tokens[:, t], t, role) for t, role in enumerate(roles)]
        frames = range(len(roles)) if frames is None else frames
        return torch.stack([self._frame_output(token_sets, t, trace) for t in frames], dim=1)

    def _frame_output(self, token_sets, t, trace):
        ts = token_sets[t]
        z = ts.tokens
        base = z[..., self._target_offset:self._target_offset + self.channels]
        q = self.q_tokens(z) if ts.role == REFERENCE else self.q_feature(base)
        k, v = build_causal_kv(token_sets, t, self)
        agg, weights = attention(q, k, v, self.num_heads)
        h = base + self.out(agg)
        h = h + self.ffn(self.norm(h))
        if trace is not None:
            row_sums = weights.sum(dim=-1)
            trace.append(
                {
                    "frame": t,
                    "role": ts.role,
                    "members": visible_frames([s.role for s in token_sets], t, self.causal),
                    "row_sum_min": float(row_sums.min()),
                    "row_sum_max": float(row_sums.max()),
                }
            )
        hs, ws = ts.grid.shape[-2:]
        return h.transpose(-1, -2).reshape(*h.shape[:-2], self.channels, hs, ws)


def visible_frames(roles, t, causal=True):
    """Clip positions whose tokens frame ``t`` may attend to."""
    roles = validate_roles(roles)
    if not 0 <= t < len(roles):
        raise ShapeError(f"frame index {t} outside clip of {len(roles)} frames")
    if not causal:
        others = [j for j in range(len(roles)) if j != t]
        return others or [t]
    role = roles[t]
    if role == REFERENCE:
        return [t]
    if role == ADJACENT:
        return [j for j in range(t + 1) if roles[j] in (REFERENCE, ADJACENT)]
    assert role == CURRENT
    return list(range(len(roles)))


def align_feature(feature, stage, target_stage, params, size=None):
    """Resize -> 3x3 conv -> 1x1 conv of one stage grid onto the target stage grid.

    ``size`` defaults to the target stage grid of a frame the size implied by
    ``feature``'s own stage stride.
    """
    if feature.dim() < 3:
        raise ShapeError(f"expected a [..., C, H, W] grid, got {tuple(feature.shape)}")
    if size is None:
        scale = 2 ** (target_stage - stage)
        size = (round(feature.shape[-2] / scale), round(feature.shape[-1] / scale))
        if min(size) < 1:
            raise ShapeError(f"stage {stage} grid {tuple(feature.shape[-2:])} is too small for stage {target_stage}")
    return params.align_feature(feature, stage, size)


def build_token_set(pyramid, target_stage, params, frame_index=0, role=CURRENT):
    """One frame's pyramid (list of ``[C_u, H_u, W_u]``) -> TokenSet."""
    return TokenSet(params.build_tokens(pyramid, target_stage), frame_index, role)


def build_causal_kv(token_sets, t, params):
    """Keys and values for frame ``t``: projected concatenation of visible token sets."""
    indices = [ts.frame_index for ts in token_sets]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise TimeOrderError(f"token sets are not time-sorted: {indices}")
    roles = [ts.role for ts in token_sets]
    members = visible_frames(roles, t, params.causal)
    seq = torch.cat([token_sets[j].tokens for j in members], dim=-2)
    return params.key(seq), params.value(seq)


def attention(q, k, v, num_heads=1):
    """Softmax(QK^T / sqrt(d_head)) V over heads. Returns ``(out [..., Nq, d], weights)``."""
    if q.shape[-1] != k.shape[-1] or k.shape[-1] != v.shape[-1]:
        raise ShapeError(f"q/k/v feature dims differ: {q.shape[-1]}, {k.shape[-1]}, {v.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"k has {k.shape[-2]} tokens but v has {v.shape[-2]}")
    d = q.shape[-1]
    if d % num_heads:
        raise ShapeError(f"feature dim {d} is not divisible by {num_heads} heads")
    head_dim = d // num_heads

    def split(x):
        return x.reshape(*x.shape[:-1], num_heads, head_dim).transpose(-3, -2)

    scores = split(q) @ split(k).transpose(-1, -2) / math.sqrt(head_dim)
    weights = torch.softmax(scores, dim=-1)
    out = (weights @ split(v)).transpose(-3, -2)
    return out.reshape(*out.shape[:-2], d), weights


def cma_forward(pyramids, roles, params, trace=None):
    """Per-frame pyramids (stage tensors ``[B, T, C_u, H_u, W_u]``) -> ``[B, T, C, Hs, Ws]``."""
    return params(params.build_tokens(pyramids), roles, trace=trace)
