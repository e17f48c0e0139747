"""Tiny randomly initialized pyramid encoder.

Four downsampling stages produce ``[2C, H/4]``, ``[4C, H/8]``, ``[8C, H/16]`` and
``[16C, H/32]`` grids. Stage 0 embeds 7x7 patches with stride 4; stages 1-3 use
stride-2 3x3 convolutions. Each stage is ``down -> LN -> GELU`` followed by one
residual block ``x + conv(GELU(LN(conv(x))))``.

Initialization is fan-in scaled: every conv/linear weight ~ N(0, 2 / fan_in),
biases zero, normalization weight one and bias zero. Draws come from one
``torch.Generator`` seeded explicitly and walk parameters in ``named_parameters``
order.
"""
import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .exceptions import ShapeError

NUM_STAGES = 4
STAGE_STRIDES = (4, 8, 16, 32)
_KERNELS = (7, 3, 3, 3)


def stage_channels(base_channels):
    return tuple(base_channels * 2 ** (i + 1) for i in range(NUM_STAGES))


def stage_shapes(height, width, base_channels):
    """Per-frame ``(channels, h, w)`` for each stage."""
    check_divisible(height, width)
    return tuple(
        (c, height // stride, width // stride) for c, stride in zip(stage_channels(base_channels), STAGE_STRIDES)
    )


def check_divisible(height, width):
    if height % 32 or width % 32 or height < 32 or width < 32:
        raise ShapeError(f"frame size {height}x{width} must be positive multiples of 32")


def encoder_param_count(base_channels, in_channels=3):
    """Closed form: sum over stages of ``k^2 * c_in * c + 18 c^2 + 7 c``."""
    total, c_in = 0, in_channels
    for k, c in zip(_KERNELS, stage_channels(base_channels)):
        total += k * k * c_in * c + 18 * c * c + 7 * c
        c_in = c
    return total


class LayerNorm2d(nn.Module):
    """Per-pixel normalization over channels, with per-channel affine."""

    def __init__(self, channels, eps=1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x):
        x = x.permute(0, 2, 3, 1)
        x = F.layer_norm(x, (x.shape[-1],), self.weight, self.bias, self.eps)
        return x.permute(0, 3, 1, 2)


class EncoderStage(nn.Module):
    def __init__(self, in_channels, out_channels, kernel, stride):
        super().__init__()
        self.down = nn.Conv2d(in_channels, out_channels, kernel, stride=stride, padding=kernel // 2)
        self.down_norm = LayerNorm2d(out_channels)
        self.res_conv1 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.res_norm = LayerNorm2d(out_channels)
        self.res_conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)

    def forward(self, x):
        x = F.gelu(self.down_norm(self.down(x)))
        return x + self.res_conv2(F.gelu(self.res_norm(self.res_conv1(x))))


class TinyEncoder(nn.Module):
    def __init__(self, base_channels=32, in_channels=3):
        super().__init__()
        self.base_channels = base_channels
        self.in_channels = in_channels
        c_in = in_channels
        stages = []
        for i, c in enumerate(stage_channels(base_channels)):
            stride = 4 if i == 0 else 2
            stages.append(EncoderStage(c_in, c, _KERNELS[i], stride))
            c_in = c
        self.stages = nn.ModuleList(stages)

    def forward(self, x):
        """``x`` [N, 3, H, W] -> list of four stage tensors, each [N, C_u, H_u, W_u]."""
        check_divisible(x.shape[-2], x.shape[-1])
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats


def fan_in_init_(module, generator):
    """Deterministic fan-in scaled init for every parameter of ``module``."""
    with torch.no_grad():
        for name, param in module.named_parameters():
            leaf = name.rsplit(".", 1)[-1]
            if param.dim() >= 2:
                fan_in = param[0].numel()
                std = math.sqrt(2.0 / fan_in)
                draw = torch.randn(param.shape, generator=generator, dtype=torch.float64) * std
                param.copy_(draw.to(param.dtype))
            elif leaf == "weight":
                param.fill_(1.0)
            else:
                param.zero_()
    return module


def init_encoder(seed, base_channels, in_channels=3):
    if base_channels < 1:
        raise ShapeError(f"base channel count must be >= 1, got {base_channels}")
    generator = torch.Generator().manual_seed(int(seed))
    return fan_in_init_(TinyEncoder(base_channels, in_channels), generator)


def encode_clip(frames, encoder):
    """Encode ``[T, 3, H, W]`` or ``[B, T, 3, H, W]`` frames with shared weights.

    Returns four stage tensors with the leading frame/batch dims preserved. Frames
    are encoded independently; nothing mixes across time here.
    """
    lead = frames.shape[:-3]
    flat = frames.reshape(-1, *frames.shape[-3:])
    return [f.reshape(*lead, *f.shape[1:]) for f in encoder(flat)]
