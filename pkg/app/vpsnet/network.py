"""Encoder + aggregation + decoder with the ablation switches, and checkpoints."""
import logging

import torch
import torch.nn as nn

from . import tensor_io
from .cma import ALL_STAGES, CausalMultiScaleAggregation
from .decoder import CascadeDecoder
from .encoder import TinyEncoder, encode_clip, encoder_param_count, fan_in_init_
from .exceptions import CheckpointError
from .runconfig import RunConfig

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "vpsnet-checkpoint/1"


class VpsNet(nn.Module):
    def __init__(self, config: RunConfig):
        super().__init__()
        self.config = config
        self.encoder = TinyEncoder(config.channels)
        stages = (config.target_stage,) if config.no_multiscale else ALL_STAGES
        self.cma = CausalMultiScaleAggregation(
            base_channels=config.channels,
            target_stage=config.target_stage,
            num_heads=config.heads,
            source_stages=stages,
            causal=not config.no_causal,
        )
        self.decoder = CascadeDecoder(config.channels)

    def encode(self, frames):
        """``[B, T, 3, H, W]`` or ``[B, 3, H, W]`` -> (stage tensors, token grids)."""
        pyramid = encode_clip(frames, self.encoder)
        return pyramid, self.cma.build_tokens(pyramid)

    def aggregate(self, tokens, roles, trace=None):
        """Aggregated feature of the current (last) frame, ``[B, C, Hs, Ws]``."""
        if self.config.no_cma:
            return self.cma.target_feature(tokens[:, -1])
        return self.cma(tokens, roles, frames=[len(roles) - 1], trace=trace)[:, 0]

    def segment(self, tokens, roles, current_pyramid, out_size, trace=None):
        agg = self.aggregate(tokens, roles, trace)
        return self.decoder(agg, current_pyramid, out_size), agg

    def forward(self, frames, roles):
        """``frames`` [B, T, 3, H, W] -> (PredictionTriple for the last frame, its aggregate)."""
        pyramid, tokens = self.encode(frames)
        current = [p[:, -1] for p in pyramid]
        return self.segment(tokens, roles, current, frames.shape[-2:])


def build_network(config: RunConfig, seed=None):
    net = VpsNet(config)
    generator = torch.Generator().manual_seed(int(config.seed if seed is None else seed))
    fan_in_init_(net, generator)
    return net


def param_counts(net):
    counts = {name: sum(p.numel() for p in getattr(net, name).parameters()) for name in ("encoder", "cma", "decoder")}
    counts["total"] = sum(counts.values())
    expected = encoder_param_count(net.config.channels)
    if counts["encoder"] != expected:
        logger.warning("encoder has %d parameters, closed form gives %d", counts["encoder"], expected)
    return counts


def save_checkpoint(net, path, extra=None):
    metadata = {
        "format": CHECKPOINT_FORMAT,
        "config": net.config.to_dict(),
        "param_counts": param_counts(net),
        **(extra or {}),
    }
    return tensor_io.save_tensors(path, net.state_dict(), metadata)


def load_checkpoint(path, **overrides):
    """Rebuild the network stored at ``path``; ``overrides`` may not change the architecture."""
    tensors, metadata = tensor_io.load_tensors(path)
    if metadata.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a vpsnet checkpoint")
    stored = RunConfig.from_dict(metadata["config"])
    config = stored.with_overrides(**overrides)
    if config.architecture() != stored.architecture():
        raise CheckpointError(
            f"flags {config.architecture()} are incompatible with checkpoint architecture {stored.architecture()}"
        )
    net = VpsNet(config)
    state = net.state_dict()
    missing = sorted(set(state) - set(tensors))
    unexpected = sorted(set(tensors) - set(state))
    if missing or unexpected:
        raise CheckpointError(f"{path}: missing {missing[:5]} unexpected {unexpected[:5]}")
    for name, value in tensors.items():
        if tuple(value.shape) != tuple(state[name].shape):
            raise CheckpointError(f"{path}: {name} has shape {value.shape}, expected {tuple(state[name].shape)}")
    net.load_state_dict({name: torch.from_numpy(value) for name, value in tensors.items()})
    net.eval()
    return net
