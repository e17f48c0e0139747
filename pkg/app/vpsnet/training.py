"""Clip-level training loop.

Each sample is a T-frame clip whose first R frames act as references; the loss
supervises the last frame. AdamW with a constant learning rate.
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from django.conf import settings
from torch.utils.data import DataLoader, Dataset
from tqdm import tqdm

from . import metrics
from .exceptions import EmptyInputError, NonFiniteError
from .losses import total_loss
from .network import build_network, param_counts, save_checkpoint
from .roles import clip_roles
from .runconfig import JsonlWriter, write_json
from .synth_data import SynthConfig, gen_clip, iter_clip_dirs, load_clip_dir, preset_configs

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.vpst"
LOG_NAME = "train_log.jsonl"


def _fit(frames, masks, size):
    """Resize ``[T, 3, h, w]`` frames (bilinear) and ``[T, h, w]`` masks (nearest) to ``size``."""
    frames = torch.as_tensor(frames, dtype=torch.float32)
    masks = torch.as_tensor(masks, dtype=torch.float32)
    if tuple(frames.shape[-2:]) != (size, size):
        frames = F.interpolate(frames, size=(size, size), mode="bilinear", align_corners=False)
        masks = F.interpolate(masks[:, None], size=(size, size), mode="nearest")[:, 0]
    return frames, masks


class SyntheticClipDataset(Dataset):
    def __init__(self, configs, num_references):
        self.configs = list(configs)
        self.num_references = num_references

    def __len__(self):
        return len(self.configs)

    def __getitem__(self, index):
        clip = gen_clip(self.configs[index], self.num_references)
        return torch.from_numpy(clip.frames), torch.from_numpy(clip.masks[-1:].astype(np.float32))


class ClipFolderDataset(Dataset):
    """Every T-frame window of every exported clip with masks under ``root``."""

    def __init__(self, root, clip_length, image_size):
        self.windows = []
        for clip_dir in iter_clip_dirs(root):
            frames, masks, _ = load_clip_dir(clip_dir)
            if masks is None:
                logger.warning("skipping %s: no masks", clip_dir)
                continue
            frames, masks = _fit(frames, masks, image_size)
            for start in range(frames.shape[0] - clip_length + 1):
                end = start + clip_length
                self.windows.append((frames[start:end], masks[end - 1:end]))
        if not self.windows:
            raise EmptyInputError(f"no {clip_length}-frame windows with masks under {root}")

    def __len__(self):
        return len(self.windows)

    def __getitem__(self, index):
        return self.windows[index]


def synthetic_configs(config, preset=None, **synth_overrides):
    if preset:
        return preset_configs(
            preset, config.train_clips, config.image_size, config.image_size, config.clip_length, config.seed
        )
    return [
        SynthConfig(
            height=config.image_size,
            width=config.image_size,
            num_frames=config.clip_length,
            seed=config.seed + i,
            **synth_overrides,
        )
        for i in range(config.train_clips)
    ]


@dataclass
class TrainResult:
    checkpoint: Path
    log: Path
    steps: int
    final_loss: float
    final_dice: float


def _batch_dice(logits, masks):
    probs = torch.sigmoid(logits.detach()).cpu().numpy()[:, 0] >= 0.5
    gts = masks.cpu().numpy()[:, 0] > 0.5
    return float(np.mean([metrics.dice_score(p, g) for p, g in zip(probs, gts)]))


def _batches(loader, epochs, max_steps):
    step, epoch = 0, 0
    while (max_steps is None and epoch < epochs) or (max_steps is not None and step < max_steps):
        for batch in loader:
            yield epoch, batch
            step += 1
            if max_steps is not None and step >= max_steps:
                return
        epoch += 1


def train(config, out_dir, data_dir=None, preset=None, max_steps=None, progress=True, dataset=None, **synth_overrides):
    """Train a network and write ``checkpoint.vpst`` and ``train_log.jsonl`` under ``out_dir``.

    ``max_steps`` replaces the epoch count with a fixed number of optimizer steps.
    With zero epochs the initialized network is saved unchanged.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(config.seed)
    device = torch.device(settings.VPS_DEVICE)

    if dataset is None:
        if data_dir:
            dataset = ClipFolderDataset(data_dir, config.clip_length, config.image_size)
        else:
            dataset = SyntheticClipDataset(
                synthetic_configs(config, preset, **synth_overrides), config.effective_references
            )
    loader = DataLoader(
        dataset,
        batch_size=config.batch_size,
        shuffle=True,
        generator=torch.Generator().manual_seed(config.seed),
        num_workers=settings.VPS_NUM_WORKERS,
    )

    net = build_network(config).to(device)
    net.train()
    optimizer = torch.optim.AdamW(net.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    roles = clip_roles(config.clip_length, config.effective_references)
    counts = param_counts(net)
    logger.info("training %s variant: %s parameters", config.variant, counts)

    log_path = out_dir / LOG_NAME
    steps, loss_value, dice_value = 0, float("nan"), float("nan")
    total = max_steps if max_steps is not None else config.epochs * len(loader)
    with JsonlWriter(log_path) as log:
        log.write({"event": "start", "config": config.to_dict(), "param_counts": counts, "samples": len(dataset)})
        for epoch, (frames, masks) in tqdm(_batches(loader, config.epochs, max_steps), total=total, disable=not progress):
            frames, masks = frames.to(device), masks.to(device)
            preds, _ = net(frames, roles)
            report = total_loss(preds, masks)
            if not torch.isfinite(report.total):
                write_json(
                    out_dir / "nonfinite_dump.json",
                    {"config": config.to_dict(), "epoch": epoch, "step": steps, "loss": report.as_dict()},
                )
                raise NonFiniteError(f"non-finite loss at epoch {epoch}, step {steps}")
            optimizer.zero_grad()
            report.total.backward()
            optimizer.step()

            steps += 1
            loss_value = report.total.item()
            dice_value = _batch_dice(preds.pred3, masks)
            log.write({"event": "step", "epoch": epoch, "step": steps, "loss": report.as_dict(), "train_dice": dice_value})

        checkpoint = save_checkpoint(net.cpu(), out_dir / CHECKPOINT_NAME, {"steps": steps})
        log.write({"event": "end", "steps": steps, "final_loss": loss_value, "final_dice": dice_value})
    logger.info("saved %s after %d steps (loss %.4f, dice %.4f)", checkpoint, steps, loss_value, dice_value)
    return TrainResult(checkpoint=checkpoint, log=log_path, steps=steps, final_loss=loss_value, final_dice=dice_value)
