"""Synthetic polyp-like video clips with exact masks.

One soft-edged ellipse per clip, moved by a bounded random walk and rescaled by a
multiplicative area jitter every frame. Frames are grey intensities replicated to
three channels.

The per-frame area bound ``[1 - jitter, 1 + jitter]`` applies to the continuous
ellipse area (``VideoClip.blob_areas``). Rasterized mask pixel counts only follow
it up to boundary quantization.

RNG contract: ``numpy.random.Generator(PCG64(seed))``. Draw order, before frame 0:
area factor, aspect ratio, orientation, centre y, centre x (all uniform). Then for
each frame t: if t > 0 a motion angle, a motion radius and an area factor
(uniform); then ``height * width`` standard normals for pixel noise. Nothing in
the draw order depends on the requested length, so every stream is a prefix of
any longer stream with the same config.
"""
import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import imaging
from .exceptions import InvalidConfigError, StreamFormatError
from .roles import clip_roles

logger = logging.getLogger(__name__)

IN_CHANNELS = 3
EDGE_WIDTH = 0.3  # soft-edge band, in units of the normalized ellipse radius
MAX_SEMI_AXIS = 0.3  # of min(height, width)
MIN_SEMI_MINOR = 2.0  # pixels

PRESETS = {
    "easy": {"contrast": 0.6, "motion_amplitude": 1.5, "scale_jitter": 0.05, "noise_sigma": 0.04},
    "hard": {"contrast": 0.2, "motion_amplitude": 6.0, "scale_jitter": 0.25, "noise_sigma": 0.06},
}
UNSEEN_SEED_OFFSET = 1_000_000


@dataclass(frozen=True)
class SynthConfig:
    height: int = 64
    width: int = 64
    num_frames: int = 6
    contrast: float = 0.6
    motion_amplitude: float = 2.0
    scale_jitter: float = 0.1
    noise_sigma: float = 0.05
    seed: int = 0
    blob_fraction: float = 0.08

    def __post_init__(self):
        for name in ("height", "width"):
            value = getattr(self, name)
            if value < 32 or value % 32:
                raise InvalidConfigError(f"{name}={value} must be >= 32 and divisible by 32")
        if self.num_frames < 2:
            raise InvalidConfigError(f"num_frames={self.num_frames} must be >= 2")
        if not 0.0 <= self.contrast <= 1.0:
            raise InvalidConfigError(f"contrast={self.contrast} must lie in [0, 1]")
        if not 0.0 <= self.scale_jitter < 1.0:
            raise InvalidConfigError(f"scale_jitter={self.scale_jitter} must lie in [0, 1)")
        if self.motion_amplitude < 0 or self.noise_sigma < 0:
            raise InvalidConfigError("motion_amplitude and noise_sigma must be non-negative")
        if not 0.0 < self.blob_fraction <= 0.25:
            raise InvalidConfigError(f"blob_fraction={self.blob_fraction} must lie in (0, 0.25]")
        if self.seed < 0:
            raise InvalidConfigError("seed must be an unsigned integer")


@dataclass
class VideoClip:
    frames: np.ndarray  # [T, 3, H, W] float32 in [0, 1]
    masks: np.ndarray  # [T, H, W] uint8 in {0, 1}
    roles: tuple
    timestamps: tuple
    blob_areas: tuple = ()  # continuous ellipse area per frame

    @property
    def num_frames(self):
        return int(self.frames.shape[0])


@dataclass
class _Blob:
    cy: float
    cx: float
    area: float
    aspect: float
    theta: float


def _area_bounds(config, aspect):
    a_max = MAX_SEMI_AXIS * min(config.height, config.width)
    upper = math.pi * a_max * a_max * aspect
    lower = math.pi * (MIN_SEMI_MINOR / aspect) ** 2 * aspect
    return lower, upper


def _centre_bounds(config):
    margin = MAX_SEMI_AXIS * min(config.height, config.width) + 1.0
    return (margin, config.height - 1 - margin), (margin, config.width - 1 - margin)


def _initial_blob(config, rng):
    factor = rng.uniform(0.8, 1.2)
    aspect = rng.uniform(0.6, 1.0)
    theta = rng.uniform(0.0, math.pi)
    (y_lo, y_hi), (x_lo, x_hi) = _centre_bounds(config)
    cy = rng.uniform(y_lo, y_hi)
    cx = rng.uniform(x_lo, x_hi)
    lower, upper = _area_bounds(config, aspect)
    area = float(np.clip(config.blob_fraction * config.height * config.width * factor, lower, upper))
    return _Blob(cy=cy, cx=cx, area=area, aspect=aspect, theta=theta)


def _step_blob(blob, config, rng):
    angle = rng.uniform(0.0, 2.0 * math.pi)
    radius = rng.uniform(0.0, config.motion_amplitude)
    factor = rng.uniform(1.0 - config.scale_jitter, 1.0 + config.scale_jitter)
    (y_lo, y_hi), (x_lo, x_hi) = _centre_bounds(config)
    lower, upper = _area_bounds(config, blob.aspect)
    return replace(
        blob,
        cy=float(np.clip(blob.cy + radius * math.sin(angle), y_lo, y_hi)),
        cx=float(np.clip(blob.cx + radius * math.cos(angle), x_lo, x_hi)),
        area=float(np.clip(blob.area * factor, lower, upper)),
    )


def _radius_map(blob, height, width):
    a = math.sqrt(blob.area / (math.pi * blob.aspect))
    b = blob.aspect * a
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    dy = yy - blob.cy
    dx = xx - blob.cx
    u = dx * math.cos(blob.theta) + dy * math.sin(blob.theta)
    v = -dx * math.sin(blob.theta) + dy * math.cos(blob.theta)
    return np.sqrt((u / a) ** 2 + (v / b) ** 2)


def _render(blob, config, rng):
    r = _radius_map(blob, config.height, config.width)
    mask = r <= 1.0
    weight = np.where(mask, 0.5 + 0.5 * np.clip((1.0 - r) / EDGE_WIDTH, 0.0, 1.0), 0.0)
    background = 0.5 - config.contrast / 2.0
    clean = background + config.contrast * weight
    noise = rng.standard_normal((config.height, config.width))
    grey = np.clip(clean + config.noise_sigma * noise, 0.0, 1.0).astype(np.float32)
    frame = np.repeat(grey[None], IN_CHANNELS, axis=0)
    return frame, mask.astype(np.uint8)


def _iter_frames(config, length):
    rng = np.random.Generator(np.random.PCG64(config.seed))
    blob = _initial_blob(config, rng)
    for t in range(length):
        if t > 0:
            blob = _step_blob(blob, config, rng)
        frame, mask = _render(blob, config, rng)
        yield frame, mask, blob.area


def gen_stream(config: SynthConfig, length: int):
    """Lazily yield ``(frame [3, H, W], mask [H, W])`` pairs."""
    if length < 1:
        raise InvalidConfigError(f"stream length {length} must be >= 1")
    for frame, mask, _ in _iter_frames(config, length):
        yield frame, mask


def gen_clip(config: SynthConfig, num_references: int = 2) -> VideoClip:
    frames, masks, areas = [], [], []
    for frame, mask, area in _iter_frames(config, config.num_frames):
        frames.append(frame)
        masks.append(mask)
        areas.append(area)
    return VideoClip(
        frames=np.stack(frames),
        masks=np.stack(masks),
        roles=clip_roles(config.num_frames, num_references),
        timestamps=tuple(range(config.num_frames)),
        blob_areas=tuple(areas),
    )


def preset_configs(split: str, clips: int, height=64, width=64, num_frames=6, base_seed=0):
    """Configs for a split named ``<easy|hard>-<seen|unseen>``.

    Seen splits reuse the training seed range ``base_seed + i``; unseen splits
    draw from a disjoint range.
    """
    try:
        regime, novelty = split.split("-")
        overrides = PRESETS[regime]
    except (ValueError, KeyError):
        raise InvalidConfigError(f"unknown split {split!r}; expected e.g. 'hard-unseen'")
    if novelty not in ("seen", "unseen"):
        raise InvalidConfigError(f"unknown split {split!r}; expected '-seen' or '-unseen'")
    offset = UNSEEN_SEED_OFFSET if novelty == "unseen" else 0
    return [
        SynthConfig(height=height, width=width, num_frames=num_frames, seed=base_seed + offset + i, **overrides)
        for i in range(clips)
    ]


def export_clip(clip: VideoClip, config: SynthConfig, directory):
    """Write ``frames/NNNN.png``, ``masks/NNNN.png`` ({0, 255}) and ``meta.json``."""
    directory = Path(directory)
    for t in range(clip.num_frames):
        imaging.save_png(imaging.frame_to_rgb(clip.frames[t]), directory / "frames" / f"{t:04d}.png")
        imaging.save_png(clip.masks[t] * np.uint8(255), directory / "masks" / f"{t:04d}.png")
    meta = {
        "config": asdict(config),
        "roles": list(clip.roles),
        "timestamps": list(clip.timestamps),
        "seed": config.seed,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2))
    logger.debug("exported %d frames to %s", clip.num_frames, directory)
    return directory


def load_clip_dir(directory):
    """Read an exported clip: ``(frames [T, 3, H, W] float32, masks or None, meta)``."""
    directory = Path(directory)
    frame_dir = directory / "frames"
    if not frame_dir.is_dir():
        raise StreamFormatError(f"{directory} has no frames/ directory")
    frame_files = imaging.list_pngs(frame_dir)
    if not frame_files:
        raise StreamFormatError(f"{frame_dir} contains no PNG frames")
    frames = [imaging.load_png(p, mode="RGB") for p in frame_files]
    if len({f.shape for f in frames}) != 1:
        raise StreamFormatError(f"frames in {frame_dir} differ in size")
    frames = np.stack([np.transpose(f, (2, 0, 1)) for f in frames]).astype(np.float32) / 255.0

    masks = None
    mask_dir = directory / "masks"
    if mask_dir.is_dir():
        masks = np.stack([imaging.load_mask_png(mask_dir / p.name) for p in frame_files])

    meta_path = directory / "meta.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return frames, masks, meta


def iter_clip_dirs(root):
    """A single clip directory, or every clip directory directly below ``root``."""
    root = Path(root)
    if (root / "frames").is_dir():
        return [root]
    clip_dirs = sorted(p for p in root.iterdir() if (p / "frames").is_dir()) if root.is_dir() else []
    if not clip_dirs:
        raise StreamFormatError(f"no clip directories (with frames/) under {root}")
    return clip_dirs


def export_split(configs, root, num_references=2):
    """Generate and export one clip per config as ``root/clip_NNNN``."""
    root = Path(root)
    dirs = []
    for i, config in enumerate(configs):
        dirs.append(export_clip(gen_clip(config, num_references), config, root / f"clip_{i:04d}"))
    logger.info("exported %d clips to %s", len(dirs), root)
    return dirs
