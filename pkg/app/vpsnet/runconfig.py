"""Run configuration: settings defaults < ``--config`` JSON file < command-line flags."""
import json
import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from django.conf import settings

from .exceptions import InvalidConfigError

logger = logging.getLogger(__name__)

ARCHITECTURE_KEYS = ("channels", "heads", "target_stage", "no_cma", "no_multiscale")
ABLATION_FLAGS = ("no_cma", "no_dmr", "no_multiscale", "no_causal", "single_source")
DESK_SCALE = {"image_size": 64, "channels": 8}

# field name -> settings attribute
_SETTINGS_KEYS = {
    "image_size": "VPS_IMAGE_SIZE",
    "channels": "VPS_CHANNELS",
    "heads": "VPS_HEADS",
    "clip_length": "VPS_CLIP_LENGTH",
    "num_references": "VPS_NUM_REFERENCES",
    "target_stage": "VPS_TARGET_STAGE",
    "cooldown_sem": "VPS_COOLDOWN_SEM",
    "cooldown_conf": "VPS_COOLDOWN_CONF",
    "lr": "VPS_LR",
    "weight_decay": "VPS_WEIGHT_DECAY",
    "epochs": "VPS_EPOCHS",
    "batch_size": "VPS_BATCH_SIZE",
    "seed": "VPS_SEED",
    "train_clips": "VPS_TRAIN_CLIPS",
}


@dataclass(frozen=True)
class RunConfig:
    image_size: int = 352
    channels: int = 32
    heads: int = 4
    clip_length: int = 6
    num_references: int = 2
    target_stage: int = 3
    cooldown_sem: int = 5
    cooldown_conf: int = 1
    lr: float = 1e-4
    weight_decay: float = 1e-4
    epochs: int = 30
    batch_size: int = 4
    seed: int = 0
    train_clips: int = 16
    no_cma: bool = False
    no_dmr: bool = False
    no_multiscale: bool = False
    no_causal: bool = False
    single_source: bool = False

    def __post_init__(self):
        if self.image_size < 32 or self.image_size % 32:
            raise InvalidConfigError(f"image_size={self.image_size} must be a positive multiple of 32")
        for name in ("channels", "heads", "batch_size", "train_clips", "cooldown_sem", "cooldown_conf"):
            if getattr(self, name) < 1:
                raise InvalidConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.channels % self.heads:
            raise InvalidConfigError(f"heads={self.heads} must divide channels={self.channels}")
        if self.num_references not in (1, 2):
            raise InvalidConfigError(f"num_references={self.num_references} must be 1 or 2")
        if self.clip_length <= self.num_references + 1:
            raise InvalidConfigError(
                f"clip_length={self.clip_length} must exceed num_references + 1 = {self.num_references + 1}"
            )
        if self.target_stage not in (0, 1, 2, 3):
            raise InvalidConfigError(f"target_stage={self.target_stage} must be one of 0..3")
        if self.epochs < 0 or self.seed < 0 or self.lr <= 0 or self.weight_decay < 0:
            raise InvalidConfigError("epochs, seed and weight_decay must be non-negative and lr positive")

    @property
    def effective_references(self):
        return 1 if self.single_source else self.num_references

    @property
    def cooldowns(self):
        return self.cooldown_sem, self.cooldown_conf

    @property
    def variant(self):
        flags = [name for name in ABLATION_FLAGS if getattr(self, name)]
        return "+".join(flags) if flags else "full"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise InvalidConfigError(str(exc)) from exc

    def with_overrides(self, **overrides):
        overrides = {k: v for k, v in overrides.items() if v is not None}
        if not overrides:
            return self
        return self.from_dict({**self.to_dict(), **overrides})

    def architecture(self):
        return {k: getattr(self, k) for k in ARCHITECTURE_KEYS}


def settings_defaults():
    return {field: getattr(settings, key) for field, key in _SETTINGS_KEYS.items() if hasattr(settings, key)}


def load_config_file(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidConfigError(f"config file {path} must hold a JSON object")
    return data


def resolve_config(config_file=None, desk=False, **overrides):
    """Merge settings defaults, desk-scale overrides, a JSON file and flag values."""
    data = settings_defaults()
    if desk:
        data.update(DESK_SCALE)
    if config_file:
        data.update(load_config_file(config_file))
    config = RunConfig.from_dict(data).with_overrides(**overrides)
    logger.debug("resolved run config %s", config.to_dict())
    return config


def ablation_variants(config):
    """The full model and every ablation variant studied by the ``ablate`` command."""
    base = replace(config, **{flag: False for flag in ABLATION_FLAGS})
    return [
        base,
        replace(base, no_cma=True),
        replace(base, no_dmr=True),
        replace(base, no_cma=True, no_dmr=True),
        replace(base, no_multiscale=True),
        replace(base, no_causal=True),
        replace(base, single_source=True),
    ]


class JsonlWriter:
    """Append one JSON object per line; usable as a context manager."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", encoding="utf-8")

    def write(self, record):
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return path
