from django.core.management.base import BaseCommand, CommandError

from ..exceptions import VpsError
from ..runconfig import ABLATION_FLAGS, resolve_config


class VpsCommand(BaseCommand):
    """Management command that reports library errors as ``CommandError`` (exit code 1)."""

    requires_system_checks = []

    def handle(self, *args, **options):
        try:
            return self.run(**options)
        except VpsError as exc:
            raise CommandError(f"{type(exc).__name__}: {exc}") from exc

    def run(self, **options):
        raise NotImplementedError


def add_config_arguments(parser, ablations=True):
    parser.add_argument("--config", help="JSON file with run configuration overrides")
    parser.add_argument("--desk", action="store_true", help="desk-scale defaults (64x64 frames, C=8)")
    parser.add_argument("--image-size", type=int, dest="image_size")
    parser.add_argument("--channels", type=int)
    parser.add_argument("--heads", type=int)
    parser.add_argument("--clip-length", type=int, dest="clip_length")
    parser.add_argument("--num-references", type=int, dest="num_references")
    parser.add_argument("--target-stage", type=int, dest="target_stage")
    parser.add_argument("--lr", type=float)
    parser.add_argument("--weight-decay", type=float, dest="weight_decay")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--train-clips", type=int, dest="train_clips")
    if ablations:
        add_ablation_arguments(parser)


def add_ablation_arguments(parser, flags=ABLATION_FLAGS):
    for flag in flags:
        parser.add_argument(f"--{flag.replace('_', '-')}", dest=flag, action="store_true", default=None)


def config_from_options(options):
    keys = (
        "image_size", "channels", "heads", "clip_length", "num_references", "target_stage", "lr",
        "weight_decay", "epochs", "batch_size", "seed", "train_clips", *ABLATION_FLAGS,
    )
    overrides = {k: options.get(k) for k in keys}
    return resolve_config(options.get("config"), desk=options.get("desk", False), **overrides)
