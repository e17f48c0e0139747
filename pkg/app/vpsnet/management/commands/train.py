from pathlib import Path

from django.conf import settings

from ...training import train
from ..base import VpsCommand, add_config_arguments, config_from_options


class Command(VpsCommand):
    help = "Train a segmentation network on synthetic clips or exported clip folders."

    def add_arguments(self, parser):
        add_config_arguments(parser)
        parser.add_argument("--out", help="run directory (default: <VPS_RUNS_DIR>/train)")
        parser.add_argument("--data", help="exported clip folder(s) to train on instead of fresh synthetic clips")
        parser.add_argument("--preset", help="synthetic split such as easy-seen or hard-seen")
        parser.add_argument("--steps", type=int, help="fixed number of optimizer steps instead of epochs")
        parser.add_argument("--no-progress", action="store_true")

    def run(self, **options):
        config = config_from_options(options)
        out = Path(options["out"] or settings.VPS_RUNS_DIR / "train")
        result = train(
            config,
            out,
            data_dir=options["data"],
            preset=options["preset"],
            max_steps=options["steps"],
            progress=not options["no_progress"],
        )
        self.stdout.write(
            self.style.SUCCESS(
                f"{result.steps} steps, loss {result.final_loss:.4f}, dice {result.final_dice:.4f} -> {result.checkpoint}"
            )
        )
