from ...synth_data import SynthConfig, export_split, preset_configs
from ..base import VpsCommand


class Command(VpsCommand):
    help = "Export synthetic clips (frames/, masks/, meta.json) for training, inference and evaluation."

    def add_arguments(self, parser):
        parser.add_argument("--out", required=True)
        parser.add_argument("--clips", type=int, default=1)
        parser.add_argument("--preset", help="easy-seen, easy-unseen, hard-seen or hard-unseen")
        parser.add_argument("--size", type=int, default=64)
        parser.add_argument("--frames", type=int, default=6)
        parser.add_argument("--contrast", type=float, default=0.6)
        parser.add_argument("--motion", type=float, default=2.0)
        parser.add_argument("--jitter", type=float, default=0.1)
        parser.add_argument("--noise", type=float, default=0.05)
        parser.add_argument("--blob-fraction", type=float, default=0.08, dest="blob_fraction")
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--num-references", type=int, default=2, dest="num_references")

    def run(self, **options):
        if options["preset"]:
            configs = preset_configs(
                options["preset"], options["clips"], options["size"], options["size"], options["frames"], options["seed"]
            )
        else:
            configs = [
                SynthConfig(
                    height=options["size"],
                    width=options["size"],
                    num_frames=options["frames"],
                    contrast=options["contrast"],
                    motion_amplitude=options["motion"],
                    scale_jitter=options["jitter"],
                    noise_sigma=options["noise"],
                    blob_fraction=options["blob_fraction"],
                    seed=options["seed"] + i,
                )
                for i in range(options["clips"])
            ]
        dirs = export_split(configs, options["out"], options["num_references"])
        self.stdout.write(self.style.SUCCESS(f"{len(dirs)} clips written to {options['out']}"))
