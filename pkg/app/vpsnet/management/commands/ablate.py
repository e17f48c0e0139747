from pathlib import Path

from django.conf import settings

from ...evaluation import ablation_margins, evaluate_dirs
from ...inference import infer_dirs
from ...metrics import format_table
from ...network import load_checkpoint
from ...runconfig import ablation_variants, write_json
from ...synth_data import export_split, preset_configs
from ...training import train
from ..base import VpsCommand, add_config_arguments, config_from_options


class Command(VpsCommand):
    help = "Train and evaluate the full model and every ablation variant on the same synthetic splits."

    def add_arguments(self, parser):
        add_config_arguments(parser, ablations=False)
        parser.add_argument("--out", help="default: <VPS_RUNS_DIR>/ablate")
        parser.add_argument("--train-preset", default="hard-seen", dest="train_preset")
        parser.add_argument("--test-preset", default="hard-unseen", dest="test_preset")
        parser.add_argument("--test-clips", type=int, default=20, dest="test_clips")
        parser.add_argument("--test-frames", type=int, default=12, dest="test_frames")
        parser.add_argument("--steps", type=int, help="optimizer steps per variant instead of epochs")

    def run(self, **options):
        config = config_from_options(options)
        out = Path(options["out"] or settings.VPS_RUNS_DIR / "ablate")
        test_root = out / "test"
        test_configs = preset_configs(
            options["test_preset"],
            options["test_clips"],
            config.image_size,
            config.image_size,
            options["test_frames"],
            config.seed,
        )
        export_split(test_configs, test_root, config.num_references)

        rows, summary = {}, {}
        for variant in ablation_variants(config):
            run_dir = out / variant.variant
            result = train(variant, run_dir, preset=options["train_preset"], max_steps=options["steps"], progress=False)
            net = load_checkpoint(result.checkpoint, no_dmr=variant.no_dmr, single_source=variant.single_source)
            infer_dirs(net, test_root, run_dir / "pred")
            report = evaluate_dirs(run_dir / "pred", test_root, json_path=run_dir / "eval.json")
            rows[variant.variant] = report.overall
            summary[variant.variant] = {"config": variant.to_dict(), "overall": report.overall.as_dict()}
            self.stdout.write(f"{variant.variant}: dice {report.overall.dice:.4f}")
        margins = ablation_margins({name: row.dice for name, row in rows.items()})
        summary["margins"] = margins
        write_json(out / "ablation.json", summary)
        behind = sorted(name for name, margin in margins.items() if margin < 0)
        if behind:
            self.stdout.write(f"full model trails: {', '.join(behind)}")
        else:
            self.stdout.write("full model leads every single ablation")
        self.stdout.write(format_table(rows, title="Variant"))
