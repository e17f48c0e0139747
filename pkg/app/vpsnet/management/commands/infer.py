from pathlib import Path

from django.conf import settings

from ...network import load_checkpoint
from ...inference import infer_dirs
from ..base import VpsCommand, add_ablation_arguments


class Command(VpsCommand):
    help = "Segment frame streams with a trained checkpoint, one PNG probability map per frame."

    def add_arguments(self, parser):
        parser.add_argument("--checkpoint", required=True)
        parser.add_argument("--stream", required=True, help="clip directory (with frames/) or a folder of them")
        parser.add_argument("--out", help="prediction root (default: <VPS_RUNS_DIR>/pred)")
        parser.add_argument("--trace-attention", action="store_true", help="write attention_trace.jsonl per clip")
        parser.add_argument("--save-raw", action="store_true", help="also store float32 maps in raw_probs.vpst")
        add_ablation_arguments(parser, flags=("no_dmr", "no_causal", "single_source"))

    def run(self, **options):
        overrides = {k: options[k] for k in ("no_dmr", "no_causal", "single_source")}
        net = load_checkpoint(options["checkpoint"], **overrides)
        out = Path(options["out"] or settings.VPS_RUNS_DIR / "pred")
        summaries = infer_dirs(
            net,
            options["stream"],
            out,
            trace_attention=options["trace_attention"],
            save_raw=options["save_raw"],
        )
        for clip, summary in summaries.items():
            self.stdout.write(f"{clip}: {summary.frames} frames, {summary.mean_latency_ms:.2f} ms/frame, {summary.fps:.1f} FPS")
        self.stdout.write(self.style.SUCCESS(f"predictions written to {out}"))
