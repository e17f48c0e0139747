"""Score predicted PNG probability maps against exported ground-truth clips."""
import logging
from pathlib import Path

from . import imaging
from .exceptions import StreamFormatError
from .metrics import evaluate_dataset, format_table
from .reports import build_eval_report_pdf
from .runconfig import write_json
from .synth_data import iter_clip_dirs

logger = logging.getLogger(__name__)


def iter_prediction_pairs(pred_root, gt_root):
    """Yield ``(clip_id, prob, mask)`` for every ground-truth frame.

    Predictions live at ``pred_root/<clip>/<frame name>``; masks at
    ``gt_root/<clip>/masks/<frame name>``.
    """
    pred_root = Path(pred_root)
    for clip_dir in iter_clip_dirs(gt_root):
        mask_dir = clip_dir / "masks"
        if not mask_dir.is_dir():
            raise StreamFormatError(f"{clip_dir} has no masks/ directory")
        pred_dir = pred_root / clip_dir.name
        for mask_path in imaging.list_pngs(mask_dir):
            pred_path = pred_dir / mask_path.name
            if not pred_path.exists():
                raise StreamFormatError(f"missing prediction {pred_path}")
            yield clip_dir.name, imaging.load_probability_png(pred_path), imaging.load_mask_png(mask_path)


def evaluate_dirs(pred_root, gt_root, jobs=1, json_path=None, pdf_path=None, title="Evaluation report", sample_images=()):
    report = evaluate_dataset(iter_prediction_pairs(pred_root, gt_root), jobs=jobs)
    if json_path:
        write_json(json_path, report.as_dict())
    if pdf_path:
        pdf_path = Path(pdf_path)
        pdf_path.parent.mkdir(parents=True, exist_ok=True)
        pdf = build_eval_report_pdf(
            report,
            title=title,
            sources={"Predictions": pred_root, "Ground truth": gt_root},
            sample_images=sample_images,
        )
        pdf_path.write_bytes(pdf)
        logger.info("wrote %s", pdf_path)
    return report


def report_table(report):
    rows = dict(report.clips)
    rows["overall"] = report.overall
    return format_table(rows)


def ablation_margins(dice_by_variant, reference="full"):
    """Reference Dice minus each single-ablation variant's Dice.

    Composite variants (names joined with ``+``) are left out. A non-negative
    margin means the reference model is at least as good as that variant.
    """
    if reference not in dice_by_variant:
        raise StreamFormatError(f"no {reference!r} run among {sorted(dice_by_variant)}")
    base = dice_by_variant[reference]
    return {
        name: base - dice
        for name, dice in dice_by_variant.items()
        if name != reference and "+" not in name
    }
