import io
import logging
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .exceptions import StreamFormatError

logger = logging.getLogger(__name__)

OVERLAY_COLOR = (255, 40, 40)


def to_uint8(values):
    """Map [0, 1] floats to 8-bit, rounding half up."""
    arr = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(arr * 255.0 + 0.5).astype(np.uint8)


def frame_to_rgb(frame):
    """[3, H, W] float frame -> [H, W, 3] uint8."""
    return to_uint8(np.transpose(np.asarray(frame), (1, 2, 0)))


def png_bytes(array) -> bytes:
    img = Image.fromarray(np.ascontiguousarray(array))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def save_png(array, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(png_bytes(array))
    return path


def load_png(path, mode=None):
    try:
        with Image.open(path) as img:
            if mode:
                img = img.convert(mode)
            return np.asarray(img).copy()
    except (OSError, ValueError) as exc:
        raise StreamFormatError(f"cannot read image {path}: {exc}") from exc


def load_probability_png(path):
    return load_png(path, mode="L").astype(np.float64) / 255.0


def load_mask_png(path):
    return (load_png(path, mode="L") >= 128).astype(np.uint8)


def list_pngs(directory):
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".png")


def contour_overlay(rgb, prob, color=OVERLAY_COLOR, threshold=0.5):
    """Draw the boundary of ``prob >= threshold`` on top of an RGB frame."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    binary = np.asarray(prob) >= threshold
    if rgb.shape[:2] != binary.shape:
        raise StreamFormatError(f"frame {rgb.shape[:2]} and prediction {binary.shape} differ in size")
    edge = binary & ~ndimage.binary_erosion(binary, border_value=0)
    out = rgb.copy()
    out[edge] = color
    return out


def export_overlays(pred_dir, frames_dir, out_dir):
    """Write one contour-overlay PNG per predicted frame; returns the count written."""
    pred_files = list_pngs(pred_dir)
    frames_dir = Path(frames_dir)
    out_dir = Path(out_dir)
    written = 0
    for pred_path in pred_files:
        frame_path = frames_dir / pred_path.name
        if not frame_path.exists():
            raise StreamFormatError(f"no frame for prediction {pred_path.name} in {frames_dir}")
        rgb = load_png(frame_path, mode="RGB")
        prob = load_probability_png(pred_path)
        save_png(contour_overlay(rgb, prob), out_dir / pred_path.name)
        written += 1
    logger.info("wrote %d overlays to %s", written, out_dir)
    return written
