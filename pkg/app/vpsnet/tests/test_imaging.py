import numpy as np
import pytest

from vpsnet import imaging
from vpsnet.exceptions import StreamFormatError


def test_to_uint8_rounds_half_up_and_clips():
    out = imaging.to_uint8([-1.0, 0.0, 0.5, 1.0, 2.0])
    np.testing.assert_array_equal(out, [0, 0, 128, 255, 255])


def test_probability_png_round_trip_quantizes(tmp_path):
    prob = np.linspace(0.0, 1.0, 64).reshape(8, 8)
    path = imaging.save_png(imaging.to_uint8(prob), tmp_path / "p.png")
    loaded = imaging.load_probability_png(path)
    assert np.abs(loaded - prob).max() <= 0.5 / 255 + 1e-12


def test_mask_png_thresholds_at_half(tmp_path):
    values = np.array([[0, 127], [128, 255]], dtype=np.uint8)
    path = imaging.save_png(values, tmp_path / "m.png")
    np.testing.assert_array_equal(imaging.load_mask_png(path), [[0, 0], [1, 1]])


def test_list_pngs_is_sorted_and_filtered(tmp_path):
    for name in ("0002.png", "0000.png", "notes.txt", "0001.PNG"):
        (tmp_path / name).write_bytes(b"")
    assert [p.name for p in imaging.list_pngs(tmp_path)] == ["0000.png", "0001.PNG", "0002.png"]


def test_unreadable_image_raises(tmp_path):
    path = tmp_path / "broken.png"
    path.write_bytes(b"not a png")
    with pytest.raises(StreamFormatError):
        imaging.load_png(path)


def test_contour_overlay_marks_only_the_boundary():
    rgb = np.zeros((10, 10, 3), dtype=np.uint8)
    prob = np.zeros((10, 10))
    prob[2:8, 2:8] = 0.9
    out = imaging.contour_overlay(rgb, prob)
    marked = np.all(out == imaging.OVERLAY_COLOR, axis=-1)
    assert marked[2, 2] and marked[7, 5]
    assert not marked[4, 4] and not marked[0, 0]
    assert marked.sum() == 20


def test_contour_overlay_size_mismatch():
    with pytest.raises(StreamFormatError):
        imaging.contour_overlay(np.zeros((4, 4, 3), dtype=np.uint8), np.zeros((5, 4)))


def test_export_overlays(tmp_path):
    frames, preds = tmp_path / "frames", tmp_path / "pred"
    rng = np.random.default_rng(0)
    for i in range(3):
        imaging.save_png(imaging.frame_to_rgb(rng.random((3, 12, 12))), frames / f"{i:04d}.png")
    for i in range(2):
        prob = np.zeros((12, 12))
        prob[3:9, 3:9] = 1.0
        imaging.save_png(imaging.to_uint8(prob), preds / f"{i:04d}.png")
    assert imaging.export_overlays(preds, frames, tmp_path / "out") == 2
    overlay = imaging.load_png(tmp_path / "out" / "0001.png", mode="RGB")
    assert tuple(overlay[3, 3]) == imaging.OVERLAY_COLOR

    imaging.save_png(imaging.to_uint8(prob), preds / "0009.png")
    with pytest.raises(StreamFormatError):
        imaging.export_overlays(preds, frames, tmp_path / "out2")
