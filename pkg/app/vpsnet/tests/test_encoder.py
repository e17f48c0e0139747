import pytest
import torch

from vpsnet.encoder import encode_clip, encoder_param_count, init_encoder, stage_shapes
from vpsnet.exceptions import ShapeError


@pytest.mark.parametrize("size,channels", [(64, 8), (128, 8), (352, 8), (64, 32), (352, 32)])
def test_shape_law(size, channels):
    encoder = init_encoder(0, channels)
    with torch.no_grad():
        pyramid = encode_clip(torch.rand(2, 3, size, size), encoder)
    assert [tuple(p.shape) for p in pyramid] == [(2, *s) for s in stage_shapes(size, size, channels)]
    assert tuple(pyramid[0].shape[1:]) == (2 * channels, size // 4, size // 4)
    assert tuple(pyramid[3].shape[1:]) == (16 * channels, size // 32, size // 32)


def test_full_scale_shapes():
    assert stage_shapes(352, 352, 32)[0] == (64, 88, 88)
    assert stage_shapes(352, 352, 32)[3] == (512, 11, 11)
    assert stage_shapes(32, 32, 4)[3] == (64, 1, 1)


def test_rejects_indivisible_frames():
    encoder = init_encoder(0, 4)
    with pytest.raises(ShapeError):
        encode_clip(torch.rand(1, 3, 48, 64), encoder)


def test_init_is_seeded():
    a, b, c = init_encoder(1, 4), init_encoder(1, 4), init_encoder(2, 4)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    assert any(not torch.equal(pa, pc) for pa, pc in zip(a.parameters(), c.parameters()))


def test_param_count_closed_form():
    encoder = init_encoder(0, 32)
    assert sum(p.numel() for p in encoder.parameters()) == encoder_param_count(32) == 7_831_296


def test_frames_are_encoded_independently():
    encoder = init_encoder(3, 4).eval()
    frames = torch.rand(1, 3, 3, 64, 64)
    frames[:, 1] = frames[:, 0]
    with torch.no_grad():
        clip = encode_clip(frames, encoder)
        single = encode_clip(frames[0, 2], encoder)
    for stage, alone in zip(clip, single):
        torch.testing.assert_close(stage[:, 0], stage[:, 1])
        torch.testing.assert_close(stage[0, 2], alone)
