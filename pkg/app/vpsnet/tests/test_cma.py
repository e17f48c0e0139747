import pytest
import torch

from vpsnet.cma import (
    CausalMultiScaleAggregation,
    TokenSet,
    align_feature,
    attention,
    build_causal_kv,
    build_token_set,
    cma_forward,
    visible_frames,
)
from vpsnet.encoder import encode_clip, fan_in_init_, init_encoder
from vpsnet.exceptions import InvalidConfigError, MissingStageError, ShapeError, TimeOrderError
from vpsnet.roles import clip_roles


def _module(channels=8, heads=4, seed=0, **kwargs):
    cma = CausalMultiScaleAggregation(channels, num_heads=heads, **kwargs)
    return fan_in_init_(cma, torch.Generator().manual_seed(seed))


def _pyramid(frames, channels=8, seed=0):
    with torch.no_grad():
        return encode_clip(frames, init_encoder(seed, channels))


def test_visible_frames_rules():
    roles = clip_roles(6, 2)
    assert visible_frames(roles, 0) == [0]
    assert visible_frames(roles, 1) == [1]
    assert visible_frames(roles, 3) == [0, 1, 2, 3]
    assert visible_frames(roles, 5) == [0, 1, 2, 3, 4, 5]
    assert visible_frames(roles, 0, causal=False) == [1, 2, 3, 4, 5]
    assert visible_frames(roles, 5, causal=False) == [0, 1, 2, 3, 4]


def test_kv_lengths_follow_membership():
    cma = _module()
    roles = clip_roles(6, 2)
    sets = [TokenSet(torch.randn(1, 32, 2, 3), t, r) for t, r in enumerate(roles)]
    k, v = build_causal_kv(sets, 3, cma)
    assert k.shape == v.shape == (1, 4 * 6, 8)
    assert build_causal_kv(sets, 0, cma)[0].shape[1] == 6
    assert build_causal_kv(sets, 5, cma)[0].shape[1] == 36


def test_kv_rejects_unsorted_frames():
    cma = _module()
    roles = clip_roles(3, 1)
    sets = [TokenSet(torch.randn(1, 32, 2, 2), t, r) for t, r in zip((0, 2, 1), roles)]
    with pytest.raises(TimeOrderError):
        build_causal_kv(sets, 2, cma)


def test_attention_single_key_returns_value():
    q = torch.randn(5, 8)
    k = torch.randn(1, 8)
    v = torch.randn(1, 8)
    out, weights = attention(q, k, v, num_heads=2)
    torch.testing.assert_close(out, v.expand(5, 8))
    torch.testing.assert_close(weights.sum(-1), torch.ones(2, 5))


def test_attention_identical_values_with_orthogonal_query():
    q = torch.tensor([[0.0, 0.0, 0.0, 1.0]])
    k = torch.tensor([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    v = torch.tensor([[0.3, -1.0, 2.0, 0.5]]).expand(3, 4)
    out, weights = attention(q, k, v)
    torch.testing.assert_close(out, v[:1])
    torch.testing.assert_close(weights, torch.full((1, 1, 3), 1 / 3))


def test_attention_matches_dense_formula():
    torch.manual_seed(0)
    q, k, v = torch.randn(4, 8, dtype=torch.float64), torch.randn(4, 8, dtype=torch.float64), torch.randn(4, 8, dtype=torch.float64)
    out, _ = attention(q, k, v, num_heads=1)
    expected = torch.softmax(q @ k.T / 8 ** 0.5, dim=-1) @ v
    torch.testing.assert_close(out, expected, atol=1e-6, rtol=0)


def test_attention_shape_errors():
    with pytest.raises(ShapeError):
        attention(torch.randn(2, 8), torch.randn(3, 8), torch.randn(2, 8))
    with pytest.raises(ShapeError):
        attention(torch.randn(2, 6), torch.randn(2, 6), torch.randn(2, 6), num_heads=4)


def test_align_feature_shapes_and_constant_input():
    cma = _module()
    stage0 = torch.randn(2, 16, 16, 16)
    assert align_feature(stage0, 0, 3, cma).shape == (2, 8, 2, 2)
    constant = torch.full((1, 16, 16, 16), 0.7)
    out = align_feature(constant, 0, 3, cma, size=(4, 4))
    per_channel = out.flatten(2)
    torch.testing.assert_close(per_channel, per_channel[..., :1].expand_as(per_channel))


def test_align_feature_identity_case():
    cma = CausalMultiScaleAggregation(4, num_heads=1)
    block = cma.align["3"]
    with torch.no_grad():
        for conv in (block.conv3, block.conv1):
            conv.weight.zero_()
            conv.bias.zero_()
        for c in range(4):
            block.conv3.weight[c, c, 1, 1] = 1.0
            block.conv1.weight[c, c, 0, 0] = 1.0
        feature = torch.randn(1, 64, 2, 2)
        torch.testing.assert_close(align_feature(feature, 3, 3, cma), feature[:, :4])


def test_token_set_channels_and_missing_stage():
    pyramid = _pyramid(torch.rand(2, 3, 64, 64))
    cma = _module()
    tokens = build_token_set([p[0] for p in pyramid], 3, cma)
    assert tokens.grid.shape == (32, 2, 2)
    assert tokens.tokens.shape == (4, 32)
    with pytest.raises(MissingStageError):
        cma.build_tokens(pyramid[:3])
    single = _module(source_stages=(3,))
    grid = single.build_tokens(pyramid)
    torch.testing.assert_close(grid, single.align_feature(pyramid[3], 3, (2, 2)))


def test_full_scale_token_width():
    assert CausalMultiScaleAggregation(32).token_dim == 128


def test_invalid_configuration():
    with pytest.raises(InvalidConfigError):
        CausalMultiScaleAggregation(8, num_heads=3)
    with pytest.raises(InvalidConfigError):
        CausalMultiScaleAggregation(8, target_stage=3, source_stages=(0, 1))


def test_residual_identity_when_branches_are_zeroed():
    cma = _module()
    with torch.no_grad():
        cma.out.weight.zero_()
        cma.out.bias.zero_()
        cma.ffn[2].weight.zero_()
        cma.ffn[2].bias.zero_()
        pyramid = _pyramid(torch.rand(1, 6, 3, 64, 64))
        tokens = cma.build_tokens(pyramid)
        out = cma(tokens, clip_roles(6, 2))
    torch.testing.assert_close(out, cma.target_feature(tokens))


def test_causality_is_exact():
    cma = _module(seed=1)
    encoder = init_encoder(1, 8)
    roles = clip_roles(6, 2)
    frames = torch.rand(1, 6, 3, 64, 64)
    perturbed = frames.clone()
    perturbed[:, 4] = torch.rand(1, 3, 64, 64)
    with torch.no_grad():
        base = cma_forward(encode_clip(frames, encoder), roles, cma)
        out = cma_forward(encode_clip(perturbed, encoder), roles, cma)
    for t in range(4):
        assert torch.equal(base[:, t], out[:, t])
    assert not torch.equal(base[:, 5], out[:, 5])


def test_swapping_adjacent_frames_changes_later_adjacent_output():
    cma = _module(seed=2)
    roles = clip_roles(6, 2)
    tokens = torch.randn(1, 6, 32, 2, 2)
    swapped = tokens.clone()
    swapped[:, [2, 3]] = tokens[:, [3, 2]]
    with torch.no_grad():
        a = cma(tokens, roles)
        b = cma(swapped, roles)
    assert not torch.allclose(a[:, 3], b[:, 3])


def test_trace_reports_membership_and_row_sums():
    cma = _module()
    trace = []
    with torch.no_grad():
        cma(torch.randn(1, 6, 32, 2, 2), clip_roles(6, 2), trace=trace)
    assert [entry["members"] for entry in trace][3] == [0, 1, 2, 3]
    for entry in trace:
        assert abs(entry["row_sum_min"] - 1.0) < 1e-6
        assert abs(entry["row_sum_max"] - 1.0) < 1e-6


def test_frames_argument_selects_outputs():
    cma = _module()
    tokens = torch.randn(2, 6, 32, 2, 2)
    roles = clip_roles(6, 2)
    with torch.no_grad():
        full = cma(tokens, roles)
        last = cma(tokens, roles, frames=[5])
    torch.testing.assert_close(last[:, 0], full[:, 5])
