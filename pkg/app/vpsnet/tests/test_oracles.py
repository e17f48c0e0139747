import numpy as np
import pytest
import torch

from vpsnet.checks import _random_stream, dmr_replay
from vpsnet.cma import CausalMultiScaleAggregation
from vpsnet.encoder import fan_in_init_
from vpsnet.exceptions import InconsistentMaskError, NonFiniteError
from vpsnet.oracles import dmr_oracle, finite_diff_grad, masked_dense_attention, visibility_mask
from vpsnet.roles import clip_roles


def _cma(seed=0, causal=True):
    cma = CausalMultiScaleAggregation(4, num_heads=2, causal=causal)
    return fan_in_init_(cma, torch.Generator().manual_seed(seed)).double()


def _tokens(cma, frames=6, grid=3, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(1, frames, cma.token_dim, grid, grid, generator=g, dtype=torch.float64)


def test_visibility_mask_block_structure():
    roles = clip_roles(6, 2)
    mask = visibility_mask(roles, 2)
    assert mask.shape == (12, 12) and mask.dtype == bool
    blocks = mask[::2, ::2]
    expected = np.array(
        [
            [1, 0, 0, 0, 0, 0],
            [0, 1, 0, 0, 0, 0],
            [1, 1, 1, 0, 0, 0],
            [1, 1, 1, 1, 0, 0],
            [1, 1, 1, 1, 1, 0],
            [1, 1, 1, 1, 1, 1],
        ],
        dtype=bool,
    )
    np.testing.assert_array_equal(blocks, expected)
    open_blocks = visibility_mask(roles, 2, causal=False)[::2, ::2]
    np.testing.assert_array_equal(open_blocks, ~np.eye(6, dtype=bool))


@pytest.mark.parametrize("causal", [True, False])
def test_dense_oracle_matches_aggregation(causal):
    cma = _cma(causal=causal)
    roles = clip_roles(6, 2)
    tokens = _tokens(cma)
    with torch.no_grad():
        fast = cma(tokens, roles)[0].numpy()
    dense = masked_dense_attention(tokens[0], visibility_mask(roles, 9, causal=causal), cma, roles)
    np.testing.assert_allclose(fast, dense, atol=1e-10, rtol=0)


def test_diagonal_mask_isolates_frames():
    cma = _cma()
    roles = clip_roles(4, 1)
    tokens = _tokens(cma, frames=4)
    mask = np.kron(np.eye(4, dtype=bool), np.ones((9, 9), dtype=bool))
    base = masked_dense_attention(tokens[0], mask, cma, roles)
    perturbed = tokens.clone()
    perturbed[0, 1:3] += 1.0
    moved = masked_dense_attention(perturbed[0], mask, cma, roles)
    np.testing.assert_array_equal(base[0], moved[0])
    np.testing.assert_array_equal(base[3], moved[3])
    assert not np.allclose(base[1], moved[1])


def test_inconsistent_masks_are_rejected():
    cma = _cma()
    roles = clip_roles(4, 1)
    tokens = _tokens(cma, frames=4)[0]
    mask = visibility_mask(roles, 9)
    broken = mask.copy()
    broken[3, 1] = not broken[3, 1]
    with pytest.raises(InconsistentMaskError):
        masked_dense_attention(tokens, broken, cma, roles)
    empty_row = mask.copy()
    empty_row[:9] = False
    with pytest.raises(InconsistentMaskError):
        masked_dense_attention(tokens, empty_row, cma, roles)
    with pytest.raises(InconsistentMaskError):
        masked_dense_attention(tokens, mask[:-1, :-1], cma, roles)


def test_dmr_oracle_constant_stream_keeps_frame_zero():
    rng = np.random.default_rng(0)
    frame = (rng.standard_normal((4, 3, 3)), rng.random((3, 3)))
    assert dmr_oracle([frame] * 10) == [(0, 0)] * 10


def _dominant_stream(length=15, dominant=7):
    weak = (np.ones((2, 4, 4)), np.full((4, 4), 0.5))
    feat = np.ones((2, 4, 4))
    feat[1, 2:] = -1.0
    prob = np.zeros((4, 4))
    prob[:2] = 1.0
    return [(feat, prob) if t == dominant else weak for t in range(length)]


def test_dmr_oracle_adopts_dominant_frame_once_it_completes():
    history = dmr_oracle(_dominant_stream())
    assert history[:8] == [(0, 0)] * 8
    assert history[8:] == [(7, 7)] * 7


def test_incremental_dmr_matches_oracle():
    assert dmr_replay(_dominant_stream()) == dmr_oracle(_dominant_stream())
    rng = np.random.default_rng(4)
    for _ in range(3):
        stream = _random_stream(rng, 25)
        assert dmr_replay(stream) == dmr_oracle(stream)


def test_finite_differences_of_simple_functions():
    assert finite_diff_grad(lambda x: float(x[0] ** 2), np.array([3.0]))[0] == pytest.approx(6.0, abs=1e-8)
    a = np.array([[1.0, -2.0], [0.5, 4.0]])
    np.testing.assert_allclose(finite_diff_grad(lambda x: float((a * x).sum()), np.zeros((2, 2))), a, atol=1e-8)
    picked = finite_diff_grad(lambda x: float((a * x).sum()), np.zeros((2, 2)), indices=[3, 0])
    np.testing.assert_allclose(picked, [4.0, 1.0], atol=1e-8)


def test_finite_differences_reject_non_finite_values():
    with pytest.raises(NonFiniteError):
        finite_diff_grad(lambda x: float(np.log(x[0])), np.array([0.0]))
