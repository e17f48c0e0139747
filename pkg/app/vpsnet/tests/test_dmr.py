import math

import numpy as np
import pytest
import torch

from vpsnet.dmr import (
    Prototypes,
    ReferenceSlot,
    StreamFrame,
    assemble_clip,
    compute_prototypes,
    confidence_score,
    cosine,
    dmr_step,
    init_state,
    semantic_score,
)
from vpsnet.exceptions import EmptyStreamError, InvalidConfigError, ShapeError, TimeOrderError
from vpsnet.roles import ADJACENT, CURRENT, REFERENCE


def _protos(fg, bg):
    return Prototypes(torch.tensor(fg, dtype=torch.float64), torch.tensor(bg, dtype=torch.float64))


def test_prototypes_full_foreground_is_spatial_mean():
    feat = torch.randn(3, 4, 4, dtype=torch.float64)
    protos = compute_prototypes(feat, torch.ones(4, 4, dtype=torch.float64))
    torch.testing.assert_close(protos.mu_fg, feat.mean(dim=(1, 2)), atol=1e-7, rtol=0)
    torch.testing.assert_close(protos.mu_bg, torch.zeros(3, dtype=torch.float64))


def test_prototypes_one_hot():
    feat = torch.randn(3, 4, 4, dtype=torch.float64)
    prob = torch.zeros(4, 4, dtype=torch.float64)
    prob[2, 1] = 1.0
    torch.testing.assert_close(compute_prototypes(feat, prob).mu_fg, feat[:, 2, 1], atol=1e-7, rtol=0)


def test_prototypes_match_double_loop():
    rng = np.random.default_rng(0)
    feat, prob = rng.standard_normal((3, 4, 4)), rng.random((4, 4))
    protos = compute_prototypes(torch.from_numpy(feat), torch.from_numpy(prob))
    for c in range(3):
        num_fg = num_bg = 0.0
        for i in range(4):
            for j in range(4):
                num_fg += prob[i, j] * feat[c, i, j]
                num_bg += (1 - prob[i, j]) * feat[c, i, j]
        assert abs(float(protos.mu_fg[c]) - num_fg / (prob.sum() + 1e-8)) < 1e-9
        assert abs(float(protos.mu_bg[c]) - num_bg / ((1 - prob).sum() + 1e-8)) < 1e-9


def test_prototypes_are_linear_in_features():
    prob = torch.rand(4, 4, dtype=torch.float64)
    a, b = torch.randn(3, 4, 4, dtype=torch.float64), torch.randn(3, 4, 4, dtype=torch.float64)
    combined = compute_prototypes(2.0 * a - 0.5 * b, prob)
    pa, pb = compute_prototypes(a, prob), compute_prototypes(b, prob)
    torch.testing.assert_close(combined.mu_fg, 2.0 * pa.mu_fg - 0.5 * pb.mu_fg)


def test_prototypes_shape_mismatch():
    with pytest.raises(ShapeError):
        compute_prototypes(torch.randn(3, 4, 4), torch.rand(4, 5))


def test_cosine_guard_and_clamp():
    assert cosine(torch.zeros(3), torch.ones(3)) == 0.0
    assert cosine(torch.ones(3), 2 * torch.ones(3)) == pytest.approx(1.0)
    assert -1.0 <= cosine(torch.tensor([1.0, 1e-9]), torch.tensor([-1.0, 0.0])) <= 1.0


def test_semantic_score_examples():
    same = _protos([1.0, 2.0], [1.0, 2.0])
    assert semantic_score(same, same)[0] == pytest.approx(0.0, abs=1e-12)
    cand = _protos([1.0, 0.0], [0.0, 1.0])
    s_sep, s_cons, score = semantic_score(cand, _protos([1.0, 0.0], [0.3, 0.3]))
    assert (s_sep, s_cons, score) == pytest.approx((1.0, 1.0, 2.0))


def test_semantic_score_matches_explicit_loops():
    rng = np.random.default_rng(1)
    a, b, c = rng.standard_normal((3, 8))

    def cos(x, y):
        dot = sum(x[i] * y[i] for i in range(8))
        return dot / (math.sqrt(sum(v * v for v in x)) * math.sqrt(sum(v * v for v in y)))

    s_sep, s_cons, score = semantic_score(_protos(a, b), _protos(c, b))
    assert abs(s_sep - (1 - cos(a, b))) < 1e-9
    assert abs(s_cons - cos(a, c)) < 1e-9
    assert abs(score - s_sep - s_cons) < 1e-12


def test_confidence_spot_values():
    protos = _protos([1.0, 0.0], [0.0, 1.0])
    binary = torch.tensor([[0.0, 1.0], [1.0, 0.0]], dtype=torch.float64)
    assert confidence_score(binary, protos, protos)[0] == pytest.approx(1.0, abs=1e-12)
    assert confidence_score(torch.full((3, 3), 0.5), protos, protos)[0] == pytest.approx(0.0, abs=1e-12)
    h = -0.9 * math.log2(0.9) - 0.1 * math.log2(0.1)
    c, score = confidence_score(torch.full((2, 2), 0.9, dtype=torch.float64), protos, protos)
    assert abs(c - (1 - h)) < 1e-9
    assert c == pytest.approx(0.531, abs=1e-3)
    assert score == pytest.approx(c + 1.0)


def _frame(seed, channels=4):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(channels, 3, 3, generator=g, dtype=torch.float64), torch.rand(3, 3, generator=g, dtype=torch.float64)


def test_init_state_fills_both_slots_from_first_frame():
    state = init_state(*_frame(0))
    assert state.sem_slot.frame_index == state.conf_slot.frame_index == 0
    assert state.sem_slot.cooldown == 5 and state.conf_slot.cooldown == 1


def test_slot_rejects_zero_cooldown():
    feat, prob = _frame(0)
    with pytest.raises(InvalidConfigError):
        init_state(feat, prob, cooldowns=(0, 1))


def test_time_must_increase():
    state = init_state(*_frame(0))
    state = dmr_step(state, *_frame(1), t=1)
    with pytest.raises(TimeOrderError):
        dmr_step(state, *_frame(2), t=1)


def test_constant_stream_never_updates():
    feat, prob = _frame(3)
    state = init_state(feat, prob)
    for t in range(1, 12):
        state = dmr_step(state, feat, prob, t)
        assert not state.last_audit.sem_updated and not state.last_audit.conf_updated
    assert state.sem_slot.frame_index == state.conf_slot.frame_index == 0


def test_cooldown_blocks_semantic_updates():
    # frame 1 is far more separable than frame 0 and consistent with what follows
    weak_feat = torch.ones(2, 2, 2, dtype=torch.float64)
    strong_feat = torch.zeros(2, 2, 2, dtype=torch.float64)
    strong_feat[0, 0, :] = 1.0
    strong_feat[1, 1, :] = 1.0
    prob = torch.tensor([[1.0, 1.0], [0.0, 0.0]], dtype=torch.float64)
    state = init_state(weak_feat, prob)
    history = []
    for t in range(1, 8):
        state = dmr_step(state, strong_feat, prob, t)
        history.append((t, state.last_audit.sem_updated, state.sem_slot.frame_index))
    assert all(not updated for t, updated, _ in history if t < 5)
    assert (5, True, 4) in history


def test_scale_invariance_of_decisions():
    stream = [_frame(i) for i in range(15)]
    scaled = [(3.7 * f, p) for f, p in stream]

    def replay(frames):
        state = init_state(*frames[0])
        out = []
        for t, (f, p) in enumerate(frames[1:], start=1):
            state = dmr_step(state, f, p, t)
            out.append((state.sem_slot.frame_index, state.conf_slot.frame_index))
        return out

    assert replay(stream) == replay(scaled)


def test_assemble_clip_warm_up_and_order():
    current = StreamFrame(0, "f0")
    clip = assemble_clip(None, [], current, clip_length=6, num_references=2)
    assert clip.indices == (0,) * 6
    assert clip.roles == (REFERENCE, REFERENCE, ADJACENT, ADJACENT, ADJACENT, CURRENT)


def test_assemble_clip_uses_slots_and_pads_recent():
    state = init_state(*_frame(0), tokens="t0")
    recent = [StreamFrame(0, "t0"), StreamFrame(1, "t1")]
    clip = assemble_clip(state, recent, StreamFrame(2, "t2"), clip_length=6, num_references=2)
    assert clip.indices == (0, 0, 0, 0, 1, 2)
    assert [f.tokens for f in clip.frames] == ["t0", "t0", "t0", "t0", "t1", "t2"]


def test_assemble_clip_keeps_frame_zero_without_updates():
    feat, prob = _frame(5)
    state = init_state(feat, prob, tokens="z")
    recent = []
    for t in range(1, 7):
        state = dmr_step(state, feat, prob, t, tokens=f"z{t}")
        recent.append(StreamFrame(t, f"z{t}"))
    clip = assemble_clip(state, recent, StreamFrame(7, "z7"))
    assert clip.indices == (0, 0, 4, 5, 6, 7)


def test_assemble_clip_single_source_and_errors():
    state = init_state(*_frame(0))
    clip = assemble_clip(state, [StreamFrame(0)], StreamFrame(1), clip_length=4, num_references=1)
    assert clip.roles == (REFERENCE, ADJACENT, ADJACENT, CURRENT)
    with pytest.raises(EmptyStreamError):
        assemble_clip(state, [], None)
    with pytest.raises(InvalidConfigError):
        assemble_clip(state, [], StreamFrame(1), clip_length=2, num_references=2)


def test_reference_slot_dataclass_is_frozen():
    slot = init_state(*_frame(0)).sem_slot
    assert isinstance(slot, ReferenceSlot)
    with pytest.raises(AttributeError):
        slot.cooldown = 3
