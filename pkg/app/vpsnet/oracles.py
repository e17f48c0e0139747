"""Slow float64 reference computations used by the checks and the tests.

Nothing here calls into cma, dmr or losses: the aggregation oracle reads only
the weights of a ``CausalMultiScaleAggregation`` and redoes the math with dense
numpy matrices and an explicit visibility mask.
"""
import math

import numpy as np
from scipy import special

from .exceptions import InconsistentMaskError, NonFiniteError, ShapeError
from .roles import ADJACENT, CURRENT, REFERENCE, validate_roles

_EPS = 1e-8
_LN_EPS = 1e-5


def visibility_mask(roles, tokens_per_frame, causal=True):
    """Boolean ``[T*N, T*N]`` may-attend matrix over the concatenated clip tokens."""
    roles = validate_roles(roles)
    n = len(roles)
    blocks = np.zeros((n, n), dtype=bool)
    for q in range(n):
        for k in range(n):
            if not causal:
                blocks[q, k] = q != k or n == 1
            elif roles[q] == CURRENT:
                blocks[q, k] = True
            elif roles[q] == REFERENCE:
                blocks[q, k] = q == k
            elif roles[q] == ADJACENT:
                blocks[q, k] = roles[k] == REFERENCE or (roles[k] == ADJACENT and k <= q)
    return np.kron(blocks, np.ones((tokens_per_frame, tokens_per_frame), dtype=bool)).astype(bool)


def _frame_blocks(mask, num_frames, tokens_per_frame):
    size = num_frames * tokens_per_frame
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (size, size):
        raise InconsistentMaskError(f"mask shape {mask.shape} does not cover {num_frames} x {tokens_per_frame} tokens")
    blocks = mask.reshape(num_frames, tokens_per_frame, num_frames, tokens_per_frame)
    collapsed = blocks[:, 0, :, 0]
    if not np.array_equal(blocks, np.broadcast_to(collapsed[:, None, :, None], blocks.shape)):
        raise InconsistentMaskError("mask is not constant within frame blocks")
    if not collapsed.any(axis=1).all():
        raise InconsistentMaskError("every frame must be allowed to attend to at least one frame")
    return collapsed


def _np(param):
    return param.detach().cpu().double().numpy()


def _linear(x, layer):
    return x @ _np(layer.weight).T + _np(layer.bias)


def _layer_norm(x, layer):
    mean = x.mean(axis=-1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + _LN_EPS) * _np(layer.weight) + _np(layer.bias)


def _gelu(x):
    return 0.5 * x * (1.0 + special.erf(x / math.sqrt(2.0)))


def masked_dense_attention(tokens, mask, params, roles):
    """Dense masked attention over a whole clip.

    ``tokens`` is ``[T, S*C, Hs, Ws]`` (a single clip). Returns ``[T, C, Hs, Ws]``
    float64.
    """
    roles = validate_roles(roles)
    grid = np.asarray(tokens.detach().cpu().double().numpy() if hasattr(tokens, "detach") else tokens, np.float64)
    if grid.ndim != 4 or grid.shape[0] != len(roles):
        raise ShapeError(f"expected tokens [{len(roles)}, S*C, Hs, Ws], got {grid.shape}")
    num_frames, token_dim, hs, ws = grid.shape
    n = hs * ws
    _frame_blocks(mask, num_frames, n)
    full_mask = np.asarray(mask, dtype=bool)

    c = params.channels
    off = params.source_stages.index(params.target_stage) * c
    heads = params.num_heads
    d = params.model_dim
    hd = d // heads

    seq = grid.reshape(num_frames, token_dim, n).transpose(0, 2, 1).reshape(num_frames * n, token_dim)
    keys = _linear(seq, params.key)
    values = _linear(seq, params.value)

    out = np.zeros((num_frames, c, hs, ws))
    for t in range(num_frames):
        z = seq[t * n:(t + 1) * n]
        base = z[:, off:off + c]
        q = _linear(z, params.q_tokens) if roles[t] == REFERENCE else _linear(base, params.q_feature)
        row_mask = full_mask[t * n:(t + 1) * n]
        heads_out = []
        for h in range(heads):
            cols = slice(h * hd, (h + 1) * hd)
            scores = q[:, cols] @ keys[:, cols].T / math.sqrt(hd)
            scores = np.where(row_mask, scores, -np.inf)
            scores = scores - scores.max(axis=1, keepdims=True)
            weights = np.exp(scores)
            weights = weights / weights.sum(axis=1, keepdims=True)
            heads_out.append(weights @ values[:, cols])
        hidden = base + _linear(np.concatenate(heads_out, axis=1), params.out)
        ffn_in, _, ffn_out = params.ffn
        hidden = hidden + _linear(_gelu(_linear(_layer_norm(hidden, params.norm), ffn_in)), ffn_out)
        out[t] = hidden.T.reshape(c, hs, ws)
    return out


def _proto(feat, prob):
    f = np.asarray(feat, np.float64).reshape(feat.shape[0], -1)
    p = np.asarray(prob, np.float64).reshape(-1)
    fg = np.array([np.sum(f[ch] * p) for ch in range(f.shape[0])]) / (p.sum() + _EPS)
    bg = np.array([np.sum(f[ch] * (1.0 - p)) for ch in range(f.shape[0])]) / ((1.0 - p).sum() + _EPS)
    return fg, bg


def _cos(a, b):
    na, nb = math.sqrt(float(np.sum(a * a))), math.sqrt(float(np.sum(b * b)))
    if na * nb < _EPS:
        return 0.0
    return min(1.0, max(-1.0, float(np.sum(a * b)) / (na * nb)))


def _determinacy(prob):
    p = np.clip(np.asarray(prob, np.float64), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log2(p), 0.0) - np.where(p < 1, (1 - p) * np.log2(1 - p), 0.0)
    return min(1.0, max(0.0, 1.0 - float(h.mean())))


def dmr_oracle(stream, cooldowns=(5, 1)):
    """Replay the whole history at every step.

    ``stream`` is a sequence of ``(feature [C, Hs, Ws], prob [Hs, Ws])``. Returns
    one ``(sem_frame, conf_frame)`` pair per stream position.
    """
    stream = [(np.asarray(f, np.float64), np.asarray(p, np.float64)) for f, p in _as_numpy(stream)]
    fgs, seps, dets = [], [], []
    for feat, prob in stream:
        fg, bg = _proto(feat, prob)
        fgs.append(fg)
        seps.append(1.0 - _cos(fg, bg))
        dets.append(_determinacy(prob))

    history = []
    for end in range(len(stream)):
        slots = [{"frame": 0, "last": 0, "static": seps[0]}, {"frame": 0, "last": 0, "static": dets[0]}]
        statics = (seps, dets)
        for t in range(1, end + 1):
            cand = t - 1
            cons = _cos(fgs[cand], fgs[t])
            for slot, cooldown, static in zip(slots, cooldowns, statics):
                held = slot["static"] + _cos(fgs[slot["frame"]], fgs[t])
                if t - slot["last"] >= cooldown and static[cand] + cons > held:
                    slot.update(frame=cand, last=t, static=static[cand])
        history.append((slots[0]["frame"], slots[1]["frame"]))
    return history


def _as_numpy(stream):
    for feat, prob in stream:
        if hasattr(feat, "detach"):
            feat = feat.detach().cpu().double().numpy()
        if hasattr(prob, "detach"):
            prob = prob.detach().cpu().double().numpy()
        yield feat, prob


def finite_diff_grad(f, x, eps=1e-5, indices=None):
    """Central-difference gradient of scalar ``f`` at ``x`` (float64 array).

    With ``indices`` (flat positions) only those coordinates are estimated.
    """
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    positions = range(flat.size) if indices is None else indices
    grad = np.zeros(flat.size) if indices is None else np.zeros(len(positions))
    for slot, i in enumerate(positions):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f(x))
        flat[i] = orig - eps
        lo = float(f(x))
        flat[i] = orig
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise NonFiniteError(f"function is not finite around coordinate {i}")
        grad[slot] = (hi - lo) / (2.0 * eps)
    return grad.reshape(x.shape) if indices is None else grad
