"""Property and oracle suites behind the ``check`` command.

Every suite takes a ``numpy.random.Generator`` and returns ``(passed, details)``.
``run_checks`` times each suite and turns exceptions into failures.
"""
import copy
import logging
import math
import time
from collections import OrderedDict
from itertools import chain

import numpy as np
import torch

from . import losses, metrics
from .cma import cma_forward
from .decoder import PredictionTriple
from .dmr import compute_prototypes, confidence_score, determinacy, dmr_step, init_state, semantic_score
from .encoder import encode_clip, init_encoder
from .network import build_network
from .oracles import dmr_oracle, finite_diff_grad, masked_dense_attention, visibility_mask
from .roles import clip_roles
from .runconfig import RunConfig
from .synth_data import SynthConfig, gen_clip

logger = logging.getLogger(__name__)


def _torch_gen(rng):
    return torch.Generator().manual_seed(int(rng.integers(0, 2**31 - 1)))


def _blob_mask(rng, size):
    clip = gen_clip(SynthConfig(height=size, width=size, num_frames=2, seed=int(rng.integers(0, 10**6))))
    return clip.masks[0].astype(np.float64)


def check_causality(rng):
    config = RunConfig(image_size=64, channels=8, heads=4, clip_length=6, num_references=2)
    net = build_network(config, seed=int(rng.integers(0, 10**6))).eval()
    roles = clip_roles(6, 2)
    blocks = visibility_mask(roles, 1)
    frames = torch.rand(1, 6, 3, 64, 64, generator=_torch_gen(rng))
    with torch.no_grad():
        base = cma_forward(encode_clip(frames, net.encoder), roles, net.cma)
        violations = []
        for j in range(6):
            perturbed = frames.clone()
            perturbed[:, j] += 0.1 * torch.randn(perturbed[:, j].shape, generator=_torch_gen(rng))
            out = cma_forward(encode_clip(perturbed, net.encoder), roles, net.cma)
            for t in range(6):
                if not blocks[t, j] and not torch.equal(out[:, t], base[:, t]):
                    violations.append({"perturbed": j, "frame": t})
    return not violations, {"violations": violations}


def check_masked_dense(rng, clips=10):
    config = RunConfig(image_size=64, channels=4, heads=2, clip_length=6, num_references=2)
    worst = 0.0
    for i in range(clips):
        causal = i < clips - 1  # the last clip checks the open (non-causal) layout
        cma = copy.deepcopy(build_network(config, seed=int(rng.integers(0, 10**6))).cma).double()
        cma.causal = causal
        roles = clip_roles(6, 2)
        tokens = torch.randn(1, 6, cma.token_dim, 8, 8, generator=_torch_gen(rng), dtype=torch.float64)
        with torch.no_grad():
            fast = cma(tokens, roles)[0].numpy()
        dense = masked_dense_attention(tokens[0], visibility_mask(roles, 64, causal=causal), cma, roles)
        worst = max(worst, float(np.abs(fast - dense).max()))
    return worst < 1e-6, {"max_abs_deviation": worst, "clips": clips}


def check_gradients(rng, coords_per_tensor=3, eps=1e-5, tolerance=1e-4):
    # target stage 1 of a 64x64 frame is an 8x8 token grid
    config = RunConfig(image_size=64, channels=4, heads=2, clip_length=4, num_references=2, target_stage=1)
    net = build_network(config, seed=int(rng.integers(0, 10**6))).double()
    clip = gen_clip(SynthConfig(height=64, width=64, num_frames=4, blob_fraction=0.15, seed=int(rng.integers(0, 10**6))))
    frames = torch.from_numpy(clip.frames).double()[None]
    mask = torch.from_numpy(clip.masks[-1:].astype(np.float64))[None]
    roles = clip_roles(4, 2)
    with torch.no_grad():
        pyramid = encode_clip(frames, net.encoder)
    current = [p[:, -1] for p in pyramid]

    def loss_value():
        tokens = net.cma.build_tokens(pyramid)
        preds, _ = net.segment(tokens, roles, current, (64, 64))
        return losses.total_loss(preds, mask).total

    net.zero_grad()
    loss_value().backward()

    worst, per_tensor = 0.0, {}
    params = chain(net.cma.named_parameters(prefix="cma"), net.decoder.named_parameters(prefix="decoder"))
    for name, param in params:
        flat = param.data.view(-1)
        idx = torch.from_numpy(rng.choice(flat.numel(), size=min(coords_per_tensor, flat.numel()), replace=False))
        original = flat[idx].clone()

        def f(values):
            with torch.no_grad():
                flat[idx] = torch.from_numpy(values)
                return float(loss_value())

        numeric = finite_diff_grad(f, original.numpy(), eps=eps)
        flat[idx] = original
        # parameters outside the graph (reference-frame queries) have no gradient
        analytic = np.zeros(len(idx)) if param.grad is None else param.grad.view(-1)[idx].numpy()
        err = float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-6))
        per_tensor[name] = err
        worst = max(worst, err)
    return worst < tolerance, {"max_relative_error": worst, "tensors": len(per_tensor)}


def _random_stream(rng, length, channels=8, size=4):
    stream = []
    for _ in range(length):
        feat = rng.standard_normal((channels, size, size))
        sharpness = rng.uniform(0.5, 8.0)
        prob = 1.0 / (1.0 + np.exp(-sharpness * rng.standard_normal((size, size))))
        stream.append((feat, prob))
    return stream


def dmr_replay(stream, cooldowns=(5, 1)):
    """Incremental slot frames per stream position, for comparison with the oracle."""
    tensors = [(torch.from_numpy(f), torch.from_numpy(p)) for f, p in stream]
    state = init_state(*tensors[0], t=0, cooldowns=cooldowns)
    history = [(state.sem_slot.frame_index, state.conf_slot.frame_index)]
    for t, (feat, prob) in enumerate(tensors[1:], start=1):
        state = dmr_step(state, feat, prob, t)
        history.append((state.sem_slot.frame_index, state.conf_slot.frame_index))
    return history


def check_dmr_oracle(rng, streams=20, length=50):
    mismatches = []
    updates = 0
    for i in range(streams):
        stream = _random_stream(rng, length)
        fast = dmr_replay(stream)
        slow = dmr_oracle(stream)
        updates += len(set(fast))
        if fast != slow:
            first = next(t for t, (a, b) in enumerate(zip(fast, slow)) if a != b)
            mismatches.append({"stream": i, "first_divergence": first})
    return not mismatches, {"mismatches": mismatches, "distinct_slot_states": updates}


def _h2(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def check_confidence_spots(rng):
    binary = torch.from_numpy((rng.random((16, 16)) > 0.5).astype(np.float64))
    values = {
        "binary": determinacy(binary),
        "uniform_half": determinacy(torch.full((16, 16), 0.5, dtype=torch.float64)),
        "constant_0.9": determinacy(torch.full((2, 2), 0.9, dtype=torch.float64)),
    }
    passed = (
        abs(values["binary"] - 1.0) < 1e-12
        and abs(values["uniform_half"]) < 1e-12
        and abs(values["constant_0.9"] - (1.0 - _h2(0.9))) < 1e-9
    )
    return passed, values


def check_score_bounds(rng, draws=10_000):
    violations = 0
    for _ in range(draws):
        feat = torch.from_numpy(rng.standard_normal((8, 3, 3)) * rng.uniform(0.0, 3.0))
        if rng.random() < 0.05:
            feat = torch.zeros_like(feat)
        prob_a = torch.from_numpy(rng.random((3, 3)))
        prob_b = torch.from_numpy(rng.random((3, 3)) ** rng.uniform(0.1, 10.0))
        cand = compute_prototypes(feat, prob_a)
        cur = compute_prototypes(torch.from_numpy(rng.standard_normal((8, 3, 3))), prob_b)
        s_sep, s_cons, score_sem = semantic_score(cand, cur)
        c, score_conf = confidence_score(prob_a, cand, cur)
        ok = (
            0.0 <= s_sep <= 2.0
            and -1.0 <= s_cons <= 1.0
            and 0.0 <= c <= 1.0
            and -1.0 <= score_sem <= 3.0
            and -1.0 <= score_conf <= 2.0
        )
        violations += not ok
    return violations == 0, {"draws": draws, "violations": violations}


def check_loss_sanity(rng):
    g = torch.from_numpy(_blob_mask(rng, 64))[None, None]
    same = float(losses.dice_loss(g, g))
    miss = float(losses.dice_loss(1.0 - g, g))

    logits = [torch.randn(1, 1, 64, 64, generator=_torch_gen(rng), dtype=torch.float64) for _ in range(3)]

    report = losses.total_loss(PredictionTriple(*logits), g)
    manual = 0.0
    for lg in logits:
        m = torch.sigmoid(lg)
        manual += float(losses.dice_loss(m, g)) + float(losses.weighted_iou_loss(m, g))
        manual += float(losses.weighted_bce_loss(lg, g))
    additivity = abs(float(report.total) - manual)
    passed = same <= 1e-6 and miss >= 1.0 - 1e-6 and additivity < 1e-12
    return passed, {"dice_same": same, "dice_complement": miss, "additivity_gap": additivity}


def check_metric_sanity(rng):
    g = _blob_mask(rng, 64)
    perfect = metrics.frame_metrics(g, g)
    optimum = {"dice": 1.0, "iou": 1.0, "s_measure": 1.0, "e_measure_mean": 1.0, "weighted_f": 1.0, "mae": 0.0}
    gaps = {k: abs(getattr(perfect, k) - v) for k, v in optimum.items()}
    worst_sym = 0.0
    for _ in range(100):
        pred = rng.random((16, 16))
        gt = (rng.random((16, 16)) > 0.5).astype(np.float64)
        a = np.abs(pred - gt).mean()
        b = np.abs((1.0 - pred) - (1.0 - gt)).mean()
        worst_sym = max(worst_sym, abs(a - b))
    return max(gaps.values()) < 1e-6 and worst_sym < 1e-12, {"optimum_gaps": gaps, "mae_symmetry_gap": worst_sym}


def check_shape_law(rng):
    failures = []
    for channels in (8, 32):
        encoder = init_encoder(int(rng.integers(0, 10**6)), channels).eval()
        for size in (64, 128, 352):
            with torch.no_grad():
                pyramid = encode_clip(torch.rand(1, 3, size, size, generator=_torch_gen(rng)), encoder)
            for i, feat in enumerate(pyramid):
                expected = (1, channels * 2 ** (i + 1), size // 2 ** (i + 2), size // 2 ** (i + 2))
                if tuple(feat.shape) != expected:
                    failures.append({"size": size, "channels": channels, "stage": i, "shape": list(feat.shape)})
    return not failures, {"failures": failures}


SUITES = OrderedDict(
    [
        ("causality", check_causality),
        ("masked_dense", check_masked_dense),
        ("gradient", check_gradients),
        ("dmr_oracle", check_dmr_oracle),
        ("confidence_spots", check_confidence_spots),
        ("score_bounds", check_score_bounds),
        ("loss_sanity", check_loss_sanity),
        ("metric_sanity", check_metric_sanity),
        ("shape_law", check_shape_law),
    ]
)


def run_checks(names=None, seed=0):
    """Run the selected suites (default: all). Returns a JSON-ready report."""
    names = list(names or SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suites: {', '.join(unknown)}")
    results = []
    for name in names:
        rng = np.random.default_rng([seed, list(SUITES).index(name)])
        start = time.perf_counter()
        try:
            passed, details = SUITES[name](rng)
        except Exception as exc:  # a crashing suite is a failing suite
            logger.exception("suite %s raised", name)
            passed, details = False, {"error": f"{type(exc).__name__}: {exc}"}
        seconds = time.perf_counter() - start
        logger.info("%s: %s (%.2fs)", name, "pass" if passed else "FAIL", seconds)
        results.append({"suite": name, "passed": bool(passed), "seconds": round(seconds, 3), "details": details})
    return {"passed": all(r["passed"] for r in results), "seed": seed, "suites": results}
