"""Dynamic multi-source reference maintenance for streaming inference.

Two reference slots are kept per stream. The semantic slot ranks frames by
foreground/background separability, the confidence slot by prediction
determinacy; both add the temporal consistency of a frame's foreground
prototype with the frame currently being segmented.

At step t the candidate is the frame completed at step t-1. Each slot keeps its
static score (separability or determinacy) cached from update time and has its
consistency term recomputed against every new current frame. A slot is replaced
only when its cooldown has elapsed and the candidate's full score is strictly
greater; ties keep the incumbent.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import torch

from .exceptions import EmptyStreamError, InvalidConfigError, ShapeError, TimeOrderError
from .roles import clip_roles

logger = logging.getLogger(__name__)

EPS = 1e-8
DEFAULT_COOLDOWNS = (5, 1)


@dataclass(frozen=True)
class Prototypes:
    mu_fg: torch.Tensor
    mu_bg: torch.Tensor


@dataclass(frozen=True)
class Candidate:
    feature: torch.Tensor
    prototypes: Prototypes
    s_sep: float
    determinacy: float
    frame_index: int
    tokens: Any = None


@dataclass(frozen=True)
class ReferenceSlot:
    feature: torch.Tensor  # [C, Hs, Ws] aggregated feature
    prototypes: Prototypes
    static_score: float
    last_update_t: int
    cooldown: int
    frame_index: int
    tokens: Any = None  # token grid replayed when the slot is placed in a clip

    def __post_init__(self):
        if self.cooldown < 1:
            raise InvalidConfigError(f"cooldown must be >= 1, got {self.cooldown}")


@dataclass(frozen=True)
class StepAudit:
    t: int
    candidate_frame: int
    candidate_sem: float
    candidate_conf: float
    sem_score: float
    conf_score: float
    sem_updated: bool
    conf_updated: bool
    sem_frame: int
    conf_frame: int

    def as_dict(self):
        return {
            "t": self.t,
            "candidate_frame": self.candidate_frame,
            "candidate": {"sem": self.candidate_sem, "conf": self.candidate_conf},
            "slots": {
                "sem": {"score": self.sem_score, "updated": self.sem_updated, "frame": self.sem_frame},
                "conf": {"score": self.conf_score, "updated": self.conf_updated, "frame": self.conf_frame},
            },
        }


@dataclass(frozen=True)
class DMRState:
    sem_slot: ReferenceSlot
    conf_slot: ReferenceSlot
    candidate: Candidate
    t: int
    last_audit: Optional[StepAudit] = None


@dataclass(frozen=True)
class StreamFrame:
    """A frame's stream index and the payload a clip is built from."""

    index: int
    tokens: Any = None


@dataclass(frozen=True)
class AssembledClip:
    frames: tuple
    roles: tuple = field(default=())

    @property
    def indices(self):
        return tuple(f.index for f in self.frames)


def compute_prototypes(feat, prob, eps=EPS):
    """Probability-weighted foreground and background averages of ``feat`` [C, Hs, Ws]."""
    if feat.dim() != 3 or tuple(prob.shape) != tuple(feat.shape[-2:]):
        raise ShapeError(f"feature {tuple(feat.shape)} and probability map {tuple(prob.shape)} do not match")
    f = feat.detach().reshape(feat.shape[0], -1).to(torch.float64)
    p = prob.detach().reshape(-1).to(torch.float64)
    q = 1.0 - p
    mu_fg = (f * p).sum(dim=1) / (p.sum() + eps)
    mu_bg = (f * q).sum(dim=1) / (q.sum() + eps)
    return Prototypes(mu_fg=mu_fg, mu_bg=mu_bg)


def cosine(a, b, eps=EPS):
    """Cosine similarity; 0 when either vector has (near) zero norm."""
    a = torch.as_tensor(a, dtype=torch.float64).reshape(-1)
    b = torch.as_tensor(b, dtype=torch.float64).reshape(-1)
    na, nb = float(torch.linalg.vector_norm(a)), float(torch.linalg.vector_norm(b))
    if na * nb < eps:
        return 0.0
    return min(1.0, max(-1.0, float(torch.dot(a, b)) / (na * nb)))


def separability(protos):
    return 1.0 - cosine(protos.mu_fg, protos.mu_bg)


def determinacy(prob):
    """1 minus the mean binary entropy (bits) of a probability map."""
    p = torch.as_tensor(prob, dtype=torch.float64).clamp(0.0, 1.0)
    entropy = -(torch.special.xlogy(p, p) + torch.special.xlogy(1.0 - p, 1.0 - p)) / math.log(2.0)
    return min(1.0, max(0.0, 1.0 - float(entropy.mean())))


def semantic_score(cand, cur):
    """``(s_sep, s_cons, s_sep + s_cons)`` for a candidate against the current frame."""
    s_sep = separability(cand)
    s_cons = cosine(cand.mu_fg, cur.mu_fg)
    return s_sep, s_cons, s_sep + s_cons


def confidence_score(prob, cand, cur):
    """``(c, c + s_cons)``; ``prob`` is the candidate frame's probability map."""
    c = determinacy(prob)
    return c, c + cosine(cand.mu_fg, cur.mu_fg)


def make_candidate(feat, prob, t, tokens=None):
    protos = compute_prototypes(feat, prob)
    return Candidate(
        feature=feat.detach(),
        prototypes=protos,
        s_sep=separability(protos),
        determinacy=determinacy(prob),
        frame_index=t,
        tokens=tokens,
    )


def init_state(feat, prob, t=0, cooldowns=DEFAULT_COOLDOWNS, tokens=None):
    """Both slots and the candidate start from the first frame of the stream."""
    cand = make_candidate(feat, prob, t, tokens)
    sem_cd, conf_cd = cooldowns

    def slot(static, cooldown):
        return ReferenceSlot(
            feature=cand.feature,
            prototypes=cand.prototypes,
            static_score=static,
            last_update_t=t,
            cooldown=cooldown,
            frame_index=t,
            tokens=tokens,
        )

    return DMRState(sem_slot=slot(cand.s_sep, sem_cd), conf_slot=slot(cand.determinacy, conf_cd), candidate=cand, t=t)


def _consider(slot, cand, cand_static, cand_full, cur, t):
    slot_full = slot.static_score + cosine(slot.prototypes.mu_fg, cur.mu_fg)
    if t - slot.last_update_t >= slot.cooldown and cand_full > slot_full:
        updated = replace(
            slot,
            feature=cand.feature,
            prototypes=cand.prototypes,
            static_score=cand_static,
            last_update_t=t,
            frame_index=cand.frame_index,
            tokens=cand.tokens,
        )
        return updated, slot_full, True
    return slot, slot_full, False


def dmr_step(state, cur_feat, cur_prob, t, tokens=None):
    """Score the previous frame against frame ``t`` and update the slots."""
    if t <= state.t:
        raise TimeOrderError(f"timestep {t} does not follow {state.t}")
    cur = make_candidate(cur_feat, cur_prob, t, tokens)
    cand = state.candidate
    s_cons = cosine(cand.prototypes.mu_fg, cur.prototypes.mu_fg)
    cand_sem = cand.s_sep + s_cons
    cand_conf = cand.determinacy + s_cons

    sem_slot, sem_full, sem_up = _consider(state.sem_slot, cand, cand.s_sep, cand_sem, cur.prototypes, t)
    conf_slot, conf_full, conf_up = _consider(state.conf_slot, cand, cand.determinacy, cand_conf, cur.prototypes, t)
    if sem_up or conf_up:
        logger.debug("t=%d: frame %d replaces sem=%s conf=%s", t, cand.frame_index, sem_up, conf_up)

    audit = StepAudit(
        t=t,
        candidate_frame=cand.frame_index,
        candidate_sem=cand_sem,
        candidate_conf=cand_conf,
        sem_score=sem_full,
        conf_score=conf_full,
        sem_updated=sem_up,
        conf_updated=conf_up,
        sem_frame=sem_slot.frame_index,
        conf_frame=conf_slot.frame_index,
    )
    return DMRState(sem_slot=sem_slot, conf_slot=conf_slot, candidate=cur, t=t, last_audit=audit)


def assemble_clip(state, recent, current, clip_length=6, num_references=2):
    """Order ``[sem_slot, conf_slot, adjacent..., current]`` for the next CMA call.

    ``state`` is None before the first frame has been segmented; every reference
    and adjacent position then repeats ``current``. ``recent`` holds previous
    frames oldest first and is front-padded with its oldest entry.
    With ``num_references=1`` only the semantic slot is used.
    """
    if current is None:
        raise EmptyStreamError("cannot assemble a clip without a current frame")
    if num_references not in (1, 2):
        raise InvalidConfigError(f"num_references must be 1 or 2, got {num_references}")
    num_adjacent = clip_length - num_references - 1
    if num_adjacent < 0:
        raise InvalidConfigError(f"clip length {clip_length} is too short for {num_references} references")

    if state is None:
        refs = [current] * num_references
    else:
        slots = (state.sem_slot, state.conf_slot)[:num_references]
        refs = [StreamFrame(s.frame_index, s.tokens) for s in slots]

    recent = list(recent)[-num_adjacent:] if num_adjacent else []
    pad = recent[0] if recent else current
    adjacent = [pad] * (num_adjacent - len(recent)) + recent
    return AssembledClip(frames=tuple(refs + adjacent + [current]), roles=clip_roles(clip_length, num_references))
