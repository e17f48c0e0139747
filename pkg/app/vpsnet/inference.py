"""Sequential per-stream segmentation with dynamic reference maintenance."""
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from . import imaging, tensor_io
from .dmr import StreamFrame, assemble_clip, dmr_step, init_state
from .exceptions import EmptyStreamError
from .runconfig import JsonlWriter, write_json
from .synth_data import iter_clip_dirs, load_clip_dir

logger = logging.getLogger(__name__)


@dataclass
class FrameResult:
    index: int
    prob: np.ndarray  # [H, W] float32, input resolution
    latency_ms: float
    references: tuple
    audit: Optional[dict] = None


@dataclass
class StreamSummary:
    frames: int
    mean_latency_ms: float
    fps: float
    results: list = field(default_factory=list)

    def as_dict(self):
        return {"frames": self.frames, "mean_latency_ms": self.mean_latency_ms, "fps": self.fps}


class StreamSegmenter:
    """Feed frames one at a time; state is owned by this object and never shared."""

    def __init__(self, net, trace=None):
        self.net = net.eval()
        self.config = net.config
        self.num_references = self.config.effective_references
        self.trace = trace
        self.state = None
        self.recent = deque(maxlen=self.config.clip_length - self.num_references - 1)
        self.t = -1

    def _prepare(self, frame):
        x = torch.as_tensor(np.asarray(frame), dtype=torch.float32)[None]
        size = self.config.image_size
        if tuple(x.shape[-2:]) != (size, size):
            x = F.interpolate(x, size=(size, size), mode="bilinear", align_corners=False)
        return x

    @torch.no_grad()
    def push(self, frame):
        """Segment one ``[3, H, W]`` frame in [0, 1]."""
        start = time.perf_counter()
        t = self.t + 1
        out_size = tuple(np.asarray(frame).shape[-2:])
        x = self._prepare(frame)
        pyramid, tokens = self.net.encode(x)
        current = StreamFrame(t, tokens[0])
        clip = assemble_clip(self.state, self.recent, current, self.config.clip_length, self.num_references)
        clip_tokens = torch.stack([f.tokens for f in clip.frames])[None]

        trace = [] if self.trace is not None else None
        preds, agg = self.net.segment(clip_tokens, clip.roles, pyramid, x.shape[-2:], trace)
        coarse_prob = torch.sigmoid(preds.coarse_logits)[0, 0]

        audit = None
        if self.state is None:
            self.state = init_state(agg[0], coarse_prob, t, self.config.cooldowns, tokens[0])
        elif not self.config.no_dmr:
            self.state = dmr_step(self.state, agg[0], coarse_prob, t, tokens[0])
            audit = self.state.last_audit.as_dict()
        self.recent.append(current)
        self.t = t

        logits = preds.pred3
        if tuple(logits.shape[-2:]) != out_size:
            logits = F.interpolate(logits, size=out_size, mode="bilinear", align_corners=False)
        prob = torch.sigmoid(logits)[0, 0].numpy().astype(np.float32)
        latency = (time.perf_counter() - start) * 1000.0
        if trace is not None:
            self.trace.write({"t": t, "clip": list(clip.indices), "roles": list(clip.roles), "frames": trace})
        return FrameResult(index=t, prob=prob, latency_ms=latency, references=clip.indices[: self.num_references], audit=audit)


def infer_stream(net, frames, audit_log=None, trace=None):
    """Run a StreamSegmenter over an iterable of frames."""
    segmenter = StreamSegmenter(net, trace=trace)
    results = []
    for frame in frames:
        result = segmenter.push(frame)
        if audit_log is not None and result.audit is not None:
            audit_log.write(result.audit)
        results.append(result)
    if not results:
        raise EmptyStreamError("stream contained no frames")
    # first frame includes one-off allocation, keep it out of the timing
    timed = [r.latency_ms for r in results[1:]] or [results[0].latency_ms]
    mean_ms = float(np.mean(timed))
    return StreamSummary(frames=len(results), mean_latency_ms=mean_ms, fps=1000.0 / mean_ms if mean_ms else 0.0, results=results)


def infer_dirs(net, stream_root, out_root, trace_attention=False, save_raw=False):
    """Segment every clip under ``stream_root`` into ``out_root/<clip>/NNNN.png``."""
    out_root = Path(out_root)
    summaries = {}
    for clip_dir in iter_clip_dirs(stream_root):
        frames, _, _ = load_clip_dir(clip_dir)
        names = [p.name for p in imaging.list_pngs(clip_dir / "frames")]
        clip_out = out_root / clip_dir.name
        trace = JsonlWriter(clip_out / "attention_trace.jsonl") if trace_attention else None
        try:
            with JsonlWriter(clip_out / "dmr_audit.jsonl") as audit:
                audit.write({"event": "start", "config": net.config.to_dict(), "clip": clip_dir.name})
                summary = infer_stream(net, frames, audit_log=audit, trace=trace)
        finally:
            if trace is not None:
                trace.close()
        for name, result in zip(names, summary.results):
            imaging.save_png(imaging.to_uint8(result.prob), clip_out / name)
        if save_raw:
            tensor_io.save_tensors(
                clip_out / "raw_probs.vpst",
                {name: r.prob for name, r in zip(names, summary.results)},
                {"clip": clip_dir.name, "config": net.config.to_dict()},
            )
        write_json(clip_out / "latency.json", summary.as_dict())
        logger.info("%s: %d frames, %.2f ms/frame (%.1f FPS)", clip_dir.name, summary.frames, summary.mean_latency_ms, summary.fps)
        summaries[clip_dir.name] = summary
    return summaries
