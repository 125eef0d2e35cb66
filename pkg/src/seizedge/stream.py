"""Replay a recording segment-by-segment through a model and the WMV detector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Recording
from .labels import Phase
from .models import WeightBundle, infer_batch
from .wmv import WmvParams, WmvState, wmv_push


@dataclass
class StreamResult:
    starts_s: np.ndarray  # segment start times
    preds: list  # Phase per segment
    score_ictal: np.ndarray
    score_preictal: np.ndarray
    events: list  # EventRecord
    stride_s: float


def classify_recording(
    bundle: WeightBundle,
    rec: Recording,
    channels,
    stride_s: float | None = None,
    batch_size: int = 512,
):
    """Per-segment classification over the whole recording.

    Returns (preds, starts_s). Segments are classified independently, so they
    are batched for throughput; the label stream is identical to one-at-a-time
    inference.
    """
    n = bundle.spec.samples
    fs = rec.fs
    if stride_s is None:
        stride_s = n / fs
    step = int(round(stride_s * fs))
    data = rec.samples[list(channels)].astype(np.float64)
    starts = np.arange(0, data.shape[1] - n + 1, step)
    preds = np.empty(len(starts), dtype=np.int64)
    for lo in range(0, len(starts), batch_size):
        idx = starts[lo : lo + batch_size]
        segs = np.stack([data[:, s : s + n] for s in idx])
        logits = infer_batch(bundle, segs)
        preds[lo : lo + batch_size] = np.argmax(logits, axis=1)
    return [Phase(int(p)) for p in preds], starts / fs


def run_stream(
    bundle: WeightBundle,
    rec: Recording,
    channels,
    params: WmvParams,
    stride_s: float | None = None,
) -> StreamResult:
    """Classify then fold the label stream through the streaming WMV detector."""
    if stride_s is None:
        stride_s = bundle.spec.samples / rec.fs
    preds, starts = classify_recording(bundle, rec, channels, stride_s)
    state = WmvState()
    events = []
    si = np.empty(len(preds))
    sp = np.empty(len(preds))
    for i, pred in enumerate(preds):
        event = wmv_push(state, pred, params, stride_s=stride_s)
        si[i] = state.last_score_ictal
        sp[i] = state.last_score_preictal
        if event is not None:
            events.append(event)
    return StreamResult(
        starts_s=starts,
        preds=preds,
        score_ictal=si,
        score_preictal=sp,
        events=events,
        stride_s=stride_s,
    )
