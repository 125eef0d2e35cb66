"""Sliding-window weighted majority voting over per-segment classifications.

The detector consumes a stream of segment labels. Within a window of at most
``M`` segments, each ictal (preictal) vote adds ``alpha + beta * run_length``
to the corresponding score; run-length accumulators reset whenever the run is
broken, while scores persist until the window ends. Crossing a threshold emits
an event and immediately starts a fresh window. A traditional moving-average
detector is included as the comparison baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .labels import Phase


@dataclass(frozen=True)
class WmvParams:
    m: int = 60
    alpha_i: float = 1.0
    beta_i: float = 0.5
    theta_i: float = 10.0
    alpha_p: float = 1.0
    beta_p: float = 0.2
    theta_p: float = 20.0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("window length M must be >= 1")
        if self.theta_i <= 0 or self.theta_p <= 0:
            raise ValueError("thresholds must be positive")
        if min(self.alpha_i, self.beta_i, self.alpha_p, self.beta_p) < 0:
            raise ValueError("vote and run-length weights must be >= 0")


class EventKind(Enum):
    ICTAL_DETECTED = "ictal_detected"
    PREICTAL_WARNING = "preictal_warning"


@dataclass(frozen=True)
class EventRecord:
    kind: EventKind
    segment_index: int
    time_s: float


@dataclass
class WmvState:
    score_ictal: float = 0.0
    score_preictal: float = 0.0
    acc_ictal: int = 0
    acc_preictal: int = 0
    pos: int = 0  # segments consumed in the current window
    index: int = 0  # segments consumed overall
    # post-update scores of the most recent push, kept across window resets so
    # stream loggers can record them
    last_score_ictal: float = 0.0
    last_score_preictal: float = 0.0

    def reset_window(self):
        self.score_ictal = 0.0
        self.score_preictal = 0.0
        self.acc_ictal = 0
        self.acc_preictal = 0
        self.pos = 0


def wmv_push(state: WmvState, pred: Phase, params: WmvParams, stride_s: float = 1.0):
    """Feed one segment label; returns an EventRecord or None. Mutates state.

    The ictal threshold is checked before the preictal one; either crossing
    (or exhausting the window) starts a new window immediately.
    """
    if pred == Phase.ICTAL:
        state.score_ictal += params.alpha_i + params.beta_i * state.acc_ictal
        state.acc_ictal += 1
        state.acc_preictal = 0
    elif pred == Phase.PREICTAL:
        state.score_preictal += params.alpha_p + params.beta_p * state.acc_preictal
        state.acc_preictal += 1
        state.acc_ictal = 0
    else:
        state.acc_ictal = 0
        state.acc_preictal = 0
    state.pos += 1
    idx = state.index
    state.index += 1
    state.last_score_ictal = state.score_ictal
    state.last_score_preictal = state.score_preictal

    event = None
    if state.score_ictal > params.theta_i:
        event = EventRecord(EventKind.ICTAL_DETECTED, idx, idx * stride_s)
    elif state.score_preictal > params.theta_p:
        event = EventRecord(EventKind.PREICTAL_WARNING, idx, idx * stride_s)
    if event is not None or state.pos == params.m:
        state.reset_window()
    return event


def wmv_batch(preds, params: WmvParams, stride_s: float = 1.0):
    """Offline reference form: literal window loop with break-on-threshold.

    Kept independent of :class:`WmvState` so it can serve as the oracle for
    the streaming implementation.
    """
    events = []
    preds = list(preds)
    i = 0
    n = len(preds)
    while i < n:
        score_i = 0.0
        score_p = 0.0
        acc_i = 0
        acc_p = 0
        consumed = 0
        while consumed < params.m and i < n:
            label = preds[i]
            if label == Phase.ICTAL:
                score_i += params.alpha_i + params.beta_i * acc_i
                acc_i += 1
                acc_p = 0
            elif label == Phase.PREICTAL:
                score_p += params.alpha_p + params.beta_p * acc_p
                acc_p += 1
                acc_i = 0
            else:
                acc_i = 0
                acc_p = 0
            consumed += 1
            i += 1
            if score_i > params.theta_i:
                events.append(EventRecord(EventKind.ICTAL_DETECTED, i - 1, (i - 1) * stride_s))
                break
            if score_p > params.theta_p:
                events.append(EventRecord(EventKind.PREICTAL_WARNING, i - 1, (i - 1) * stride_s))
                break
    return events


def moving_average_detector(preds, window: int, threshold: float, stride_s: float = 1.0):
    """Baseline: trigger when the fraction of ictal (preictal) labels in the
    trailing window exceeds the threshold; refractory until it drops below."""
    if window < 1:
        raise ValueError("window must be >= 1")
    events = []
    recent = []
    armed = {EventKind.ICTAL_DETECTED: True, EventKind.PREICTAL_WARNING: True}
    targets = {EventKind.ICTAL_DETECTED: Phase.ICTAL, EventKind.PREICTAL_WARNING: Phase.PREICTAL}
    for idx, label in enumerate(preds):
        recent.append(label)
        if len(recent) > window:
            recent.pop(0)
        if len(recent) < window:
            continue
        for kind, phase in targets.items():
            frac = sum(1 for p in recent if p == phase) / window
            if frac > threshold:
                if armed[kind]:
                    events.append(EventRecord(kind, idx, idx * stride_s))
                    armed[kind] = False
            else:
                armed[kind] = True
    return events
