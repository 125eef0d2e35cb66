"""Segment-level metrics, event-level matching, and cross-validation splitters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .labels import PHASE_NAMES, Phase
from .wmv import EventKind, EventRecord

DETECTION_TOLERANCE_S = 5.0
PREDICTION_HORIZON_S = 40.0 * 60.0


@dataclass
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def sensitivity(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else float("nan")

    @property
    def specificity(self) -> float:
        return self.tn / (self.tn + self.fp) if self.tn + self.fp else float("nan")

    @property
    def accuracy(self) -> float:
        total = self.tp + self.tn + self.fp + self.fn
        return (self.tp + self.tn) / total if total else float("nan")


@dataclass
class SegmentMetrics:
    per_class: dict  # phase name -> ConfusionCounts
    accuracy: float

    @property
    def avg_sensitivity(self) -> float:
        return float(np.mean([c.sensitivity for c in self.per_class.values()]))

    @property
    def avg_specificity(self) -> float:
        return float(np.mean([c.specificity for c in self.per_class.values()]))

    def lines(self):
        out = [f"accuracy={self.accuracy:.6f}"]
        for name, c in self.per_class.items():
            out.append(f"sensitivity_{name}={c.sensitivity:.6f}")
            out.append(f"specificity_{name}={c.specificity:.6f}")
        out.append(f"avg_sensitivity={self.avg_sensitivity:.6f}")
        out.append(f"avg_specificity={self.avg_specificity:.6f}")
        return out


def segment_metrics(pairs) -> SegmentMetrics:
    """One-vs-rest confusion counts per class plus overall accuracy.

    ``pairs`` is a sequence of (predicted, actual) labels.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("segment_metrics requires at least one pair")
    pred = np.array([int(p) for p, _ in pairs])
    actual = np.array([int(a) for _, a in pairs])
    per_class = {}
    for phase in Phase:
        p = pred == phase
        a = actual == phase
        per_class[phase.name.lower()] = ConfusionCounts(
            tp=int(np.sum(p & a)),
            tn=int(np.sum(~p & ~a)),
            fp=int(np.sum(p & ~a)),
            fn=int(np.sum(~p & a)),
        )
    return SegmentMetrics(per_class=per_class, accuracy=float(np.mean(pred == actual)))


@dataclass
class EventMetrics:
    tp: int
    fp: int
    fn: int
    hours: float

    @property
    def sensitivity(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else float("nan")

    @property
    def fpr_per_hour(self) -> float:
        return self.fp / self.hours if self.hours > 0 else float("nan")

    def lines(self):
        return [
            f"tp={self.tp}",
            f"fp={self.fp}",
            f"fn={self.fn}",
            f"hours={self.hours:.6f}",
            f"sensitivity={self.sensitivity:.6f}",
            f"fpr_per_hour={self.fpr_per_hour:.6f}",
        ]


def match_detections(events, seizures, total_hours: float) -> EventMetrics:
    """Event-based seizure detection scoring.

    Per seizure, the first ictal event within +/-5 s of onset is its unique TP;
    a seizure with no such event counts one FN. Events outside every seizure's
    [start-5 s, end+5 s] span are FPs; in-seizure extras beyond the TP are
    ignored.
    """
    events = [e for e in events if e.kind == EventKind.ICTAL_DETECTED]
    tp = 0
    fp = 0
    claimed = [False] * len(seizures)
    for ev in sorted(events, key=lambda e: e.time_s):
        onset_hit = None
        inside = False
        for idx, (start, end) in enumerate(seizures):
            if abs(ev.time_s - start) <= DETECTION_TOLERANCE_S and not claimed[idx]:
                onset_hit = idx
                break
            if start - DETECTION_TOLERANCE_S <= ev.time_s <= end + DETECTION_TOLERANCE_S:
                inside = True
        if onset_hit is not None:
            claimed[onset_hit] = True
            tp += 1
        elif not inside:
            fp += 1
        # else: mid-seizure detection after the TP window, neither TP nor FP
    fn = len(seizures) - tp
    return EventMetrics(tp=tp, fp=fp, fn=fn, hours=total_hours)


def match_predictions(events, seizures, total_hours: float) -> EventMetrics:
    """Event-based seizure prediction scoring.

    A warning within [start - 40 min, start) is a TP, one per seizure; warnings
    outside every such span are FPs; unwarned seizures count one FN each.
    """
    events = [e for e in events if e.kind == EventKind.PREICTAL_WARNING]
    tp = 0
    fp = 0
    claimed = [False] * len(seizures)
    for ev in sorted(events, key=lambda e: e.time_s):
        hit = None
        in_horizon = False
        for idx, (start, _end) in enumerate(seizures):
            if start - PREDICTION_HORIZON_S <= ev.time_s < start:
                in_horizon = True
                if not claimed[idx]:
                    hit = idx
                    break
        if hit is not None:
            claimed[hit] = True
            tp += 1
        elif not in_horizon:
            fp += 1
    fn = len(seizures) - tp
    return EventMetrics(tp=tp, fp=fp, fn=fn, hours=total_hours)


def stratified_kfold(segments, folds: int = 10, seed: int = 0):
    """Per-class seeded shuffle dealt round-robin; yields (train, validation) lists."""
    rng = np.random.default_rng(seed)
    fold_members = [[] for _ in range(folds)]
    for phase in Phase:
        idx = [i for i, s in enumerate(segments) if s.label == phase]
        if len(idx) < folds:
            raise ValueError(f"class {phase.name} has {len(idx)} segments, needs >= {folds}")
        order = rng.permutation(len(idx))
        for pos, j in enumerate(order):
            fold_members[pos % folds].append(idx[j])
    splits = []
    for f in range(folds):
        val = sorted(fold_members[f])
        val_set = set(val)
        train = [i for i in range(len(segments)) if i not in val_set]
        splits.append((
            [segments[i] for i in train],
            [segments[i] for i in val],
        ))
    return splits


def loocv_splits(recording):
    """Split a recording into one-seizure sections at temporal midpoints.

    Returns a list of (train_sections, validation_section) where sections are
    (start_s, end_s) tuples partitioning the full duration.
    """
    seizures = recording.annotations
    if len(seizures) < 2:
        raise ValueError("LOOCV variant requires at least 2 annotated seizures")
    duration = recording.duration_s
    bounds = [0.0]
    for (s0, e0), (s1, _e1) in zip(seizures, seizures[1:]):
        bounds.append((e0 + s1) / 2.0)
    bounds.append(duration)
    sections = list(zip(bounds[:-1], bounds[1:]))
    splits = []
    for k in range(len(sections)):
        train = [sec for i, sec in enumerate(sections) if i != k]
        splits.append((train, sections[k]))
    return splits
