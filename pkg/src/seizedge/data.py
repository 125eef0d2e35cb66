"""Recording ingestion, channel ranking, segment extraction, and synthesis.

Recordings are stored as a raw int16 little-endian frame-interleaved signal
file plus a JSON meta file (fs, channel_names, duration_samples, annotations).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import BadHeader, ChannelCountMismatch, OverlappingAnnotations
from .labels import Phase


@dataclass
class Recording:
    """Annotated multichannel signal; samples are int16 [channels x T]."""

    fs: int
    channel_names: list
    samples: np.ndarray
    annotations: list  # sorted, non-overlapping (start_s, end_s) tuples

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.int16)
        if self.samples.ndim != 2 or len(self.channel_names) != self.samples.shape[0]:
            raise ChannelCountMismatch(
                f"{len(self.channel_names)} channel names for {self.samples.shape[0]} rows"
            )
        self.annotations = [(float(s), float(e)) for s, e in self.annotations]
        _validate_annotations(self.annotations, self.duration_s)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return self.samples.shape[1] / self.fs


def _validate_annotations(annotations, duration_s):
    prev_end = -1.0
    for start, end in annotations:
        if not 0 <= start < end <= duration_s + 1e-9:
            raise OverlappingAnnotations(f"invalid interval [{start}, {end}]")
        if start < prev_end:
            raise OverlappingAnnotations("annotation intervals overlap or are unsorted")
        prev_end = end


@dataclass
class Segment:
    """A labeled fixed-length window of K selected channels."""

    data: np.ndarray  # [K x N] float64
    label: Phase
    start_s: float


def save_recording(rec: Recording, signal_path, meta_path):
    interleaved = np.ascontiguousarray(rec.samples.T.astype("<i2"))
    with open(signal_path, "wb") as fh:
        fh.write(interleaved.tobytes())
    meta = {
        "fs": rec.fs,
        "channel_names": list(rec.channel_names),
        "duration_samples": rec.samples.shape[1],
        "annotations": [{"start_s": s, "end_s": e} for s, e in rec.annotations],
    }
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_recording(signal_path, meta_path) -> Recording:
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as exc:
        raise BadHeader(f"meta file is not valid JSON: {exc}") from exc
    for key in ("fs", "channel_names", "duration_samples", "annotations"):
        if key not in meta:
            raise BadHeader(f"meta file missing field {key!r}")
    names = meta["channel_names"]
    n_samples = int(meta["duration_samples"])
    with open(signal_path, "rb") as fh:
        payload = fh.read()
    expected = 2 * len(names) * n_samples
    if len(payload) != expected:
        raise ChannelCountMismatch(
            f"signal payload is {len(payload)} bytes, expected {expected} "
            f"for {len(names)} channels x {n_samples} samples"
        )
    frames = np.frombuffer(payload, dtype="<i2").reshape(n_samples, len(names))
    annotations = [(a["start_s"], a["end_s"]) for a in meta["annotations"]]
    return Recording(
        fs=int(meta["fs"]),
        channel_names=list(names),
        samples=frames.T.copy(),
        annotations=annotations,
    )


def line_length(x) -> float:
    """Mean absolute first difference: (1/N) * sum |x(t-1) - x(t)|."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise ValueError("line_length requires at least 2 samples")
    return float(np.abs(np.diff(x)).sum() / x.size)


def rank_channels(rec: Recording, k: int):
    """Top-k channels by mean ictal line length, descending; ties by lower index."""
    if not rec.annotations:
        raise ValueError("channel ranking requires at least one annotated seizure")
    if not 1 <= k <= rec.n_channels:
        raise ValueError(f"k must be in [1, {rec.n_channels}]")
    scores = np.zeros(rec.n_channels)
    for ch in range(rec.n_channels):
        vals = []
        for start, end in rec.annotations:
            lo = int(round(start * rec.fs))
            hi = int(round(end * rec.fs))
            vals.append(line_length(rec.samples[ch, lo:hi]))
        scores[ch] = np.mean(vals)
    # stable sort on negated scores: equal scores keep ascending channel index
    order = np.argsort(-scores, kind="stable")
    return [int(i) for i in order[:k]]


def extract_segments(
    rec: Recording,
    channels,
    seg_seconds: float,
    preictal_minutes: float = 3.0,
    preictal_gap_s: float = 30.0,
    interictal_clearance_h: float = 2.0,
    ictal_overlap: float = 0.5,
    interictal_count: int | None = None,
    seed: int = 0,
):
    """Cut labeled fixed-length windows from an annotated recording.

    Ictal windows tile each seizure with the given overlap; preictal windows
    tile (without overlap) the preictal span ending ``preictal_gap_s`` before
    each onset; interictal windows are drawn uniformly without overlap from
    regions at least ``interictal_clearance_h`` hours from any seizure.
    Windows crossing region boundaries are discarded.
    """
    channels = list(channels)
    n = int(round(rec.fs * seg_seconds))
    if abs(n - rec.fs * seg_seconds) > 1e-9:
        raise ValueError("fs * seg_seconds must be integral")
    duration = rec.duration_s
    data = rec.samples[channels].astype(np.float64)

    def cut(start_s: float, label: Phase) -> Segment:
        lo = int(round(start_s * rec.fs))
        return Segment(data=data[:, lo : lo + n].copy(), label=label, start_s=start_s)

    segments = []
    stride = seg_seconds * (1.0 - ictal_overlap)
    for start, end in rec.annotations:
        t = start
        while t + seg_seconds <= end + 1e-9:
            segments.append(cut(t, Phase.ICTAL))
            t += stride

    pre_span = preictal_minutes * 60.0
    for start, _end in rec.annotations:
        span_lo = max(0.0, start - preictal_gap_s - pre_span)
        span_hi = start - preictal_gap_s
        t = span_lo
        while t + seg_seconds <= span_hi + 1e-9:
            segments.append(cut(t, Phase.PREICTAL))
            t += seg_seconds

    clearance = interictal_clearance_h * 3600.0
    regions = interictal_regions(rec.annotations, duration, clearance)
    candidates = []
    for lo, hi in regions:
        t = lo
        while t + seg_seconds <= hi + 1e-9:
            candidates.append(t)
            t += seg_seconds
    n_ictal = sum(1 for s in segments if s.label == Phase.ICTAL)
    n_pre = sum(1 for s in segments if s.label == Phase.PREICTAL)
    if interictal_count is None:
        interictal_count = max(n_ictal, n_pre)
    rng = np.random.default_rng(seed)
    take = min(interictal_count, len(candidates))
    chosen = sorted(rng.choice(len(candidates), size=take, replace=False)) if take else []
    for i in chosen:
        segments.append(cut(candidates[int(i)], Phase.INTERICTAL))
    return segments


SEG_MAGIC = b"ESG1"


def save_segments(segments, fs: int, path):
    """Write a segment archive: header + per-segment label/start/float32 payload."""
    import struct

    if not segments:
        raise ValueError("cannot write an empty segment archive")
    k, n = segments[0].data.shape
    with open(path, "wb") as fh:
        fh.write(SEG_MAGIC)
        fh.write(struct.pack("<HHBII", 1, fs, k, n, len(segments)))
        for seg in segments:
            if seg.data.shape != (k, n):
                raise ValueError("segments in one archive must share a shape")
            fh.write(struct.pack("<Bd", int(seg.label), seg.start_s))
            fh.write(seg.data.astype("<f4").tobytes())


def load_segments(path):
    """Read a segment archive; returns (segments, fs)."""
    import struct

    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != SEG_MAGIC:
        raise BadHeader("not a segment archive")
    head = struct.calcsize("<HHBII")
    version, fs, k, n, count = struct.unpack("<HHBII", blob[4 : 4 + head])
    if version != 1:
        raise BadHeader(f"unsupported segment archive version {version}")
    pos = 4 + head
    rec_size = struct.calcsize("<Bd") + 4 * k * n
    segments = []
    for _ in range(count):
        if pos + rec_size > len(blob):
            raise BadHeader("segment archive truncated")
        label, start_s = struct.unpack("<Bd", blob[pos : pos + 9])
        data = np.frombuffer(blob, dtype="<f4", count=k * n, offset=pos + 9)
        segments.append(Segment(
            data=data.astype(np.float64).reshape(k, n),
            label=Phase(label),
            start_s=start_s,
        ))
        pos += rec_size
    return segments, fs


def interictal_regions(annotations, duration_s: float, clearance_s: float):
    """Sub-intervals of [0, duration] at least clearance_s from every seizure."""
    regions = []
    cursor = 0.0
    for start, end in annotations:
        lo = cursor
        hi = start - clearance_s
        if hi > lo:
            regions.append((lo, hi))
        cursor = max(cursor, end + clearance_s)
    if duration_s > cursor:
        regions.append((cursor, duration_s))
    return regions


def synth_generate(
    seed: int,
    hours: float,
    seizure_count: int,
    channels: int,
    fs: int = 256,
    seizure_len_s: tuple = (25.0, 40.0),
    artifact_rate_per_h: float = 30.0,
    burst_train_rate_per_h: float = 3.0,
) -> Recording:
    """Deterministic synthetic recording with annotated seizures.

    Background is low-passed noise; seizures are amplitude-ramped oscillatory
    bursts with a descending channel gain profile (so line-length ranking
    recovers the channel order); the preictal span carries a weak rhythmic
    precursor; short spiky artifacts are scattered through the background.

    Non-seizure interference comes in two flavors: isolated sub-second spikes
    and short trains of paired seizure-like bursts (2 s on, 1 s off, three
    times). The trains mimic paroxysmal non-epileptic activity: long enough to
    fool a per-segment classifier, but never sustained the way a real onset is.
    """
    rng = np.random.default_rng(seed)
    total = int(round(hours * 3600 * fs))
    duration = total / fs

    # seizure placement: one per equal slot, jittered, with room for preictal
    annotations = []
    if seizure_count > 0:
        slot = duration / seizure_count
        for i in range(seizure_count):
            length = rng.uniform(*seizure_len_s)
            lo = i * slot + max(300.0, 0.25 * slot)
            hi = (i + 1) * slot - length - 60.0
            if hi <= lo:
                raise ValueError("recording too short for the requested seizure count")
            start = rng.uniform(lo, hi)
            annotations.append((start, start + length))

    gains = 1.0 / (1.0 + 0.15 * np.arange(channels))
    t_axis = None
    samples = np.empty((channels, total), dtype=np.int16)
    base_amp = 300.0
    cutoff_hz = min(30.0, 0.45 * fs / 2)
    b, a = sps.butter(2, cutoff_hz / (fs / 2), btype="low")

    # per-channel generation keeps the float working set small
    artifact_times = _poisson_times(rng, artifact_rate_per_h / 3600.0, duration)
    artifact_channels = [rng.permutation(channels)[: max(1, channels // 2)] for _ in artifact_times]

    # burst trains: three 2 s seizure-like bursts separated by 1 s of quiet,
    # snapped to whole seconds and kept clear of every seizure and its
    # preictal span
    train_starts = []
    for t in _poisson_times(rng, burst_train_rate_per_h / 3600.0, duration - 10.0):
        t = float(int(t))
        if any(start - 240.0 <= t <= end + 30.0 for start, end in annotations):
            continue
        train_starts.append(t)
    for ch in range(channels):
        white = rng.standard_normal(total)
        x = sps.lfilter(b, a, white) * base_amp * 3.0
        if t_axis is None:
            t_axis = np.arange(total) / fs
        for start, end in annotations:
            lo, hi = int(start * fs), int(end * fs)
            tt = t_axis[lo:hi]
            ramp = np.minimum(1.0, (tt - start) / 1.0)
            f0 = 6.0 + 0.5 * np.sin(2 * np.pi * 0.1 * (tt - start))
            burst = np.sin(2 * np.pi * f0 * tt) + 0.4 * np.sin(2 * np.pi * 2.1 * f0 * tt)
            x[lo:hi] += gains[ch] * 1400.0 * ramp * burst
            plo = int(max(0.0, start - 210.0) * fs)
            phi = int(max(0.0, start - 30.0) * fs)
            if phi > plo:
                tp = t_axis[plo:phi]
                x[plo:phi] += gains[ch] * 450.0 * np.sin(2 * np.pi * 14.0 * tp)
        for at, chans in zip(artifact_times, artifact_channels):
            if ch not in chans:
                continue
            lo = int(at * fs)
            hi = min(total, lo + int(0.4 * fs))
            ta = t_axis[lo:hi]
            x[lo:hi] += 900.0 * np.sin(2 * np.pi * 7.0 * ta) * np.hanning(hi - lo)
        for ts in train_starts:
            for burst in range(3):
                lo = int((ts + 3.0 * burst) * fs)
                hi = min(total, lo + 2 * fs)
                tb = t_axis[lo:hi]
                taper = np.minimum(1.0, np.minimum(tb - tb[0], tb[-1] - tb) / 0.1)
                f0 = 6.0 + 0.5 * np.sin(2 * np.pi * 0.1 * (tb - ts))
                wave = np.sin(2 * np.pi * f0 * tb) + 0.4 * np.sin(2 * np.pi * 2.1 * f0 * tb)
                x[lo:hi] += gains[ch] * 1400.0 * taper * wave
        samples[ch] = np.clip(x, -32768, 32767).astype(np.int16)

    return Recording(
        fs=fs,
        channel_names=[f"ch{i:02d}" for i in range(channels)],
        samples=samples,
        annotations=annotations,
    )


def _poisson_times(rng, rate_per_s: float, duration_s: float):
    times = []
    t = rng.exponential(1.0 / rate_per_s) if rate_per_s > 0 else duration_s
    while t < duration_s - 1.0:
        times.append(t)
        t += rng.exponential(1.0 / rate_per_s)
    return times
