import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from seizedge import data as D
from seizedge.errors import BadHeader, ChannelCountMismatch, OverlappingAnnotations
from seizedge.labels import Phase


def make_recording(fs=10, seconds=600, channels=2, annotations=()):
    rng = np.random.default_rng(0)
    samples = rng.integers(-100, 100, size=(channels, fs * seconds), dtype=np.int16)
    return D.Recording(
        fs=fs,
        channel_names=[f"c{i}" for i in range(channels)],
        samples=samples,
        annotations=list(annotations),
    )


class TestRecording:
    def test_validates_channel_names(self):
        with pytest.raises(ChannelCountMismatch):
            D.Recording(fs=10, channel_names=["a"], samples=np.zeros((2, 10), dtype=np.int16), annotations=[])

    def test_rejects_inverted_interval(self):
        with pytest.raises(OverlappingAnnotations):
            make_recording(annotations=[(5.0, 3.0)])

    def test_rejects_overlap(self):
        with pytest.raises(OverlappingAnnotations):
            make_recording(annotations=[(1.0, 10.0), (5.0, 20.0)])

    def test_rejects_out_of_range(self):
        with pytest.raises(OverlappingAnnotations):
            make_recording(seconds=10, annotations=[(5.0, 11.0)])

    def test_duration(self):
        rec = make_recording(fs=10, seconds=60)
        assert rec.duration_s == 60.0
        assert rec.n_channels == 2


class TestRecordingIo:
    def test_round_trip(self, tmp_path):
        rec = make_recording(annotations=[(10.0, 20.0)])
        sig, meta = tmp_path / "r.i16", tmp_path / "r.json"
        D.save_recording(rec, sig, meta)
        loaded = D.load_recording(sig, meta)
        assert loaded.fs == rec.fs
        assert loaded.channel_names == rec.channel_names
        assert np.array_equal(loaded.samples, rec.samples)
        assert loaded.annotations == rec.annotations

    def test_interleaved_layout(self, tmp_path):
        rec = D.Recording(fs=1, channel_names=["a", "b"],
                          samples=np.array([[1, 2], [3, 4]], dtype=np.int16), annotations=[])
        sig, meta = tmp_path / "r.i16", tmp_path / "r.json"
        D.save_recording(rec, sig, meta)
        raw = np.frombuffer(sig.read_bytes(), dtype="<i2")
        assert raw.tolist() == [1, 3, 2, 4]  # frame-major: one sample per channel

    def test_channel_count_mismatch(self, tmp_path):
        rec = make_recording()
        sig, meta = tmp_path / "r.i16", tmp_path / "r.json"
        D.save_recording(rec, sig, meta)
        doc = json.loads(meta.read_text())
        doc["channel_names"].append("ghost")
        meta.write_text(json.dumps(doc))
        with pytest.raises(ChannelCountMismatch):
            D.load_recording(sig, meta)

    def test_bad_meta(self, tmp_path):
        sig, meta = tmp_path / "r.i16", tmp_path / "r.json"
        sig.write_bytes(b"")
        meta.write_text("{not json")
        with pytest.raises(BadHeader):
            D.load_recording(sig, meta)

    def test_missing_field(self, tmp_path):
        rec = make_recording()
        sig, meta = tmp_path / "r.i16", tmp_path / "r.json"
        D.save_recording(rec, sig, meta)
        doc = json.loads(meta.read_text())
        del doc["fs"]
        meta.write_text(json.dumps(doc))
        with pytest.raises(BadHeader):
            D.load_recording(sig, meta)


class TestLineLength:
    def test_constant_zero(self):
        assert D.line_length(np.full(50, 3.7)) == 0.0

    def test_alternating(self):
        assert D.line_length([0, 1, 0, 1]) == pytest.approx(0.75)

    def test_requires_two_samples(self):
        with pytest.raises(ValueError):
            D.line_length([1.0])

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=50))
    def test_matches_direct_formula(self, vals):
        x = np.array(vals)
        direct = sum(abs(x[t - 1] - x[t]) for t in range(1, len(x))) / len(x)
        assert D.line_length(x) == pytest.approx(direct, abs=1e-12)

    def test_dc_invariant(self):
        x = np.random.default_rng(1).normal(size=100)
        assert D.line_length(x) == pytest.approx(D.line_length(x + 55.0), abs=1e-12)


class TestRankChannels:
    def test_oscillating_beats_flat(self):
        fs = 10
        samples = np.zeros((2, fs * 100), dtype=np.int16)
        t = np.arange(fs * 100) / fs
        samples[1] = (100 * np.sin(2 * np.pi * 3 * t)).astype(np.int16)
        rec = D.Recording(fs=fs, channel_names=["flat", "osc"], samples=samples,
                          annotations=[(10.0, 20.0)])
        assert D.rank_channels(rec, 1) == [1]

    def test_full_k_is_permutation(self):
        rec = make_recording(annotations=[(10.0, 20.0)])
        assert sorted(D.rank_channels(rec, 2)) == [0, 1]

    def test_requires_annotations(self):
        with pytest.raises(ValueError):
            D.rank_channels(make_recording(), 1)

    def test_synthetic_gain_order(self):
        rec = D.synth_generate(seed=3, hours=0.2, seizure_count=1, channels=5, fs=64)
        assert D.rank_channels(rec, 5) == [0, 1, 2, 3, 4]


class TestExtractSegments:
    def test_ictal_overlap_tiling(self):
        # 10 s seizure, 1 s windows, 50% overlap -> 19 segments
        rec = make_recording(fs=10, seconds=20000, annotations=[(9000.0, 9010.0)])
        segs = D.extract_segments(rec, [0, 1], 1.0, interictal_count=0)
        ictal = [s for s in segs if s.label == Phase.ICTAL]
        assert len(ictal) == 19
        assert ictal[0].start_s == 9000.0
        assert ictal[-1].start_s == pytest.approx(9009.0)

    def test_preictal_span(self):
        # onset 9000: preictal span [9000-210, 9000-30] = [8790, 8970], 180 x 1 s
        rec = make_recording(fs=10, seconds=20000, annotations=[(9000.0, 9010.0)])
        segs = D.extract_segments(rec, [0], 1.0, interictal_count=0)
        pre = [s for s in segs if s.label == Phase.PREICTAL]
        assert len(pre) == 180
        assert pre[0].start_s == pytest.approx(8790.0)
        assert pre[-1].start_s == pytest.approx(8969.0)

    def test_interictal_clearance(self):
        rec = make_recording(fs=10, seconds=6 * 3600, annotations=[(3 * 3600.0, 3 * 3600.0 + 10)])
        regions = D.interictal_regions(rec.annotations, rec.duration_s, 2 * 3600.0)
        assert regions == [(0.0, 3600.0), (3 * 3600.0 + 10 + 2 * 3600.0, 6 * 3600.0)]
        segs = D.extract_segments(rec, [0], 1.0, interictal_count=50, seed=5)
        inter = [s for s in segs if s.label == Phase.INTERICTAL]
        assert len(inter) == 50
        for s in inter:
            assert s.start_s + 1.0 <= 3600.0 or s.start_s >= 3 * 3600.0 + 10 + 2 * 3600.0

    def test_interictal_draw_deterministic(self):
        rec = make_recording(fs=10, seconds=4000, annotations=[(3900.0, 3910.0)])
        a = D.extract_segments(rec, [0], 1.0, interictal_clearance_h=0.1, seed=9)
        b = D.extract_segments(rec, [0], 1.0, interictal_clearance_h=0.1, seed=9)
        assert [s.start_s for s in a] == [s.start_s for s in b]

    def test_segment_shapes(self):
        rec = make_recording(fs=10, seconds=4000, annotations=[(3900.0, 3910.0)])
        for s in D.extract_segments(rec, [1, 0], 2.0, interictal_clearance_h=0.1):
            assert s.data.shape == (2, 20)


class TestSegmentArchive:
    def test_round_trip(self, tmp_path):
        segs = [
            D.Segment(data=np.arange(8, dtype=np.float64).reshape(2, 4), label=Phase.ICTAL, start_s=1.5),
            D.Segment(data=np.ones((2, 4)), label=Phase.INTERICTAL, start_s=99.0),
        ]
        path = tmp_path / "s.bin"
        D.save_segments(segs, 64, path)
        loaded, fs = D.load_segments(path)
        assert fs == 64
        assert len(loaded) == 2
        assert loaded[0].label is Phase.ICTAL
        assert loaded[1].start_s == 99.0
        assert np.array_equal(loaded[0].data, segs[0].data)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"JUNKJUNKJUNK")
        with pytest.raises(BadHeader):
            D.load_segments(path)

    def test_rejects_empty(self, tmp_path):
        with pytest.raises(ValueError):
            D.save_segments([], 64, tmp_path / "s.bin")


class TestSynthGenerate:
    def test_deterministic(self):
        a = D.synth_generate(seed=5, hours=0.2, seizure_count=1, channels=3, fs=64)
        b = D.synth_generate(seed=5, hours=0.2, seizure_count=1, channels=3, fs=64)
        assert np.array_equal(a.samples, b.samples)
        assert a.annotations == b.annotations

    def test_no_seizures(self):
        rec = D.synth_generate(seed=1, hours=0.05, seizure_count=0, channels=2, fs=64)
        assert rec.annotations == []

    def test_annotation_count_and_validity(self):
        rec = D.synth_generate(seed=2, hours=1.0, seizure_count=4, channels=3, fs=64)
        assert len(rec.annotations) == 4

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            D.synth_generate(seed=0, hours=0.05, seizure_count=3, channels=2, fs=64)
