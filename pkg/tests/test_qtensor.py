import numpy as np
import pytest
from hypothesis import given, strategies as st

from seizedge.errors import AccumulatorOverflow
from seizedge.qtensor import (
    ACT_QFORMAT,
    QFormat,
    QuantTensor,
    SaturationStats,
    dequantize,
    mac_dot,
    quantize,
    requantize,
    round_half_away,
    shift_round_half_away,
)


class TestQFormat:
    def test_basic_ranges(self):
        q = QFormat(8, 7)
        assert q.raw_min == -128
        assert q.raw_max == 127
        assert q.scale == 2.0**-7

    def test_rejects_bad_widths(self):
        with pytest.raises(ValueError):
            QFormat(12, 4)
        with pytest.raises(ValueError):
            QFormat(8, 8)
        with pytest.raises(ValueError):
            QFormat(8, -1)

    def test_activation_format(self):
        assert ACT_QFORMAT == QFormat(16, 12)


class TestRounding:
    def test_ties_away_from_zero(self):
        x = np.array([0.5, -0.5, 1.5, -1.5, 2.5, -2.5])
        assert round_half_away(x).tolist() == [1, -1, 2, -2, 3, -3]

    def test_plain_cases(self):
        assert round_half_away(np.array([0.49, -0.49, 1.2, -1.8])).tolist() == [0, 0, 1, -2]


class TestQuantize:
    def test_half_scale_in_q8_7(self):
        t = quantize(np.array([0.5]), QFormat(8, 7))
        assert t.data.tolist() == [64]
        assert dequantize(t).tolist() == [0.5]

    def test_saturates_and_counts(self):
        stats = SaturationStats()
        t = quantize(np.array([2.0, -2.0, 0.0]), QFormat(8, 7), stats)
        assert t.data.tolist() == [127, -128, 0]
        assert stats.count == 2

    def test_silent_without_stats(self):
        t = quantize(np.array([1000.0]), QFormat(8, 7))
        assert t.data.tolist() == [127]

    def test_rounds_half_away(self):
        # 0.00390625 * 128 = 0.5 exactly; ties go away from zero
        t = quantize(np.array([2**-8, -(2**-8)]), QFormat(8, 7))
        assert t.data.tolist() == [1, -1]

    def test_quant_tensor_range_checked(self):
        with pytest.raises(ValueError):
            QuantTensor(np.array([128]), QFormat(8, 7))

    @given(st.lists(st.floats(-0.99, 0.99), min_size=1, max_size=20))
    def test_round_trip_error_bounded(self, vals):
        q = QFormat(16, 12)
        t = quantize(np.array(vals), q)
        err = np.abs(dequantize(t) - np.array(vals))
        assert err.max() <= 0.5 * q.scale + 1e-15


class TestMacDot:
    def test_exact_integer_dot(self):
        a = QuantTensor(np.array([10, -20, 30]), QFormat(8, 4))
        b = QuantTensor(np.array([1, 2, 3]), QFormat(8, 2))
        acc, frac = mac_dot(a, b)
        assert acc == 10 - 40 + 90
        assert frac == 6

    def test_overflow_raises(self):
        n = 600
        a = QuantTensor(np.full(n, 127), QFormat(8, 0))
        b = QuantTensor(np.full(n, 32767), QFormat(16, 0))
        # 600 * 127 * 32767 = 2,496,845,400 > 2^31 - 1
        with pytest.raises(AccumulatorOverflow):
            mac_dot(a, b)

    def test_boundary_not_overflow(self):
        a = QuantTensor(np.array([2**15]), QFormat(32, 0))
        b = QuantTensor(np.array([2**15]), QFormat(32, 0))
        acc, _ = mac_dot(a, b)  # 2^30 fits
        assert acc == 2**30

    def test_shape_mismatch(self):
        a = QuantTensor(np.array([1, 2]), QFormat(8, 0))
        b = QuantTensor(np.array([1]), QFormat(8, 0))
        with pytest.raises(ValueError):
            mac_dot(a, b)


class TestRequantize:
    def test_shift_rounds_half_away(self):
        assert shift_round_half_away(np.array([3]), 1).tolist() == [2]
        assert shift_round_half_away(np.array([-3]), 1).tolist() == [-2]
        assert shift_round_half_away(np.array([5]), 2).tolist() == [1]
        assert shift_round_half_away(np.array([6]), 2).tolist() == [2]

    def test_large_accumulator_saturates(self):
        stats = SaturationStats()
        out = requantize(np.array([100000]), 14, QFormat(8, 7), stats)
        assert out.tolist() == [127]
        assert stats.count == 1

    def test_exact_when_in_range(self):
        # 256 at frac 14 is 0.015625; at frac 7 that is raw 2
        out = requantize(np.array([256]), 14, QFormat(8, 7))
        assert out.tolist() == [2]

    def test_rejects_upshift(self):
        with pytest.raises(ValueError):
            requantize(np.array([1]), 4, QFormat(16, 12))

    @given(
        st.integers(-(2**31), 2**31 - 1),
        st.integers(12, 24),
    )
    def test_matches_float_reference(self, acc, source_frac):
        target = QFormat(16, 12)
        got = int(requantize(np.array([acc]), source_frac, target)[0])
        ref = float(acc) / (1 << source_frac)
        ref_raw = float(round_half_away(np.array([ref * (1 << target.frac_bits)]))[0])
        ref_raw = min(max(ref_raw, target.raw_min), target.raw_max)
        assert got == int(ref_raw)
