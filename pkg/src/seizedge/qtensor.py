"""Fixed-point formats, quantization, and saturating multiply-accumulate primitives.

All quantized computation in the package runs on plain integer numpy arrays
tagged with a :class:`QFormat`. Rounding is half-away-from-zero everywhere;
saturation is silent but counted through an optional :class:`SaturationStats`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AccumulatorOverflow

INT32_MIN = -(2**31)
INT32_MAX = 2**31 - 1


@dataclass(frozen=True)
class QFormat:
    """Signed fixed-point format: ``total_bits`` wide, ``frac_bits`` fractional."""

    total_bits: int
    frac_bits: int

    def __post_init__(self):
        if self.total_bits not in (8, 16, 32):
            raise ValueError(f"total_bits must be 8, 16, or 32, got {self.total_bits}")
        if not 0 <= self.frac_bits < self.total_bits:
            raise ValueError(
                f"frac_bits must be in [0, {self.total_bits}), got {self.frac_bits}"
            )

    @property
    def raw_min(self) -> int:
        return -(2 ** (self.total_bits - 1))

    @property
    def raw_max(self) -> int:
        return 2 ** (self.total_bits - 1) - 1

    @property
    def scale(self) -> float:
        """Real value of one raw unit, 2^-frac_bits."""
        return 2.0**-self.frac_bits


# Activation format used throughout quantized inference: inputs are scaled to
# [-1, 1], so 3 integer bits of headroom cover intermediate growth.
ACT_QFORMAT = QFormat(16, 12)


@dataclass
class SaturationStats:
    """Mutable counter of silently saturated values."""

    count: int = 0

    def add(self, n: int):
        self.count += int(n)


@dataclass(frozen=True)
class QuantTensor:
    """Integer-valued tensor with an attached fixed-point format.

    ``data`` is an int64 array holding raw values; every entry lies within the
    representable range of ``q``.
    """

    data: np.ndarray
    q: QFormat

    def __post_init__(self):
        object.__setattr__(self, "data", np.asarray(self.data, dtype=np.int64))
        lo, hi = self.q.raw_min, self.q.raw_max
        if self.data.size and (self.data.min() < lo or self.data.max() > hi):
            raise ValueError(f"raw values out of range for Q({self.q.total_bits},{self.q.frac_bits})")

    @property
    def shape(self):
        return self.data.shape


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties away from zero (numpy rounds ties to even)."""
    x = np.asarray(x)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def quantize(t: np.ndarray, q: QFormat, stats: SaturationStats | None = None) -> QuantTensor:
    """Quantize a float array to raw integers: round(x * 2^frac_bits), saturated."""
    t = np.asarray(t, dtype=np.float64)
    raw = round_half_away(t * (1 << q.frac_bits)).astype(np.int64)
    clipped = np.clip(raw, q.raw_min, q.raw_max)
    if stats is not None:
        stats.add(np.count_nonzero(clipped != raw))
    return QuantTensor(clipped, q)


def dequantize(t: QuantTensor) -> np.ndarray:
    """Map raw r back to r * 2^-frac_bits as float64."""
    return t.data.astype(np.float64) * t.q.scale


def mac_dot(a: QuantTensor, b: QuantTensor) -> tuple[int, int]:
    """Exact integer dot product of two equal-length quantized vectors.

    Returns ``(raw_acc, acc_frac_bits)`` where the accumulator's fixed-point
    format has ``frac_bits = a.frac_bits + b.frac_bits``. Raises
    :class:`AccumulatorOverflow` if the exact sum leaves the 32-bit signed range.
    """
    if a.data.shape != b.data.shape:
        raise ValueError("mac_dot operands must have equal shapes")
    acc = int(np.dot(a.data, b.data))
    if not INT32_MIN <= acc <= INT32_MAX:
        raise AccumulatorOverflow(f"accumulator {acc} outside 32-bit signed range")
    return acc, a.q.frac_bits + b.q.frac_bits


def shift_round_half_away(raw, shift: int):
    """Arithmetic right shift with half-away-from-zero rounding applied first.

    Works elementwise on integer arrays (or python ints) for shift >= 0.
    """
    if shift == 0:
        return raw
    raw = np.asarray(raw, dtype=np.int64)
    mag = (np.abs(raw) + (1 << (shift - 1))) >> shift
    return np.where(raw < 0, -mag, mag)


def requantize(acc, source_frac: int, target: QFormat, stats: SaturationStats | None = None):
    """Rescale a raw accumulator to a narrower format by rounding shift + saturation.

    ``acc`` may be a scalar or integer array; returns int64 of the same shape.
    """
    if source_frac < target.frac_bits:
        raise ValueError("requantize requires source frac_bits >= target frac_bits")
    shifted = shift_round_half_away(np.asarray(acc, dtype=np.int64), source_frac - target.frac_bits)
    clipped = np.clip(shifted, target.raw_min, target.raw_max)
    if stats is not None:
        stats.add(np.count_nonzero(clipped != shifted))
    return clipped
