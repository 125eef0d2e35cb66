"""Forward computation of every layer type used by the three model families.

Each layer exists in two arithmetic flavors: a float path operating on
float64 numpy arrays, and a quantized path operating on raw integer arrays in
:data:`~seizedge.qtensor.ACT_QFORMAT` with 8-bit coefficient tensors.
Weight containers are shared; their fields hold either float arrays or
:class:`~seizedge.qtensor.QuantTensor` depending on the bundle precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AccumulatorOverflow, DimensionMismatch
from .labels import Phase
from .qtensor import (
    ACT_QFORMAT,
    INT32_MAX,
    INT32_MIN,
    QFormat,
    QuantTensor,
    SaturationStats,
    requantize,
    round_half_away,
)

# 32-bit container at the activation scale, used for LSTM pre-activation sums
# so that aligning differently scaled partial products cannot overflow.
QFORMAT_WIDE = QFormat(32, ACT_QFORMAT.frac_bits)

# ---------------------------------------------------------------------------
# Weight containers


@dataclass
class FcWeights:
    """Fully-connected layer: w is [out x in], b is [out]."""

    w: object
    b: object


@dataclass
class ConvWeights:
    """1-D convolution kernels [C_out x C_in x h] plus per-kernel biases.

    In depthwise mode the C_in axis is 1 and every kernel is applied to every
    input channel independently (output maps ordered channel-major:
    map index = channel * n_kernels + kernel).
    """

    kernels: object
    biases: object
    mode: str = "standard"


@dataclass
class LstmCellWeights:
    """LSTM cell weights stacked over the gate axis in order (f, i, o, c).

    w_x: [4 x hidden x in], w_h: [4 x hidden x hidden], b: [4 x hidden].
    """

    w_x: object
    w_h: object
    b: object

    @property
    def hidden(self) -> int:
        arr = self.b.data if isinstance(self.b, QuantTensor) else self.b
        return arr.shape[1]


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray


# ---------------------------------------------------------------------------
# Float layers


def scale_forward(segment: np.ndarray) -> np.ndarray:
    """Remove each channel's DC offset and scale by max |deviation| into [-1, 1].

    Channels with zero dynamic range map to all zeros.
    """
    segment = np.asarray(segment, dtype=np.float64)
    centered = segment - segment.mean(axis=-1, keepdims=True)
    span = np.abs(centered).max(axis=-1, keepdims=True)
    return np.divide(centered, span, out=np.zeros_like(centered), where=span > 0)


def relu(x):
    return np.maximum(0, x)


def hard_sigmoid(x):
    """Gate activation max{0, min{1, x/5 + 1/2}}."""
    return np.clip(np.asarray(x) / 5.0 + 0.5, 0.0, 1.0)


def softsign(x):
    """State activation x / (1 + |x|)."""
    x = np.asarray(x)
    return x / (1.0 + np.abs(x))


def fc_forward(x: np.ndarray, w: FcWeights, activation: str = "none") -> np.ndarray:
    """y = f(W x + b). Accepts a single vector [in] or a batch [B x in]."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != w.w.shape[1]:
        raise DimensionMismatch(f"fc input {x.shape[-1]} != weight in-dim {w.w.shape[1]}")
    y = x @ w.w.T + w.b
    if activation == "relu":
        y = relu(y)
    elif activation != "none":
        raise ValueError(f"unknown activation {activation!r}")
    return y


def same_pad_widths(h: int) -> tuple[int, int]:
    """'Same' padding split for stride 1: even kernels favor the left side."""
    if h % 2 == 1:
        return (h - 1) // 2, (h - 1) // 2
    return h // 2, h // 2 - 1


def conv1d_batch(x: np.ndarray, w: ConvWeights) -> np.ndarray:
    """Cross-correlation with 'same' padding, stride 1, over a batch [B x C x L]."""
    kernels = w.kernels
    c_out, c_in_k, h = kernels.shape
    b, c_in, length = x.shape
    pl, pr = same_pad_widths(h)
    xp = np.pad(x, ((0, 0), (0, 0), (pl, pr)))
    win = np.lib.stride_tricks.sliding_window_view(xp, h, axis=-1)  # B x C x L x h
    if w.mode == "depthwise":
        if c_in_k != 1:
            raise DimensionMismatch("depthwise kernels must have C_in axis of 1")
        out = np.einsum("bclh,kh->bckl", win, kernels[:, 0, :])
        out = out.reshape(b, c_in * c_out, length)
        out = out + np.tile(w.biases, c_in)[None, :, None]
    else:
        if c_in_k != c_in:
            raise DimensionMismatch(f"conv input channels {c_in} != kernel C_in {c_in_k}")
        out = np.einsum("bclh,kch->bkl", win, kernels)
        out = out + w.biases[None, :, None]
    return out


def conv1d_forward(x: np.ndarray, w: ConvWeights) -> np.ndarray:
    """Single-segment convolution: input [C_in x L] -> [C_out' x L]."""
    x = np.asarray(x, dtype=np.float64)
    return conv1d_batch(x[None], w)[0]


def maxpool1d(x: np.ndarray, pool: int = 4) -> np.ndarray:
    """Max over disjoint length-`pool` blocks along the last axis; remainder dropped."""
    x = np.asarray(x)
    length = x.shape[-1]
    blocks = length // pool
    trimmed = x[..., : blocks * pool]
    return trimmed.reshape(*x.shape[:-1], blocks, pool).max(axis=-1)


def lstm_cell_step(x: np.ndarray, prev: LstmState, w: LstmCellWeights) -> LstmState:
    """One LSTM time step with hard-sigmoid gates and softsign state activation."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    pre = w.w_h @ prev.h + w.w_x @ x + w.b  # 4 x hidden, gate order f,i,o,c
    f, i, o = hard_sigmoid(pre[0]), hard_sigmoid(pre[1]), hard_sigmoid(pre[2])
    c_tilde = softsign(pre[3])
    c = f * prev.c + i * c_tilde
    h = o * softsign(c)
    return LstmState(h=h, c=c)


def _lstm_run_batch(x: np.ndarray, w: LstmCellWeights) -> np.ndarray:
    """Run a batch [B x T x d] through one direction; returns final hidden [B x H]."""
    b, t, _ = x.shape
    hidden = w.hidden
    h = np.zeros((b, hidden))
    c = np.zeros((b, hidden))
    for step in range(t):
        pre = (
            np.einsum("ghk,bk->bgh", w.w_h, h)
            + np.einsum("ghd,bd->bgh", w.w_x, x[:, step, :])
            + w.b
        )
        f, i, o = hard_sigmoid(pre[:, 0]), hard_sigmoid(pre[:, 1]), hard_sigmoid(pre[:, 2])
        c = f * c + i * softsign(pre[:, 3])
        h = o * softsign(c)
    return h


def bilstm_batch(x: np.ndarray, w_fwd: LstmCellWeights, w_bwd: LstmCellWeights) -> np.ndarray:
    """Bidirectional pass over [B x T x d]; concatenated final hidden states [B x 2H]."""
    fwd = _lstm_run_batch(x, w_fwd)
    bwd = _lstm_run_batch(x[:, ::-1, :], w_bwd)
    return np.concatenate([fwd, bwd], axis=1)


def bilstm_forward(x: np.ndarray, w_fwd: LstmCellWeights, w_bwd: LstmCellWeights) -> np.ndarray:
    """Single sequence [T x d] -> concatenation of the two final hidden states."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch("bilstm input must be [T x d]")
    return bilstm_batch(x[None], w_fwd, w_bwd)[0]


def argmax_classify(logits: np.ndarray) -> Phase:
    """Highest-activation class; ties break to the lowest index (Ictal first)."""
    logits = np.asarray(logits)
    if logits.shape[-1] != 3:
        raise DimensionMismatch("classifier expects 3 logits")
    return Phase(int(np.argmax(logits)))


# ---------------------------------------------------------------------------
# Quantized layers. Raw activation arrays are int64 carrying ACT_QFORMAT
# values; coefficient tensors are 8-bit QuantTensors.


def _check_acc32(acc: np.ndarray):
    if acc.size and (acc.max() > INT32_MAX or acc.min() < INT32_MIN):
        raise AccumulatorOverflow("32-bit accumulator range exceeded")


def _bias_to_acc(b: QuantTensor, acc_frac: int) -> np.ndarray:
    return b.data << (acc_frac - b.q.frac_bits)


def qfc_forward(
    x_raw: np.ndarray,
    w: FcWeights,
    activation: str = "none",
    stats: SaturationStats | None = None,
) -> np.ndarray:
    """Quantized FC layer over a batch [B x in] of ACT_QFORMAT raw values."""
    acc_frac = ACT_QFORMAT.frac_bits + w.w.q.frac_bits
    acc = x_raw @ w.w.data.T + _bias_to_acc(w.b, acc_frac)
    _check_acc32(acc)
    if activation == "relu":
        acc = np.maximum(acc, 0)
    return requantize(acc, acc_frac, ACT_QFORMAT, stats)


def qconv1d_forward(
    x_raw: np.ndarray,
    w: ConvWeights,
    stats: SaturationStats | None = None,
) -> np.ndarray:
    """Quantized 'same' convolution over a batch [B x C x L] of raw activations."""
    kernels = w.kernels
    c_out, c_in_k, h = kernels.data.shape
    b, c_in, length = x_raw.shape
    acc_frac = ACT_QFORMAT.frac_bits + kernels.q.frac_bits
    pl, pr = same_pad_widths(h)
    xp = np.pad(x_raw, ((0, 0), (0, 0), (pl, pr)))
    win = np.lib.stride_tricks.sliding_window_view(xp, h, axis=-1)
    if w.mode == "depthwise":
        out = np.einsum("bclh,kh->bckl", win, kernels.data[:, 0, :])
        out = out.reshape(b, c_in * c_out, length)
        out = out + np.tile(_bias_to_acc(w.biases, acc_frac), c_in)[None, :, None]
    else:
        out = np.einsum("bclh,kch->bkl", win, kernels.data)
        out = out + _bias_to_acc(w.biases, acc_frac)[None, :, None]
    _check_acc32(out)
    return requantize(out, acc_frac, ACT_QFORMAT, stats)


def qrelu(x_raw: np.ndarray) -> np.ndarray:
    return np.maximum(x_raw, 0)


def qhard_sigmoid(x_raw: np.ndarray) -> np.ndarray:
    """Gate activation on ACT_QFORMAT raw values; output in [0, 1] (raw 0..4096)."""
    one = 1 << ACT_QFORMAT.frac_bits
    fifth = round_half_away(np.asarray(x_raw, dtype=np.float64) / 5.0).astype(np.int64)
    return np.clip(fifth + one // 2, 0, one)


def qsoftsign(x_raw: np.ndarray) -> np.ndarray:
    """State activation on ACT_QFORMAT raw values: x / (1 + |x|) in fixed point."""
    one = 1 << ACT_QFORMAT.frac_bits
    x = np.asarray(x_raw, dtype=np.float64)
    return round_half_away(x * one / (one + np.abs(x))).astype(np.int64)


def qlstm_batch(
    x_raw: np.ndarray,
    w_fwd: LstmCellWeights,
    w_bwd: LstmCellWeights,
    stats: SaturationStats | None = None,
) -> np.ndarray:
    """Quantized bidirectional LSTM over raw [B x T x d]; returns raw [B x 2H]."""
    fwd = _qlstm_run(x_raw, w_fwd, stats)
    bwd = _qlstm_run(x_raw[:, ::-1, :], w_bwd, stats)
    return np.concatenate([fwd, bwd], axis=1)


def _qlstm_run(x_raw: np.ndarray, w: LstmCellWeights, stats: SaturationStats | None) -> np.ndarray:
    b, t, _ = x_raw.shape
    hidden = w.hidden
    frac = ACT_QFORMAT.frac_bits
    wide = ACT_QFORMAT  # pre-activations and states kept in the activation format
    h = np.zeros((b, hidden), dtype=np.int64)
    c = np.zeros((b, hidden), dtype=np.int64)
    for step in range(t):
        acc_h = np.einsum("ghk,bk->bgh", w.w_h.data, h)
        acc_x = np.einsum("ghd,bd->bgh", w.w_x.data, x_raw[:, step, :])
        _check_acc32(acc_h)
        _check_acc32(acc_x)
        pre = (
            requantize(acc_h, frac + w.w_h.q.frac_bits, QFORMAT_WIDE, stats)
            + requantize(acc_x, frac + w.w_x.q.frac_bits, QFORMAT_WIDE, stats)
            + (w.b.data << (frac - w.b.q.frac_bits))
        )
        f, i, o = qhard_sigmoid(pre[:, 0]), qhard_sigmoid(pre[:, 1]), qhard_sigmoid(pre[:, 2])
        c_tilde = qsoftsign(pre[:, 3])
        c_acc = f * c + i * c_tilde  # frac 2*frac
        c = requantize(c_acc, 2 * frac, wide, stats)
        h_acc = o * qsoftsign(c)
        h = requantize(h_acc, 2 * frac, wide, stats)
    return h


def qmaxpool1d(x_raw: np.ndarray, pool: int = 4) -> np.ndarray:
    return maxpool1d(x_raw, pool)


def quantize_activation(x: np.ndarray, stats: SaturationStats | None = None) -> np.ndarray:
    """Float activations -> ACT_QFORMAT raw int64 array."""
    raw = round_half_away(np.asarray(x, dtype=np.float64) * (1 << ACT_QFORMAT.frac_bits)).astype(np.int64)
    clipped = np.clip(raw, ACT_QFORMAT.raw_min, ACT_QFORMAT.raw_max)
    if stats is not None:
        stats.add(np.count_nonzero(clipped != raw))
    return clipped


def dequantize_activation(x_raw: np.ndarray) -> np.ndarray:
    return np.asarray(x_raw, dtype=np.float64) * ACT_QFORMAT.scale
