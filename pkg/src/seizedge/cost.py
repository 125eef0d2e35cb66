"""MAC-count model, memory estimates, and an instrumented multiply counter.

FC and Conv layer counts follow the closed-form estimates (max pooling and
activations are ignored); the LSTM term is our extension of the same scheme
and is flagged as such in reports.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import layers as L
from .models import ModelSpec, WeightBundle, infer_batch


def mac_fc(c_in: int, c_out: int) -> int:
    if c_in <= 0 or c_out <= 0:
        raise ValueError("dimensions must be positive")
    return c_in * c_out


def mac_conv(c_in: int, m_out: int, n_out: int, c_out: int, h: int, v: int) -> int:
    dims = (c_in, m_out, n_out, c_out, h, v)
    if min(dims) <= 0:
        raise ValueError("dimensions must be positive")
    return int(np.prod(dims, dtype=np.int64))


def mac_bilstm(d: int, hidden: int, t: int) -> int:
    """Gate matrix-vector multiplies per direction: 4*(d*H + H^2)*T, both directions."""
    return 2 * 4 * (d * hidden + hidden * hidden) * t


@dataclass
class LayerCost:
    name: str
    macs: int
    weight_count: int
    in_size: int
    out_size: int


@dataclass
class CostReport:
    layers: list
    activation_bytes: int

    @property
    def total_macs(self) -> int:
        return sum(c.macs for c in self.layers)

    @property
    def conv_macs(self) -> int:
        return sum(c.macs for c in self.layers if c.name.startswith("conv"))

    @property
    def fc_macs(self) -> int:
        return sum(c.macs for c in self.layers if c.name.startswith("fc"))

    def weight_bytes(self, precision: str) -> int:
        per = {"float32": 4, "int16": 2, "quantized": 1}[precision]
        return sum(c.weight_count for c in self.layers) * per

    def lines(self, precision: str = "quantized"):
        out = []
        for c in self.layers:
            out.append(f"macs_{c.name}={c.macs}")
        out.append(f"macs_conv_total={self.conv_macs}")
        out.append(f"macs_fc_total={self.fc_macs}")
        out.append(f"macs_total={self.total_macs}")
        out.append(f"weight_bytes_{precision}={self.weight_bytes(precision)}")
        out.append(f"activation_bytes={self.activation_bytes}")
        return out


def model_cost(spec: ModelSpec, precision: str = "quantized") -> CostReport:
    """Per-layer MAC and memory estimate for a built architecture."""
    layers = []
    counters = {"conv": 0, "fc": 0, "bilstm": 0}
    peak_pair = 0
    act_bytes = 2 if precision == "quantized" else 4
    for ls, (prev, nxt) in zip(spec.layers, spec.shape_chain()):
        in_size = int(np.prod(prev[1:]))
        out_size = int(np.prod(nxt[1:]))
        peak_pair = max(peak_pair, in_size + out_size)
        if ls.kind == "fc":
            counters["fc"] += 1
            macs = mac_fc(prev[1], ls.units)
            weight_count = ls.units * prev[1] + ls.units
            layers.append(LayerCost(f"fc{counters['fc']}", macs, weight_count, in_size, out_size))
        elif ls.kind == "conv":
            counters["conv"] += 1
            if ls.mode == "depthwise":
                # every kernel applied independently to every input channel
                macs = mac_conv(prev[1], prev[2], 1, ls.kernels, ls.kernel_len, 1)
                weight_count = ls.kernels * ls.kernel_len + ls.kernels
            else:
                macs = mac_conv(prev[1], prev[2], 1, ls.kernels, ls.kernel_len, 1)
                weight_count = ls.kernels * prev[1] * ls.kernel_len + ls.kernels
            layers.append(LayerCost(f"conv{counters['conv']}", macs, weight_count, in_size, out_size))
        elif ls.kind == "bilstm":
            counters["bilstm"] += 1
            d, t = prev[1], prev[2]
            macs = mac_bilstm(d, ls.hidden, t)
            weight_count = 2 * (4 * (ls.hidden * d + ls.hidden * ls.hidden + ls.hidden))
            layers.append(LayerCost("bilstm1", macs, weight_count, in_size, out_size))
    # peak live buffers under a two-buffer ping-pong schedule
    return CostReport(layers=layers, activation_bytes=peak_pair * act_bytes)


class MultiplyCounter:
    def __init__(self):
        self.count = 0


def instrumented_count(bundle: WeightBundle, segment: np.ndarray) -> int:
    """Exact multiplies in conv, fc, and LSTM gate products during inference.

    Runs the float forward pass with every dot product counted at the point it
    is computed; serves as the oracle for :func:`model_cost`.
    """
    counter = MultiplyCounter()
    x = np.asarray(segment, dtype=np.float64)
    for ls, lw in zip(bundle.spec.layers, bundle.weights):
        if ls.kind == "scale":
            x = L.scale_forward(x)
        elif ls.kind == "flatten":
            x = x.reshape(-1)
        elif ls.kind == "dropout":
            pass
        elif ls.kind == "fc":
            w = np.asarray(lw.w, dtype=np.float64)
            out = np.empty(w.shape[0])
            for j in range(w.shape[0]):
                out[j] = _counted_dot(w[j], x, counter) + lw.b[j]
            x = L.relu(out) if ls.activation == "relu" else out
        elif ls.kind == "conv":
            x = _counted_conv(x, lw, counter)
            if ls.activation == "relu":
                x = L.relu(x)
        elif ls.kind == "maxpool":
            x = L.maxpool1d(x, ls.pool)
        elif ls.kind == "bilstm":
            x = _counted_bilstm(x.T, lw[0], lw[1], counter)
    return counter.count


def _counted_dot(a, b, counter: MultiplyCounter) -> float:
    counter.count += len(a)
    return float(np.dot(a, b))


def _counted_conv(x, w: L.ConvWeights, counter: MultiplyCounter):
    kernels = np.asarray(w.kernels, dtype=np.float64)
    c_out, c_in_k, h = kernels.shape
    c_in, length = x.shape
    pl, pr = L.same_pad_widths(h)
    xp = np.pad(x, ((0, 0), (pl, pr)))
    win = np.lib.stride_tricks.sliding_window_view(xp, h, axis=-1)  # C x L x h
    if w.mode == "depthwise":
        out = np.empty((c_in * c_out, length))
        for c in range(c_in):
            for k in range(c_out):
                for l in range(length):
                    out[c * c_out + k, l] = _counted_dot(win[c, l], kernels[k, 0], counter)
                out[c * c_out + k] += w.biases[k]
    else:
        out = np.empty((c_out, length))
        flat = win.transpose(1, 0, 2).reshape(length, c_in * h)
        for k in range(c_out):
            kflat = kernels[k].reshape(-1)
            for l in range(length):
                out[k, l] = _counted_dot(kflat, flat[l], counter)
            out[k] += w.biases[k]
    return out


def _counted_bilstm(x, w_fwd, w_bwd, counter: MultiplyCounter):
    halves = []
    for w, seq in ((w_fwd, x), (w_bwd, x[::-1])):
        hidden = w.hidden
        h = np.zeros(hidden)
        c = np.zeros(hidden)
        w_h = np.asarray(w.w_h, dtype=np.float64)
        w_x = np.asarray(w.w_x, dtype=np.float64)
        b = np.asarray(w.b, dtype=np.float64)
        for step in range(seq.shape[0]):
            pre = np.empty((4, hidden))
            for g in range(4):
                for j in range(hidden):
                    pre[g, j] = (
                        _counted_dot(w_h[g, j], h, counter)
                        + _counted_dot(w_x[g, j], seq[step], counter)
                        + b[g, j]
                    )
            f, i, o = L.hard_sigmoid(pre[0]), L.hard_sigmoid(pre[1]), L.hard_sigmoid(pre[2])
            c = f * c + i * L.softsign(pre[3])
            h = o * L.softsign(c)
        halves.append(h)
    return np.concatenate(halves)


def bench_inference(bundle: WeightBundle, segments: np.ndarray, repetitions: int = 20):
    """Median and p95 wall-clock time per segment, warm-up excluded."""
    if repetitions < 10:
        raise ValueError("need at least 10 repetitions")
    segments = np.asarray(segments, dtype=np.float64)
    infer_batch(bundle, segments)  # warm-up
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        infer_batch(bundle, segments)
        times.append((time.perf_counter() - t0) / len(segments))
    times = np.array(times)
    return {
        "median_s": float(np.median(times)),
        "p95_s": float(np.percentile(times, 95)),
        "repetitions": repetitions,
    }
