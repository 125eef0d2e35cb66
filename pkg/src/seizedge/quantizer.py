"""Float-to-8-bit bundle conversion and quantization degradation measurement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L
from .errors import UnsupportedFamily
from .labels import Phase
from .models import WeightBundle, bundle_from_tensors, infer_batch, iter_tensors
from .qtensor import ACT_QFORMAT, QFormat, QuantTensor, dequantize, quantize


def choose_qformat(t: np.ndarray, total_bits: int = 8) -> QFormat:
    """Largest frac_bits (clamped to total_bits-1) that keeps max|x| unsaturated."""
    t = np.asarray(t, dtype=np.float64)
    peak = float(np.abs(t).max()) if t.size else 0.0
    raw_max = 2 ** (total_bits - 1) - 1
    frac = total_bits - 1
    # Same rounding as quantize() so the chosen format can never saturate.
    while frac > 0 and np.floor(peak * (1 << frac) + 0.5) > raw_max:
        frac -= 1
    return QFormat(total_bits, frac)


def quantize_model(bundle: WeightBundle) -> WeightBundle:
    """Quantize every coefficient tensor to 8 bits with its own per-tensor scale."""
    if bundle.precision != "float32":
        raise ValueError("quantize_model expects a float bundle")
    tensors = []
    for arr in iter_tensors(bundle):
        tensors.append(quantize(np.asarray(arr, dtype=np.float64), choose_qformat(arr)))
    return bundle_from_tensors(bundle.spec, tensors, "quantized")


def dequantize_model(bundle: WeightBundle) -> WeightBundle:
    """Quantized bundle -> float bundle with the exact represented values."""
    if bundle.precision != "quantized":
        raise ValueError("dequantize_model expects a quantized bundle")
    tensors = [dequantize(t).astype(np.float32) for t in iter_tensors(bundle)]
    return bundle_from_tensors(bundle.spec, tensors, "float32")


def _layer_peak_preacts(bundle: WeightBundle, x: np.ndarray) -> list:
    """Max |pre-activation| of every weighted layer over a calibration batch."""
    peaks = []
    for ls, lw in zip(bundle.spec.layers, bundle.weights):
        if ls.kind == "scale":
            x = L.scale_forward(x)
        elif ls.kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        elif ls.kind == "dropout":
            pass
        elif ls.kind == "maxpool":
            x = L.maxpool1d(x, ls.pool)
        elif ls.kind == "fc":
            x = L.fc_forward(x, lw, activation="none")
            peaks.append(float(np.abs(x).max()))
            if ls.activation == "relu":
                x = L.relu(x)
        elif ls.kind == "conv":
            x = L.conv1d_batch(x, lw)
            peaks.append(float(np.abs(x).max()))
            if ls.activation == "relu":
                x = L.relu(x)
    return peaks


def equalize_activation_range(
    bundle: WeightBundle, segments, margin: float = 0.9
) -> WeightBundle:
    """Rescale a ReLU network so activations fit the fixed activation format.

    ReLU, max-pool, and linear layers commute with multiplication by a
    positive constant, so scaling each weighted layer's weights by a
    compensating factor (and its biases by the cumulative factor) yields a
    network with identical argmax decisions whose pre-activations stay within
    ``margin`` of the activation format's range on the calibration segments.
    Families with saturating activations (the bi-LSTM) cannot be rescaled
    this way and are rejected.
    """
    if bundle.precision != "float32":
        raise ValueError("equalize_activation_range expects a float bundle")
    if not 0.0 < margin <= 1.0:
        raise ValueError("margin must be in (0, 1]")
    if any(ls.kind == "bilstm" for ls in bundle.spec.layers):
        raise UnsupportedFamily("activation equalization requires a ReLU-only network")
    if isinstance(segments, (list, tuple)):
        x = np.stack([np.asarray(s.data, dtype=np.float64) for s in segments])
    else:
        x = np.asarray(segments, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty calibration set")
    limit = margin * ACT_QFORMAT.raw_max * ACT_QFORMAT.scale
    peaks = iter(_layer_peak_preacts(bundle, x))
    tensors = []
    running = 1.0  # cumulative output scale of the network built so far
    for ls, lw in zip(bundle.spec.layers, bundle.weights):
        if ls.kind not in ("fc", "conv"):
            continue
        peak = next(peaks)
        target = min(1.0, limit / peak) if peak > 0 else 1.0
        if ls.kind == "fc":
            w, b = lw.w, lw.b
        else:
            w, b = lw.kernels, lw.biases
        tensors.append((np.asarray(w, np.float64) * (target / running)).astype(np.float32))
        tensors.append((np.asarray(b, np.float64) * target).astype(np.float32))
        running = target
    return bundle_from_tensors(bundle.spec, tensors, "float32")


@dataclass
class DegradationReport:
    accuracy_float: float
    accuracy_quant: float
    delta: float
    agreement: float
    n_segments: int

    def lines(self):
        return [
            f"accuracy_float={self.accuracy_float:.6f}",
            f"accuracy_quant={self.accuracy_quant:.6f}",
            f"delta={self.delta:.6f}",
            f"agreement={self.agreement:.6f}",
            f"n_segments={self.n_segments}",
        ]


def degradation_report(
    float_bundle: WeightBundle,
    quant_bundle: WeightBundle,
    segments,
    labels=None,
    batch_size: int = 256,
) -> DegradationReport:
    """Run both bundles over labeled segments and report paired accuracy.

    ``segments`` may be a list of :class:`~seizedge.data.Segment` (labels taken
    from them) or an array [B x K x N] with ``labels`` given separately.
    """
    if labels is None:
        data = np.stack([s.data for s in segments])
        labels = np.array([int(s.label) for s in segments])
    else:
        data = np.asarray(segments)
        labels = np.asarray(labels)
    if float_bundle.spec != quant_bundle.spec:
        raise ValueError("bundles must share a spec")
    if len(data) == 0:
        raise ValueError("empty segment set")
    pf, pq = [], []
    for start in range(0, len(data), batch_size):
        chunk = data[start : start + batch_size]
        pf.append(np.argmax(infer_batch(float_bundle, chunk), axis=1))
        pq.append(np.argmax(infer_batch(quant_bundle, chunk), axis=1))
    pred_f = np.concatenate(pf)
    pred_q = np.concatenate(pq)
    acc_f = float(np.mean(pred_f == labels))
    acc_q = float(np.mean(pred_q == labels))
    return DegradationReport(
        accuracy_float=acc_f,
        accuracy_quant=acc_q,
        delta=acc_f - acc_q,
        agreement=float(np.mean(pred_f == pred_q)),
        n_segments=len(data),
    )
