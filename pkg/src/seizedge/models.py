"""Model families, segment inference, and the bit-exact weight file format."""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from .errors import (
    BadMagic,
    ChecksumMismatch,
    DimensionMismatch,
    ShapeMismatch,
    TruncatedFile,
    UnsupportedVersion,
)
from .labels import Phase
from .qtensor import QFormat, QuantTensor, SaturationStats

FAMILIES = ("DNN", "CNN", "LSTM")


@dataclass(frozen=True)
class LayerSpec:
    """One layer descriptor; unused fields stay at their defaults."""

    kind: str
    units: int = 0
    activation: str = "none"
    rate: float = 0.0
    kernels: int = 0
    kernel_len: int = 0
    mode: str = "standard"
    pool: int = 0
    hidden: int = 0


@dataclass(frozen=True)
class ModelSpec:
    """Ordered layer graph for one of the three families."""

    family: str
    fs: int
    channels: int
    samples: int
    layers: tuple

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        object.__setattr__(self, "layers", tuple(self.layers))
        self.shape_chain()  # validates dimension consistency

    def shape_chain(self):
        """Input/output shape of every layer; raises on inconsistency.

        Shapes are ('mat', channels, length) or ('vec', size) tuples.
        """
        shape = ("mat", self.channels, self.samples)
        chain = []
        for ls in self.layers:
            prev = shape
            if ls.kind in ("scale", "dropout"):
                pass
            elif ls.kind == "flatten":
                if shape[0] == "mat":
                    shape = ("vec", shape[1] * shape[2])
            elif ls.kind == "fc":
                if shape[0] != "vec":
                    raise DimensionMismatch("fc layer requires a flat input")
                shape = ("vec", ls.units)
            elif ls.kind == "conv":
                if shape[0] != "mat":
                    raise DimensionMismatch("conv layer requires a [C x L] input")
                c = shape[1] * ls.kernels if ls.mode == "depthwise" else ls.kernels
                shape = ("mat", c, shape[2])
            elif ls.kind == "maxpool":
                if shape[0] != "mat" or shape[2] < ls.pool:
                    raise DimensionMismatch("input too short for maxpool stage")
                shape = ("mat", shape[1], shape[2] // ls.pool)
            elif ls.kind == "bilstm":
                if shape[0] != "mat":
                    raise DimensionMismatch("bilstm layer requires a [C x L] input")
                shape = ("vec", 2 * ls.hidden)
            else:
                raise ValueError(f"unknown layer kind {ls.kind!r}")
            chain.append((prev, shape))
        if shape != ("vec", 3):
            raise DimensionMismatch(f"final layer must output 3 classes, got {shape}")
        return chain

    def tensor_shapes(self):
        """Canonical (layer_index, shape) list of every trainable tensor."""
        out = []
        for idx, (ls, (prev, _)) in enumerate(zip(self.layers, self.shape_chain())):
            if ls.kind == "fc":
                out.append((idx, (ls.units, prev[1])))
                out.append((idx, (ls.units,)))
            elif ls.kind == "conv":
                c_in_k = 1 if ls.mode == "depthwise" else prev[1]
                out.append((idx, (ls.kernels, c_in_k, ls.kernel_len)))
                out.append((idx, (ls.kernels,)))
            elif ls.kind == "bilstm":
                d = prev[1]
                for _ in range(2):  # forward then backward direction
                    out.append((idx, (4, ls.hidden, d)))
                    out.append((idx, (4, ls.hidden, ls.hidden)))
                    out.append((idx, (4, ls.hidden)))
        return out


@dataclass
class WeightBundle:
    """A ModelSpec plus its coefficients, float32 or 8-bit quantized.

    ``weights`` is parallel to ``spec.layers``; entries are None for layers
    without coefficients, FcWeights / ConvWeights for fc and conv layers, and
    a (forward, backward) pair of LstmCellWeights for bilstm layers.
    """

    spec: ModelSpec
    weights: list
    precision: str = "float32"


def build_dnn(fs: int, channels: int = 5, seg_seconds: float = 0.5) -> ModelSpec:
    """Five pyramid-shaped FC layers; first width N = fs * seg_seconds."""
    n = _samples(fs, seg_seconds)
    widths = [n, n // 2, n // 4, n // 8]
    layers = [LayerSpec("scale"), LayerSpec("flatten"), LayerSpec("dropout", rate=0.5)]
    layers.append(LayerSpec("fc", units=widths[0], activation="relu"))
    layers.append(LayerSpec("dropout", rate=0.5))
    for width in widths[1:]:
        layers.append(LayerSpec("fc", units=width, activation="relu"))
    layers.append(LayerSpec("fc", units=3))
    return ModelSpec("DNN", fs, channels, n, layers)


def build_cnn(fs: int, channels: int = 9, seg_seconds: float = 1.0) -> ModelSpec:
    """Depthwise front end, two standard conv stages, small FC head."""
    n = _samples(fs, seg_seconds)
    layers = [
        LayerSpec("scale"),
        LayerSpec("conv", kernels=4, kernel_len=fs // 2, mode="depthwise", activation="relu"),
        LayerSpec("maxpool", pool=4),
        LayerSpec("dropout", rate=0.25),
        LayerSpec("conv", kernels=4, kernel_len=fs // 2, activation="relu"),
        LayerSpec("maxpool", pool=4),
        LayerSpec("dropout", rate=0.25),
        LayerSpec("conv", kernels=2, kernel_len=fs // 4, activation="relu"),
        LayerSpec("maxpool", pool=4),
        LayerSpec("flatten"),
        LayerSpec("fc", units=32, activation="relu"),
        LayerSpec("fc", units=16, activation="relu"),
        LayerSpec("fc", units=3),
    ]
    return ModelSpec("CNN", fs, channels, n, layers)


def build_lstm(fs: int, channels: int = 9, seg_seconds: float = 2.0) -> ModelSpec:
    """Single-kernel conv front end feeding a bidirectional LSTM of 128 cells."""
    n = _samples(fs, seg_seconds)
    layers = [
        LayerSpec("scale"),
        LayerSpec("conv", kernels=1, kernel_len=fs // 2, activation="relu"),
        LayerSpec("maxpool", pool=4),
        LayerSpec("dropout", rate=0.5),
        LayerSpec("bilstm", hidden=128),
        LayerSpec("fc", units=64, activation="relu"),
        LayerSpec("fc", units=3),
    ]
    return ModelSpec("LSTM", fs, channels, n, layers)


def build_family(family: str, fs: int, channels: int | None = None, seg_seconds: float | None = None) -> ModelSpec:
    builders = {
        "DNN": (build_dnn, 5, 0.5),
        "CNN": (build_cnn, 9, 1.0),
        "LSTM": (build_lstm, 9, 2.0),
    }
    build, def_k, def_s = builders[family.upper()]
    return build(fs, channels or def_k, seg_seconds or def_s)


def _samples(fs: int, seg_seconds: float) -> int:
    n = fs * seg_seconds
    if abs(n - round(n)) > 1e-9:
        raise ValueError(f"fs * seg_seconds must be integral, got {n}")
    return int(round(n))


# ---------------------------------------------------------------------------
# Weight construction


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def random_bundle(spec: ModelSpec, seed: int = 0) -> WeightBundle:
    """Uniform Glorot-bounded float32 initialization; biases start at zero."""
    rng = np.random.default_rng(seed)
    weights = []
    for ls, (prev, nxt) in zip(spec.layers, spec.shape_chain()):
        if ls.kind == "fc":
            r = glorot_bound(prev[1], ls.units)
            weights.append(L.FcWeights(
                w=rng.uniform(-r, r, size=(ls.units, prev[1])).astype(np.float32),
                b=np.zeros(ls.units, dtype=np.float32),
            ))
        elif ls.kind == "conv":
            c_in_k = 1 if ls.mode == "depthwise" else prev[1]
            r = glorot_bound(c_in_k * ls.kernel_len, ls.kernels)
            weights.append(L.ConvWeights(
                kernels=rng.uniform(-r, r, size=(ls.kernels, c_in_k, ls.kernel_len)).astype(np.float32),
                biases=np.zeros(ls.kernels, dtype=np.float32),
                mode=ls.mode,
            ))
        elif ls.kind == "bilstm":
            d = prev[1]
            weights.append(tuple(_random_lstm(rng, ls.hidden, d) for _ in range(2)))
        else:
            weights.append(None)
    return WeightBundle(spec=spec, weights=weights, precision="float32")


def _random_lstm(rng, hidden: int, d: int) -> L.LstmCellWeights:
    rx = glorot_bound(d, hidden)
    rh = glorot_bound(hidden, hidden)
    return L.LstmCellWeights(
        w_x=rng.uniform(-rx, rx, size=(4, hidden, d)).astype(np.float32),
        w_h=rng.uniform(-rh, rh, size=(4, hidden, hidden)).astype(np.float32),
        b=np.zeros((4, hidden), dtype=np.float32),
    )


def iter_tensors(bundle: WeightBundle):
    """Yield every coefficient tensor in the canonical serialization order."""
    for lw in bundle.weights:
        if lw is None:
            continue
        if isinstance(lw, L.FcWeights):
            yield lw.w
            yield lw.b
        elif isinstance(lw, L.ConvWeights):
            yield lw.kernels
            yield lw.biases
        else:  # bilstm (fwd, bwd) pair
            for cell in lw:
                yield cell.w_x
                yield cell.w_h
                yield cell.b


def bundle_from_tensors(spec: ModelSpec, tensors: list, precision: str) -> WeightBundle:
    """Rebuild per-layer weight objects from a canonical-order tensor list."""
    it = iter(tensors)
    weights = []
    for ls in spec.layers:
        if ls.kind == "fc":
            weights.append(L.FcWeights(w=next(it), b=next(it)))
        elif ls.kind == "conv":
            weights.append(L.ConvWeights(kernels=next(it), biases=next(it), mode=ls.mode))
        elif ls.kind == "bilstm":
            weights.append(tuple(
                L.LstmCellWeights(w_x=next(it), w_h=next(it), b=next(it)) for _ in range(2)
            ))
        else:
            weights.append(None)
    return WeightBundle(spec=spec, weights=weights, precision=precision)


# ---------------------------------------------------------------------------
# Inference


class Workspace:
    """Reusable per-layer output buffers for quantized inference.

    After the first (warm-up) inference every subsequent call reuses the same
    buffers; ``allocations`` counts buffer creations.
    """

    def __init__(self):
        self._bufs = {}
        self.allocations = 0

    def store(self, key, arr: np.ndarray) -> np.ndarray:
        buf = self._bufs.get(key)
        if buf is None or buf.shape != arr.shape or buf.dtype != arr.dtype:
            buf = np.empty_like(arr)
            self._bufs[key] = buf
            self.allocations += 1
        np.copyto(buf, arr)
        return buf


def infer_batch(
    bundle: WeightBundle,
    segments: np.ndarray,
    stats: SaturationStats | None = None,
    workspace: Workspace | None = None,
) -> np.ndarray:
    """Forward pass over a batch [B x K x N]; returns float logits [B x 3].

    Dropout layers are identity at inference. In quantized bundles the whole
    pipeline runs on integer activations and the final logits are dequantized.
    """
    segments = np.asarray(segments, dtype=np.float64)
    spec = bundle.spec
    if segments.ndim != 3 or segments.shape[1:] != (spec.channels, spec.samples):
        raise DimensionMismatch(
            f"expected [B x {spec.channels} x {spec.samples}] input, got {segments.shape}"
        )
    if bundle.precision == "quantized":
        return _infer_batch_quant(bundle, segments, stats, workspace)
    return _infer_batch_float(bundle, segments)


def _infer_batch_float(bundle: WeightBundle, x: np.ndarray) -> np.ndarray:
    for ls, lw in zip(bundle.spec.layers, bundle.weights):
        if ls.kind == "scale":
            x = L.scale_forward(x)
        elif ls.kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        elif ls.kind == "dropout":
            pass
        elif ls.kind == "fc":
            x = L.fc_forward(x, lw, activation=ls.activation)
        elif ls.kind == "conv":
            x = L.conv1d_batch(x, lw)
            if ls.activation == "relu":
                x = L.relu(x)
        elif ls.kind == "maxpool":
            x = L.maxpool1d(x, ls.pool)
        elif ls.kind == "bilstm":
            x = L.bilstm_batch(np.swapaxes(x, 1, 2), lw[0], lw[1])
    return x


def _infer_batch_quant(
    bundle: WeightBundle,
    segments: np.ndarray,
    stats: SaturationStats | None,
    workspace: Workspace | None,
) -> np.ndarray:
    def keep(key, arr):
        return workspace.store(key, arr) if workspace is not None else arr

    x = None
    for idx, (ls, lw) in enumerate(zip(bundle.spec.layers, bundle.weights)):
        if ls.kind == "scale":
            x = keep(idx, L.quantize_activation(L.scale_forward(segments), stats))
        elif ls.kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        elif ls.kind == "dropout":
            pass
        elif ls.kind == "fc":
            x = keep(idx, L.qfc_forward(x, lw, activation=ls.activation, stats=stats))
        elif ls.kind == "conv":
            x = L.qconv1d_forward(x, lw, stats=stats)
            if ls.activation == "relu":
                x = L.qrelu(x)
            x = keep(idx, x)
        elif ls.kind == "maxpool":
            x = keep(idx, L.qmaxpool1d(x, ls.pool))
        elif ls.kind == "bilstm":
            x = keep(idx, L.qlstm_batch(np.swapaxes(x, 1, 2), lw[0], lw[1], stats))
    return L.dequantize_activation(x)


def infer_segment(
    bundle: WeightBundle,
    segment: np.ndarray,
    stats: SaturationStats | None = None,
    workspace: Workspace | None = None,
) -> tuple[Phase, np.ndarray]:
    """Classify a single [K x N] segment; returns (label, raw logits)."""
    logits = infer_batch(bundle, np.asarray(segment)[None], stats, workspace)[0]
    return L.argmax_classify(logits), logits


# ---------------------------------------------------------------------------
# Serialization: little-endian, magic "EDL1", trailing CRC32.

MAGIC = b"EDL1"
VERSION = 1
_FAMILY_CODE = {"DNN": 0, "CNN": 1, "LSTM": 2}
_FAMILY_NAME = {v: k for k, v in _FAMILY_CODE.items()}
_PRECISION_CODE = {"float32": 0, "quantized": 1}
_PRECISION_NAME = {v: k for k, v in _PRECISION_CODE.items()}


def save_weights(bundle: WeightBundle, path):
    spec = bundle.spec
    quant = bundle.precision == "quantized"
    parts = [MAGIC]
    parts.append(struct.pack(
        "<HBHBIBH",
        VERSION,
        _FAMILY_CODE[spec.family],
        spec.fs,
        spec.channels,
        spec.samples,
        _PRECISION_CODE[bundle.precision],
        len(list(iter_tensors(bundle))),
    ))
    for tensor in iter_tensors(bundle):
        if quant:
            if not isinstance(tensor, QuantTensor):
                raise ValueError("quantized bundle contains a non-quantized tensor")
            arr, frac = tensor.data, tensor.q.frac_bits
            parts.append(struct.pack("<B", arr.ndim))
            parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            parts.append(struct.pack("<B", frac))
            parts.append(arr.astype("<i1").tobytes())
        else:
            # Float bundles hold float32 coefficients so the round trip is bit-exact.
            arr = np.asarray(tensor, dtype=np.float32)
            parts.append(struct.pack("<B", arr.ndim))
            parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            parts.append(arr.astype("<f4").tobytes())
    blob = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(blob)
        fh.write(struct.pack("<I", zlib.crc32(blob)))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFile(f"file ends {self.pos + n - len(self.data)} bytes early")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_weights(path) -> WeightBundle:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}")
    if len(data) < 8:
        raise TruncatedFile("header incomplete")
    body, crc_bytes = data[:-4], data[-4:]
    rd = _Reader(body)
    rd.take(4)  # magic
    version, fam, fs, k, n, prec, count = rd.unpack("<HBHBIBH")
    if version != VERSION:
        raise UnsupportedVersion(f"version {version} not supported")
    if fam not in _FAMILY_NAME:
        raise ShapeMismatch(f"unknown family code {fam}")
    spec = build_family(_FAMILY_NAME[fam], fs, k, n / fs)
    precision = _PRECISION_NAME.get(prec)
    if precision is None:
        raise ShapeMismatch(f"unknown precision code {prec}")
    expected = spec.tensor_shapes()
    if count != len(expected):
        raise ShapeMismatch(f"expected {len(expected)} tensors, file declares {count}")
    tensors = []
    for _, shape in expected:
        (rank,) = rd.unpack("<B")
        dims = rd.unpack(f"<{rank}I") if rank else ()
        if dims != shape:
            raise ShapeMismatch(f"tensor dims {dims} != expected {shape}")
        size = int(np.prod(dims)) if dims else 1
        if precision == "quantized":
            (frac,) = rd.unpack("<B")
            raw = np.frombuffer(rd.take(size), dtype="<i1").astype(np.int64).reshape(dims)
            tensors.append(QuantTensor(raw, QFormat(8, frac)))
        else:
            payload = rd.take(4 * size)
            tensors.append(
                np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)
            )
    if rd.pos != len(body):
        raise ShapeMismatch("trailing bytes after declared tensors")
    (stored_crc,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(body) != stored_crc:
        raise ChecksumMismatch("CRC32 mismatch")
    return bundle_from_tensors(spec, tensors, precision)
