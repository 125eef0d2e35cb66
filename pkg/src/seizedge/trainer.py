"""Supervised training for the DNN and CNN families.

Analytic backprop through fc / conv / max-pool / relu / dropout, Adam updates,
and class-weighted softmax cross-entropy. The scaling layer is treated as
constant preprocessing. LSTM training (backprop through time) is out of scope;
LSTM bundles come from random initialization or external weight files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from .errors import UnsupportedFamily
from .labels import Phase
from .models import ModelSpec, WeightBundle, bundle_from_tensors, iter_tensors, random_bundle


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 30
    batch_size: int = 32
    class_weights: tuple = (1.0, 1.0, 1.0)
    rng_seed: int = 0

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if min(self.learning_rate, self.epsilon) <= 0 or min(self.epochs, self.batch_size) <= 0:
            raise ValueError("learning_rate, epsilon, epochs, batch_size must be positive")
        if min(self.class_weights) <= 0:
            raise ValueError("class weights must be positive")


def class_weights(counts) -> np.ndarray:
    """Inverse-frequency weights: w_c = total / (3 * count_c)."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.shape != (3,) or (counts < 1).any():
        raise ValueError("need three class counts, each >= 1")
    return counts.sum() / (3.0 * counts)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def weighted_cross_entropy(logits, label, weights):
    """Loss and gradient for one sample: w[y] * (-log softmax(logits)[y])."""
    logits = np.asarray(logits, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    y = int(label)
    z = logits - logits.max()
    log_probs = z - np.log(np.exp(z).sum())
    w = weights[y]
    loss = -w * log_probs[y]
    grad = w * np.exp(log_probs)
    grad[y] -= w
    return float(loss), grad


def _batch_loss_grad(logits, labels, weights):
    """Mean weighted cross-entropy over a batch; returns (loss, dlogits)."""
    b = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    w = np.asarray(weights, dtype=np.float64)[labels]
    loss = float(np.mean(-w * log_probs[np.arange(b), labels]))
    dlogits = np.exp(log_probs) * w[:, None]
    dlogits[np.arange(b), labels] -= w
    return loss, dlogits / b


# ---------------------------------------------------------------------------
# Cached forward / backward over a batch


def _check_trainable(spec: ModelSpec):
    if spec.family not in ("DNN", "CNN"):
        raise UnsupportedFamily(f"training is not supported for the {spec.family} family")


def _forward(bundle: WeightBundle, x: np.ndarray, dropout_rng=None):
    """Batched forward pass keeping per-layer caches for backprop.

    ``dropout_rng`` enables training mode: inverted-dropout masks are drawn
    from it; with None, dropout is identity.
    """
    caches = []
    for ls, lw in zip(bundle.spec.layers, bundle.weights):
        cache = {"kind": ls.kind, "spec": ls, "weights": lw}
        if ls.kind == "scale":
            x = L.scale_forward(x)
        elif ls.kind == "flatten":
            cache["shape"] = x.shape
            x = x.reshape(x.shape[0], -1)
        elif ls.kind == "dropout":
            if dropout_rng is not None and ls.rate > 0:
                mask = (dropout_rng.random(x.shape) >= ls.rate) / (1.0 - ls.rate)
                cache["mask"] = mask
                x = x * mask
        elif ls.kind == "fc":
            cache["x"] = x
            pre = x @ np.asarray(lw.w, dtype=np.float64).T + np.asarray(lw.b, dtype=np.float64)
            cache["pre"] = pre
            x = L.relu(pre) if ls.activation == "relu" else pre
        elif ls.kind == "conv":
            cache["x"] = x
            pre = L.conv1d_batch(x, lw)
            cache["pre"] = pre
            x = L.relu(pre) if ls.activation == "relu" else pre
        elif ls.kind == "maxpool":
            cache["length"] = x.shape[-1]
            blocks = x.shape[-1] // ls.pool
            trimmed = x[..., : blocks * ls.pool].reshape(*x.shape[:-1], blocks, ls.pool)
            idx = trimmed.argmax(axis=-1)  # first index on ties
            cache["idx"] = idx
            x = np.take_along_axis(trimmed, idx[..., None], axis=-1)[..., 0]
        else:
            raise UnsupportedFamily(f"no backprop path for layer kind {ls.kind!r}")
        caches.append(cache)
    return x, caches


def _backward(bundle: WeightBundle, caches, dlogits: np.ndarray):
    """Gradients for every trainable tensor, in canonical iter_tensors order."""
    grads = {}
    dy = dlogits
    for li in range(len(caches) - 1, -1, -1):
        cache = caches[li]
        kind = cache["kind"]
        ls = cache["spec"]
        lw = cache["weights"]
        if kind == "scale":
            dy = None  # constant preprocessing, nothing upstream needs gradient
        elif kind == "flatten":
            dy = dy.reshape(cache["shape"])
        elif kind == "dropout":
            if "mask" in cache:
                dy = dy * cache["mask"]
        elif kind == "fc":
            if ls.activation == "relu":
                dy = dy * (cache["pre"] > 0)
            grads[(li, "w")] = dy.T @ cache["x"]
            grads[(li, "b")] = dy.sum(axis=0)
            dy = dy @ np.asarray(lw.w, dtype=np.float64)
        elif kind == "conv":
            if ls.activation == "relu":
                dy = dy * (cache["pre"] > 0)
            dk, db, dy = _conv_backward(cache["x"], dy, lw)
            grads[(li, "w")] = dk
            grads[(li, "b")] = db
        elif kind == "maxpool":
            b_shape = cache["idx"].shape  # (..., blocks)
            blocks = b_shape[-1]
            full = np.zeros((*b_shape, ls.pool))
            np.put_along_axis(full, cache["idx"][..., None], dy[..., None], axis=-1)
            dx = np.zeros((*b_shape[:-1], cache["length"]))
            dx[..., : blocks * ls.pool] = full.reshape(*b_shape[:-1], blocks * ls.pool)
            dy = dx
    ordered = []
    for li, ls in enumerate(bundle.spec.layers):
        if ls.kind in ("fc", "conv"):
            ordered.append(grads[(li, "w")])
            ordered.append(grads[(li, "b")])
    return ordered


def _conv_backward(x: np.ndarray, dy: np.ndarray, w: L.ConvWeights):
    kernels = np.asarray(w.kernels, dtype=np.float64)
    c_out, c_in_k, h = kernels.shape
    b, c_in, length = x.shape
    pl, pr = L.same_pad_widths(h)
    xp = np.pad(x, ((0, 0), (0, 0), (pl, pr)))
    win = np.lib.stride_tricks.sliding_window_view(xp, h, axis=-1)
    dxp = np.zeros_like(xp)
    if w.mode == "depthwise":
        dyr = dy.reshape(b, c_in, c_out, length)
        dk = np.einsum("bckl,bclh->kh", dyr, win)[:, None, :]
        db = dyr.sum(axis=(0, 1, 3))
        g = np.einsum("bckl,kh->bclh", dyr, kernels[:, 0, :])
    else:
        dk = np.einsum("bkl,bclh->kch", dy, win)
        db = dy.sum(axis=(0, 2))
        g = np.einsum("bkl,kch->bclh", dy, kernels)
    for t in range(h):
        dxp[:, :, t : t + length] += g[:, :, :, t]
    dx = dxp[:, :, pl : pl + length]
    return dk, db, dx


def backward(bundle: WeightBundle, segment: np.ndarray, label, config: TrainConfig):
    """Analytic gradients for one segment (dropout identity). Canonical order."""
    _check_trainable(bundle.spec)
    x = np.asarray(segment, dtype=np.float64)[None]
    logits, caches = _forward(bundle, x)
    _, dlogits = _batch_loss_grad(logits, np.array([int(label)]), config.class_weights)
    return _backward(bundle, caches, dlogits)


def batch_loss(bundle: WeightBundle, segments: np.ndarray, labels, config: TrainConfig) -> float:
    """Mean weighted cross-entropy of a batch, dropout identity (oracle helper)."""
    logits, _ = _forward(bundle, np.asarray(segments, dtype=np.float64))
    loss, _ = _batch_loss_grad(logits, np.asarray(labels, dtype=int), config.class_weights)
    return loss


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamMoments:
    m: list
    v: list

    @classmethod
    def zeros_like(cls, params):
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, moments: AdamMoments, t: int, config: TrainConfig):
    """Standard Adam update with bias correction; mutates params and moments."""
    if t < 1:
        raise ValueError("step index t must be >= 1")
    b1, b2 = config.beta1, config.beta2
    for p, g, m, v in zip(params, grads, moments.m, moments.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return params, moments


# ---------------------------------------------------------------------------
# Training loop


def train_model(spec: ModelSpec, segments, config: TrainConfig):
    """Mini-batch Adam over shuffled segments; returns (bundle, per-epoch loss)."""
    _check_trainable(spec)
    labels = np.array([int(s.label) for s in segments])
    for phase in Phase:
        if not np.any(labels == phase):
            raise ValueError(f"missing class {phase.name} in training data")
    data = np.stack([s.data for s in segments])

    init = random_bundle(spec, seed=config.rng_seed)
    params = [np.asarray(t, dtype=np.float64).copy() for t in iter_tensors(init)]
    work = bundle_from_tensors(spec, params, "float32")  # arrays shared with params
    moments = AdamMoments.zeros_like(params)
    rng = np.random.default_rng(config.rng_seed + 1)

    loss_curve = []
    t = 0
    for _epoch in range(config.epochs):
        order = rng.permutation(len(segments))
        epoch_losses = []
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            logits, caches = _forward(work, data[idx], dropout_rng=rng)
            loss, dlogits = _batch_loss_grad(logits, labels[idx], config.class_weights)
            grads = _backward(work, caches, dlogits)
            t += 1
            adam_step(params, grads, moments, t, config)
            epoch_losses.append(loss)
        loss_curve.append(float(np.mean(epoch_losses)))

    final = bundle_from_tensors(spec, [p.astype(np.float32) for p in params], "float32")
    return final, loss_curve
