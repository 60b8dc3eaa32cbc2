"""Linear, spherical-cap and ReLU-MLP classifiers, with plain-numpy training."""
from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .distributions import RngStream, sample_conditional

log = logging.getLogger(__name__)


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> Tuple[float, float]:
    ci = stats.binomtest(int(successes), int(n)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class LinearClassifier:
    """positive_label iff w.x + b > 0; the boundary itself goes to negative_label."""

    w: np.ndarray
    b: float = 0.0
    positive_label: int = 1
    negative_label: int = -1

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))
        if not np.any(self.w):
            raise ValueError("linear classifier needs a nonzero weight vector")

    @property
    def dim(self) -> int:
        return self.w.size

    def decision(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.w.size:
            raise ValueError(f"expected inputs of dimension {self.w.size}, got {x.shape[-1]}")
        return x @ self.w + self.b

    def predict(self, x):
        out = np.where(self.decision(x) > 0, self.positive_label, self.negative_label)
        return out.item() if out.ndim == 0 else out

    def label_sign(self, label) -> np.ndarray:
        """+1 for the positive label, -1 for the negative one."""
        return np.where(np.asarray(label) == self.positive_label, 1.0, -1.0)

    def input_gradient(self, x, label) -> np.ndarray:
        """Gradient in x of the logistic loss log(1 + exp(-y (w.x + b)))."""
        y = self.label_sign(label)
        s = self.decision(x)
        coef = -y * 0.5 * (1.0 - np.tanh(0.5 * y * s))  # -y * sigmoid(-y s)
        return np.multiply.outer(coef, self.w)


def averaging_classifier(p: int) -> LinearClassifier:
    """sign of the mean of features 2..p; ignores the first feature."""
    w = np.full(p, 1.0 / (p - 1))
    w[0] = 0.0
    return LinearClassifier(w, 0.0, positive_label=1, negative_label=-1)


@dataclass(frozen=True)
class CapClassifier:
    """Predicts cap_label on the spherical cap {x . axis >= t}, rest_label elsewhere."""

    axis: np.ndarray
    t: float
    radius: float = 1.0
    cap_label: int = 0
    rest_label: int = 1

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float)
        object.__setattr__(self, "axis", a / np.linalg.norm(a))

    @property
    def cap_angle(self) -> float:
        return math.acos(min(1.0, max(-1.0, self.t / self.radius)))

    def predict(self, x):
        out = np.where(np.asarray(x, dtype=float) @ self.axis >= self.t, self.cap_label, self.rest_label)
        return out.item() if out.ndim == 0 else out

    def geodesic_distance_to_error(self, x, label) -> np.ndarray:
        cos = np.clip(np.asarray(x, dtype=float) @ self.axis / self.radius, -1.0, 1.0)
        theta = np.arccos(cos)
        if label == self.rest_label:
            return self.radius * np.maximum(theta - self.cap_angle, 0.0)
        return self.radius * np.maximum(self.cap_angle - theta, 0.0)


@dataclass(frozen=True)
class ConstantClassifier:
    label: int
    dim: int

    def predict(self, x):
        x = np.asarray(x)
        if x.ndim == 1:
            return self.label
        return np.full(x.shape[0], self.label)

    def input_gradient(self, x, label):
        return np.zeros_like(np.asarray(x, dtype=float))


# -- MLP -----------------------------------------------------------------------

@dataclass
class TrainConfig:
    lr: float = 0.01
    epochs: int = 30
    batch_size: int = 128
    seed: int = 0
    init_scale: Optional[float] = None  # None: sqrt(2 / fan_in)
    momentum: float = 0.9

    def __post_init__(self):
        if self.lr <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("learning rate, epochs and batch size must be positive")
        if self.init_scale is not None and self.init_scale <= 0:
            raise ValueError("init_scale must be positive")


class TrainingDiverged(FloatingPointError):
    pass


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


@dataclass
class MlpClassifier:
    """ReLU network; ``weights[i]`` has shape (fan_in, fan_out)."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    loss_trace: List[float] = field(default_factory=list)

    @classmethod
    def init(cls, widths: Sequence[int], rng: np.random.Generator, init_scale: Optional[float] = None):
        ws, bs = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            scale = init_scale if init_scale is not None else math.sqrt(2.0 / fan_in)
            ws.append(rng.standard_normal((fan_in, fan_out)) * scale)
            bs.append(np.zeros(fan_out))
        return cls(ws, bs)

    @classmethod
    def zeros(cls, widths: Sequence[int]):
        return cls([np.zeros((a, b)) for a, b in zip(widths[:-1], widths[1:])],
                   [np.zeros(b) for b in widths[1:]])

    @property
    def widths(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    def _forward(self, x):
        acts = [x]
        h = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = np.maximum(z, 0.0) if i < len(self.weights) - 1 else z
            acts.append(h)
        return acts

    def scores(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected inputs of dimension {self.dim}, got {x.shape[-1]}")
        return self._forward(np.atleast_2d(x))[-1]

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        out = self.scores(x).argmax(axis=1)
        return out[0].item() if x.ndim == 1 else out

    def loss_and_grads(self, x, labels):
        """Mean softmax cross-entropy with gradients for every parameter and the input.

        Returns ``(loss, dweights, dbiases, dx)``; ``dx`` is the gradient of the
        per-sample loss (not divided by the batch size).
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        labels = np.atleast_1d(np.asarray(labels, dtype=int))
        n = x.shape[0]
        acts = self._forward(x)
        logp = _log_softmax(acts[-1])
        loss = -logp[np.arange(n), labels].mean()
        delta = np.exp(logp)
        delta[np.arange(n), labels] -= 1.0  # d(per-sample loss)/d scores
        dws, dbs = [None] * len(self.weights), [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            dws[i] = acts[i].T @ delta / n
            dbs[i] = delta.sum(axis=0) / n
            delta = delta @ self.weights[i].T
            if i > 0:
                delta = delta * (acts[i] > 0)
        return loss, dws, dbs, delta

    def predict_and_input_gradient(self, x, labels):
        """Predictions and per-sample input gradients from one forward pass."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        labels = np.atleast_1d(np.asarray(labels, dtype=int))
        acts = self._forward(x)
        logp = _log_softmax(acts[-1])
        delta = np.exp(logp)
        delta[np.arange(x.shape[0]), labels] -= 1.0
        for i in range(len(self.weights) - 1, -1, -1):
            delta = delta @ self.weights[i].T
            if i > 0:
                delta = delta * (acts[i] > 0)
        return acts[-1].argmax(axis=1), delta

    def input_gradient(self, x, labels) -> np.ndarray:
        return self.predict_and_input_gradient(x, labels)[1]

    def copy(self) -> "MlpClassifier":
        return MlpClassifier([w.copy() for w in self.weights], [b.copy() for b in self.biases], list(self.loss_trace))


def mlp_gradient(h: MlpClassifier, x, label):
    """Cross-entropy gradient at a single example: (dweights, dbiases, dx)."""
    _, dws, dbs, dx = h.loss_and_grads(np.atleast_2d(x), [label])
    return dws, dbs, dx[0]


def train_mlp(x, labels, cfg: TrainConfig, hidden: Sequence[int] = (200, 100),
              n_classes: Optional[int] = None) -> MlpClassifier:
    """Minibatch SGD (with momentum) on softmax cross-entropy.

    Labels are class indices 0..K-1. Initialisation and shuffling are drawn
    from a Philox generator seeded with ``cfg.seed``, so equal inputs give
    bit-identical parameters.
    """
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if x.ndim != 2 or x.shape[0] == 0 or labels.shape != (x.shape[0],):
        raise ValueError("training data must be a nonempty (n, p) array with n labels")
    k = int(n_classes if n_classes is not None else labels.max() + 1)
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    net = MlpClassifier.init([x.shape[1], *hidden, k], rng, cfg.init_scale)
    vel_w = [np.zeros_like(w) for w in net.weights]
    vel_b = [np.zeros_like(b) for b in net.biases]
    n = x.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            loss, dws, dbs, _ = net.loss_and_grads(x[idx], labels[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss {loss} at epoch {epoch}, batch starting {lo}")
            total += loss * idx.size
            for i in range(len(net.weights)):
                vel_w[i] = cfg.momentum * vel_w[i] - cfg.lr * dws[i]
                vel_b[i] = cfg.momentum * vel_b[i] - cfg.lr * dbs[i]
                net.weights[i] += vel_w[i]
                net.biases[i] += vel_b[i]
        net.loss_trace.append(total / n)
        log.debug("epoch %d loss %.6f", epoch, total / n)
    return net


def eval_error(h, cond, k, n: int, rng: RngStream):
    """Monte-Carlo class-conditional error with a 95% Wilson interval."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = sample_conditional(cond, rng, n)
    wrong = int(np.count_nonzero(np.asarray(h.predict(x)) != k))
    return wrong / n, wilson_interval(wrong, n)


# -- checkpoint file ---------------------------------------------------------

MAGIC = b"NFLM"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(h: MlpClassifier, path) -> None:
    """Layout: magic, u32 version, u32 layer count, then per layer u32 rows,
    u32 cols, rows*cols f64 weights (row-major) and cols f64 biases. Little-endian."""
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(h.weights))]
    for w, b in zip(h.weights, h.biases):
        parts.append(struct.pack("<II", *w.shape))
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> MlpClassifier:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < 12:
        raise CheckpointError("truncated header")
    version, layers = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = 12
    ws, bs = [], []
    for i in range(layers):
        if off + 8 > len(data):
            raise CheckpointError(f"truncated at layer {i} header")
        rows, cols = struct.unpack_from("<II", data, off)
        off += 8
        if ws and rows != ws[-1].shape[1]:
            raise CheckpointError(f"layer {i} has {rows} inputs, previous layer emits {ws[-1].shape[1]}")
        need = 8 * (rows * cols + cols)
        if off + need > len(data):
            raise CheckpointError(f"truncated at layer {i}: need {need} bytes, have {len(data) - off}")
        ws.append(np.frombuffer(data, "<f8", rows * cols, off).reshape(rows, cols).astype(float))
        off += 8 * rows * cols
        bs.append(np.frombuffer(data, "<f8", cols, off).astype(float))
        off += 8 * cols
    if off != len(data):
        raise CheckpointError(f"{len(data) - off} trailing bytes")
    if not layers:
        raise CheckpointError("checkpoint has no layers")
    return MlpClassifier(ws, bs)
