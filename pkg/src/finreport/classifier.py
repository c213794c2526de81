"""Three-class return classifier on fused news and stock-factor features.

Inputs are the stacked column [x_news; x_factors]. A learnable per-coordinate
weight ``w_alpha`` rescales that column before a two-layer ReLU MLP with a
softmax head. Training is plain mini-batch SGD on the mean cross-entropy.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionError, NumericalError, ValidationError

logger = logging.getLogger(__name__)

LEARNING_RATE_GRID = (1e-3, 1e-4, 1e-5, 1e-6)
BATCH_SIZE_GRID = (16, 32, 64, 128)
LOSS_EPS = 1e-12
CHECKPOINT_FORMAT = "finreport-mlp"
CHECKPOINT_VERSION = 1


class Label(IntEnum):
    POSITIVE = 0
    NEUTRAL = 1
    NEGATIVE = 2

    @property
    def short(self) -> str:
        return self.name.lower()


def label_counts(n: int) -> tuple[int, int, int]:
    """(positive, neutral, negative) sizes for a cross-section of ``n`` ranked stocks.

    Positive takes floor(0.2 n) but at least one, neutral the next
    floor(0.4 n), negative the last floor(0.2 n). What is left between
    neutral and negative stays unlabeled.
    """
    if n < 5:
        return 0, 0, 0
    pos = max(1, (2 * n) // 10)
    neu = (4 * n) // 10
    neg = (2 * n) // 10
    return pos, neu, neg


def assign_labels(returns: Mapping[str, float], min_symbols: int = 5) -> dict[str, Label | None]:
    """Rank one date's returns and cut them into positive / neutral / negative.

    Ties are broken by symbol in lexicographic order. Fewer than
    ``min_symbols`` names leaves everything unlabeled.
    """
    symbols = list(returns)
    if len(symbols) < min_symbols:
        logger.warning("only %d symbols on date; all left unlabeled", len(symbols))
        return {s: None for s in symbols}
    ranked = sorted(symbols, key=lambda s: (-returns[s], s))
    pos, neu, neg = label_counts(len(ranked))
    out: dict[str, Label | None] = {s: None for s in ranked}
    for s in ranked[:pos]:
        out[s] = Label.POSITIVE
    for s in ranked[pos:pos + neu]:
        out[s] = Label.NEUTRAL
    for s in ranked[len(ranked) - neg:]:
        out[s] = Label.NEGATIVE
    return out


def stack_features(x_n, x_f) -> np.ndarray:
    """Vertical stack [x_n; x_f]; works on single columns or on (n, .) row batches."""
    x_n = np.asarray(x_n, dtype=np.float64)
    x_f = np.asarray(x_f, dtype=np.float64)
    return np.concatenate([x_n, x_f], axis=-1)


def fuse(x_n, x_f, w_alpha) -> np.ndarray:
    x = stack_features(x_n, x_f)
    w_alpha = np.asarray(w_alpha, dtype=np.float64)
    if x.shape[-1] != w_alpha.shape[0]:
        raise DimensionError(f"fused length {x.shape[-1]} != w_alpha length {w_alpha.shape[0]}")
    return w_alpha * x


@dataclass
class MlpParams:
    w_alpha: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    dropout_rate: float = 0.1

    TENSORS = ("w_alpha", "w1", "b1", "w2", "b2")

    @property
    def input_dim(self) -> int:
        return self.w_alpha.shape[0]

    @property
    def hidden(self) -> int:
        return self.b1.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.TENSORS}

    def copy(self) -> "MlpParams":
        return MlpParams(**{k: v.copy() for k, v in self.tensors().items()},
                         dropout_rate=self.dropout_rate)

    def check_shapes(self) -> None:
        d, h = self.input_dim, self.hidden
        expected = {"w_alpha": (d,), "w1": (h, d), "b1": (h,), "w2": (3, h), "b2": (3,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    def allclose(self, other: "MlpParams") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.tensors().values(), other.tensors().values()))


def init_params(input_dim: int, hidden: int = 1024, dropout_rate: float = 0.1,
                rng: np.random.Generator | None = None) -> MlpParams:
    rng = rng if rng is not None else np.random.default_rng(0)
    lim1 = math.sqrt(6.0 / (input_dim + hidden))
    lim2 = math.sqrt(6.0 / (hidden + 3))
    return MlpParams(
        w_alpha=np.ones(input_dim),
        w1=rng.uniform(-lim1, lim1, size=(hidden, input_dim)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-lim2, lim2, size=(3, hidden)),
        b2=np.zeros(3),
        dropout_rate=dropout_rate,
    )


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_cache(params: MlpParams, x_raw: np.ndarray, mask: np.ndarray | None):
    x = params.w_alpha * x_raw
    z1 = x @ params.w1.T + params.b1
    h = np.maximum(z1, 0.0)
    if mask is not None:
        h = h * mask
    z2 = h @ params.w2.T + params.b2
    if not np.all(np.isfinite(z2)):
        raise NumericalError("non-finite activations in forward pass")
    return x, z1, h, _softmax(z2)


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: kept units are scaled by 1/(1 - rate)."""
    if rate <= 0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def forward(params: MlpParams, x, training: bool = False,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Class probabilities for one fused column or a batch of rows.

    ``x`` holds the stacked features before ``w_alpha`` is applied. Dropout
    after the hidden activation runs only when ``training`` is set.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.shape[1] != params.input_dim:
        raise DimensionError(f"input length {xb.shape[1]} != model input {params.input_dim}")
    mask = None
    if training and params.dropout_rate > 0:
        rng = rng if rng is not None else np.random.default_rng()
        mask = dropout_mask((xb.shape[0], params.hidden), params.dropout_rate, rng)
    y = _forward_cache(params, xb, mask)[3]
    return y[0] if single else y


def loss(y, label) -> float:
    """Cross-entropy of one probability vector, or the batch mean for a matrix."""
    y = np.asarray(y, dtype=np.float64)
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    yb = y[None, :] if y.ndim == 1 else y
    picked = yb[np.arange(yb.shape[0]), labels]
    if np.any(picked < LOSS_EPS):
        logger.warning("probability of true class below %g; clamped", LOSS_EPS)
        picked = np.maximum(picked, LOSS_EPS)
    return float(np.mean(-np.log(picked)))


def loss_and_grads(params: MlpParams, x_raw: np.ndarray, labels: np.ndarray,
                   mask: np.ndarray | None = None) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over a batch and its gradient for every tensor."""
    n = x_raw.shape[0]
    x, z1, h, p = _forward_cache(params, x_raw, mask)
    value = loss(p, labels)
    dz2 = p.copy()
    dz2[np.arange(n), labels] -= 1.0
    dz2 /= n
    grads = {"w2": dz2.T @ h, "b2": dz2.sum(axis=0)}
    dh = dz2 @ params.w2
    if mask is not None:
        dh = dh * mask
    dz1 = dh * (z1 > 0)
    grads["w1"] = dz1.T @ x
    grads["b1"] = dz1.sum(axis=0)
    grads["w_alpha"] = np.sum((dz1 @ params.w1) * x_raw, axis=0)
    return value, grads


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 20
    rng_seed: int = 0
    hidden: int = 1024
    dropout_rate: float = 0.1
    momentum: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0 or self.hidden < 1:
            raise ValidationError("batch_size, hidden must be >= 1 and epochs >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError("dropout_rate must lie in [0, 1)")
        if not 0.0 <= self.momentum < 1.0:
            raise ValidationError("momentum must lie in [0, 1)")
        if self.learning_rate not in LEARNING_RATE_GRID or self.batch_size not in BATCH_SIZE_GRID:
            logger.debug("training outside the default hyper-parameter grid")


@dataclass
class TrainResult:
    params: MlpParams
    history: list[dict] = field(default_factory=list)
    best_epoch: int | None = None


def _check_dataset(x, labels) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != labels.shape[0]:
        raise DimensionError(f"inputs {x.shape} and labels {labels.shape} do not align")
    if x.shape[0] == 0:
        raise ValidationError("empty labeled dataset")
    if np.any((labels < 0) | (labels > 2)):
        raise ValidationError("labels must be 0, 1 or 2")
    return x, labels


def train(x, labels, config: TrainConfig,
          validation: tuple[np.ndarray, np.ndarray] | None = None) -> TrainResult:
    """Fit ``w_alpha`` and both dense layers by mini-batch SGD.

    Shuffling, initialisation and dropout masks all draw from one generator
    seeded with ``config.rng_seed``, so a rerun gives identical tensors. With a
    validation split the parameters of the lowest validation loss are kept.
    """
    x, labels = _check_dataset(x, labels)
    if np.unique(labels).size == 1:
        logger.warning("degenerate training data: every sample has label %d", labels[0])
    rng = np.random.default_rng(config.rng_seed)
    params = init_params(x.shape[1], config.hidden, config.dropout_rate, rng)
    velocity = {k: np.zeros_like(v) for k, v in params.tensors().items()}
    history: list[dict] = []
    best, best_val, best_epoch = params.copy(), math.inf, None
    if validation is not None:
        xv, yv = _check_dataset(*validation)

    n = x.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            mask = None
            if config.dropout_rate > 0:
                mask = dropout_mask((idx.size, config.hidden), config.dropout_rate, rng)
            value, grads = loss_and_grads(params, x[idx], labels[idx], mask)
            total += value * idx.size
            for name, grad in grads.items():
                if config.momentum:
                    velocity[name] = config.momentum * velocity[name] - config.learning_rate * grad
                    setattr(params, name, getattr(params, name) + velocity[name])
                else:
                    setattr(params, name, getattr(params, name) - config.learning_rate * grad)
        record = {"epoch": epoch + 1, "train_loss": total / n}
        if validation is not None:
            val_loss = loss(forward(params, xv), yv)
            record["val_loss"] = val_loss
            if val_loss < best_val:
                best, best_val, best_epoch = params.copy(), val_loss, epoch + 1
        history.append(record)

    if validation is not None and best_epoch is not None:
        return TrainResult(best, history, best_epoch)
    return TrainResult(params, history, config.epochs if config.epochs else None)


def predict(params: MlpParams, x) -> tuple[np.ndarray, np.ndarray]:
    """Argmax labels and the probability matrix for a batch of rows."""
    probs = forward(params, np.atleast_2d(np.asarray(x, dtype=np.float64)))
    return probs.argmax(axis=1), probs


def classification_metrics(y_true, y_pred) -> dict[str, float]:
    """Accuracy plus macro-averaged precision, recall and F1 over the three classes."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise ValidationError("empty labeled dataset")
    precisions, recalls, f1s = [], [], []
    for c in range(3):
        tp = np.sum((y_pred == c) & (y_true == c))
        n_pred = np.sum(y_pred == c)
        n_true = np.sum(y_true == c)
        if n_true == 0:
            logger.warning("class %s absent from dataset; its terms count as 0", Label(c).short)
            precisions.append(0.0)
            recalls.append(0.0)
            f1s.append(0.0)
            continue
        p = tp / n_pred if n_pred else 0.0
        r = tp / n_true
        precisions.append(p)
        recalls.append(r)
        f1s.append(2 * p * r / (p + r) if p + r > 0 else 0.0)
    return {
        "accuracy": float(np.mean(y_true == y_pred)),
        "f1": float(np.mean(f1s)),
        "recall": float(np.mean(recalls)),
        "precision": float(np.mean(precisions)),
    }


def evaluate(params: MlpParams, x, labels) -> dict[str, float]:
    x, labels = _check_dataset(x, labels)
    pred, _ = predict(params, x)
    return classification_metrics(labels, pred)


def save_checkpoint(params: MlpParams, path, config: TrainConfig | None = None,
                    extra: Mapping | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": {"input": params.input_dim, "hidden": params.hidden},
        "dropout_rate": params.dropout_rate,
        "config": None if config is None else asdict(config),
        "seed": None if config is None else config.rng_seed,
        "tensors": {k: v.tolist() for k, v in params.tensors().items()},
    }
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_checkpoint(path, input_dim: int | None = None,
                    hidden: int | None = None) -> tuple[MlpParams, dict]:
    """Load tensors and metadata; reject files whose shapes disagree."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(f"{path}: not a version-{CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} checkpoint")
    t = doc["tensors"]
    params = MlpParams(**{k: np.asarray(t[k], dtype=np.float64) for k in MlpParams.TENSORS},
                       dropout_rate=float(doc["dropout_rate"]))
    params.check_shapes()
    dims = doc["dims"]
    if (dims["input"], dims["hidden"]) != (params.input_dim, params.hidden):
        raise DimensionError("checkpoint dims header disagrees with stored tensors")
    if input_dim is not None and params.input_dim != input_dim:
        raise DimensionError(f"checkpoint input dim {params.input_dim} != expected {input_dim}")
    if hidden is not None and params.hidden != hidden:
        raise DimensionError(f"checkpoint hidden size {params.hidden} != expected {hidden}")
    return params, doc


def labeled_arrays(samples: Sequence[tuple[np.ndarray, Label]]) -> tuple[np.ndarray, np.ndarray]:
    x = np.array([s[0] for s in samples], dtype=np.float64)
    y = np.array([int(s[1]) for s in samples], dtype=np.int64)
    return x, y
