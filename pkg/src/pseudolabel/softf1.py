"""Desk-scale linear classifier for comparing the double soft-F1 loss with cross-entropy.

Losses return analytic gradients with respect to the logits, checked
against finite differences in the test suite. Training is full-batch AdamW
with decoupled weight decay on the weight matrix only.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .domain import LEVELS, NUM_CLASSES, RiskLevel
from .errors import DegenerateDataError, FormatError, ShapeError
from .metrics import MetricsReport, evaluate

EPS = 1e-16
SOFT_F1 = "soft_f1"
CROSS_ENTROPY = "cross_entropy"


@dataclass(frozen=True)
class LossBatch:
    logits: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if logits.ndim != 2 or logits.shape[1] != NUM_CLASSES or logits.shape[0] < 1:
            raise ShapeError(f"logits must be B x {NUM_CLASSES}, got {logits.shape}")
        if y.shape != logits.shape:
            raise ShapeError(f"y shape {y.shape} does not match logits {logits.shape}")
        if not np.all((y == 0) | (y == 1)) or not np.all(y.sum(axis=1) == 1):
            raise ShapeError("y rows must be one-hot")
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_labels(cls, logits, labels: Sequence[RiskLevel]) -> LossBatch:
        return cls(logits, one_hot(labels))


def one_hot(labels: Sequence[RiskLevel]) -> np.ndarray:
    ranks = np.array([RiskLevel.parse(x).rank for x in labels], dtype=np.int64)
    y = np.zeros((len(ranks), NUM_CLASSES))
    y[np.arange(len(ranks)), ranks] = 1.0
    return y


def sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -z))


@dataclass(frozen=True)
class SoftF1Intermediates:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray
    soft_f1_class1: np.ndarray
    soft_f1_class0: np.ndarray
    cost: np.ndarray


def _soft_counts(batch: LossBatch):
    y = batch.y
    y_hat = sigmoid(batch.logits)
    tp = np.sum(y_hat * y, axis=0)
    fp = np.sum(y_hat * (1 - y), axis=0)
    fn = np.sum((1 - y_hat) * y, axis=0)
    tn = np.sum((1 - y_hat) * (1 - y), axis=0)
    return y_hat, tp, fp, fn, tn


def soft_f1_loss(batch: LossBatch) -> tuple[float, SoftF1Intermediates]:
    """Macro double soft-F1 loss: mean over classes of 1 - (F1_pos + F1_neg) / 2."""
    _, tp, fp, fn, tn = _soft_counts(batch)
    f1_pos = 2 * tp / (2 * tp + fn + fp + EPS)
    f1_neg = 2 * tn / (2 * tn + fn + fp + EPS)
    cost = 0.5 * ((1 - f1_pos) + (1 - f1_neg))
    parts = SoftF1Intermediates(tp, fp, fn, tn, f1_pos, f1_neg, cost)
    return float(np.mean(cost)), parts


def soft_f1_grad(batch: LossBatch) -> np.ndarray:
    """d loss / d logits for :func:`soft_f1_loss`."""
    y = batch.y
    y_hat, tp, fp, fn, tn = _soft_counts(batch)
    d_pos = 2 * tp + fn + fp + EPS
    d_neg = 2 * tn + fn + fp + EPS
    # d(tp)/d(y_hat) = y and d(2tp+fn+fp)/d(y_hat) = 1, since tp + fn is fixed
    df_pos = (2 * y * d_pos - 2 * tp) / d_pos**2
    # d(tn)/d(y_hat) = -(1-y) and d(2tn+fn+fp)/d(y_hat) = -1, since tn + fp is fixed
    df_neg = (-2 * (1 - y) * d_neg + 2 * tn) / d_neg**2
    d_yhat = -0.5 * (df_pos + df_neg) / NUM_CLASSES
    return d_yhat * y_hat * (1 - y_hat)


def cross_entropy_loss(batch: LossBatch) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch and its gradient w.r.t. the logits."""
    z = batch.logits
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    log_probs = shifted - log_norm
    B = z.shape[0]
    loss = -float(np.sum(batch.y * log_probs)) / B
    grad = (np.exp(log_probs) - batch.y) / B
    return loss, grad


def loss_and_grad(kind: str, batch: LossBatch) -> tuple[float, np.ndarray]:
    if kind == SOFT_F1:
        return soft_f1_loss(batch)[0], soft_f1_grad(batch)
    if kind == CROSS_ENTROPY:
        return cross_entropy_loss(batch)
    raise ValueError(f"unknown loss {kind!r}")


# --- model and optimizer ---------------------------------------------------


@dataclass(frozen=True)
class LinearModel:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != NUM_CLASSES or b.shape != (NUM_CLASSES,):
            raise ShapeError(f"expected W {NUM_CLASSES} x d and b ({NUM_CLASSES},), got {W.shape}, {b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("model parameters must be finite")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @classmethod
    def init(cls, d: int, seed: int, scale: float = 0.05) -> LinearModel:
        rng = np.random.default_rng(seed)
        W = rng.uniform(-scale, scale, size=(NUM_CLASSES, d))
        b = rng.uniform(-scale, scale, size=NUM_CLASSES)
        return cls(W, b)

    def logits(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.W.shape[1]:
            raise ShapeError(f"features must be N x {self.W.shape[1]}, got {X.shape}")
        return X @ self.W.T + self.b

    def predict(self, X: np.ndarray) -> list[RiskLevel]:
        z = self.logits(X)
        # ties toward the more severe class
        idx = NUM_CLASSES - 1 - np.argmax(z[:, ::-1], axis=1)
        return [LEVELS[i] for i in idx]


@dataclass(frozen=True)
class AdamWHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.1


@dataclass(frozen=True)
class AdamWState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    hyper: AdamWHyper = field(default_factory=AdamWHyper)


def adamw_step(
    model: LinearModel, grads: dict[str, np.ndarray], state: AdamWState
) -> tuple[LinearModel, AdamWState]:
    """One AdamW update; weight decay touches ``W`` only."""
    h = state.hyper
    step = state.step + 1
    params = {"W": model.W, "b": model.b}
    new_params, m_out, v_out = {}, {}, {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        m = h.beta1 * state.m.get(name, np.zeros_like(p)) + (1 - h.beta1) * g
        v = h.beta2 * state.v.get(name, np.zeros_like(p)) + (1 - h.beta2) * g * g
        m_hat = m / (1 - h.beta1**step)
        v_hat = v / (1 - h.beta2**step)
        decayed = p * (1 - h.lr * h.weight_decay) if name == "W" else p
        new_params[name] = decayed - h.lr * m_hat / (np.sqrt(v_hat) + h.eps)
        m_out[name], v_out[name] = m, v
    return LinearModel(**new_params), AdamWState(step, m_out, v_out, h)


# --- training --------------------------------------------------------------


@dataclass(frozen=True)
class ToyConfig:
    loss: str = SOFT_F1
    lr: float = 1e-3
    epochs: int = 500
    seed: int = 0
    weight_decay: float = 0.1

    def __post_init__(self):
        if self.loss not in (SOFT_F1, CROSS_ENTROPY):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def train_toy(
    features: np.ndarray,
    labels: Sequence[RiskLevel],
    config: ToyConfig = ToyConfig(),
    history: Optional[list] = None,
) -> tuple[LinearModel, MetricsReport]:
    """Full-batch training of a linear head; returns the model and training-set metrics.

    When ``history`` is a list, one ``(epoch, loss)`` pair is appended per epoch.
    """
    X = np.asarray(features, dtype=np.float64)
    labels = [RiskLevel.parse(x) for x in labels]
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise ShapeError(f"features {X.shape} do not match {len(labels)} labels")
    if len(labels) < 8:
        raise DegenerateDataError(f"need at least 8 examples, got {len(labels)}")
    absent = [lv.value for lv in LEVELS if lv not in set(labels)]
    if absent:
        raise DegenerateDataError(f"classes absent from training data: {', '.join(absent)}")

    y = one_hot(labels)
    model = LinearModel.init(X.shape[1], config.seed)
    state = AdamWState(hyper=AdamWHyper(lr=config.lr, weight_decay=config.weight_decay))
    for epoch in range(config.epochs):
        batch = LossBatch(model.logits(X), y)
        loss, g = loss_and_grad(config.loss, batch)
        if history is not None:
            history.append((epoch, loss))
        model, state = adamw_step(model, {"W": g.T @ X, "b": g.sum(axis=0)}, state)
    return model, evaluate(model.predict(X), labels)


def make_blobs(
    n: int,
    d: int,
    proportions: Sequence[float] = (0.25, 0.25, 0.25, 0.25),
    seed: int = 0,
    spread: float = 1.0,
    separation: float = 4.0,
) -> tuple[np.ndarray, list[RiskLevel]]:
    """Gaussian class blobs; class counts follow ``proportions`` (largest remainder)."""
    p = np.asarray(proportions, dtype=float)
    p = p / p.sum()
    raw = p * n
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts), kind="stable")[: n - counts.sum()]:
        counts[i] += 1
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(NUM_CLASSES, d))
    centers *= separation / np.linalg.norm(centers, axis=1, keepdims=True)
    X = np.concatenate(
        [centers[c] + spread * rng.normal(size=(counts[c], d)) for c in range(NUM_CLASSES)]
    )
    labels = [LEVELS[c] for c in range(NUM_CLASSES) for _ in range(counts[c])]
    order = rng.permutation(n)
    return X[order], [labels[i] for i in order]


def load_features(path: str | Path) -> tuple[np.ndarray, list[RiskLevel]]:
    """Read ``label`` plus feature columns from CSV, or ``{"label", "features"}`` JSONL rows."""
    path = Path(path)
    rows, labels = [], []
    try:
        if path.suffix.lower() == ".csv":
            with open(path, encoding="utf-8", newline="") as handle:
                reader = csv.DictReader(handle)
                if not reader.fieldnames or "label" not in reader.fieldnames:
                    raise FormatError("CSV needs a label column", 1, path)
                cols = [c for c in reader.fieldnames if c != "label"]
                for record in reader:
                    line = reader.line_num
                    try:
                        labels.append(RiskLevel.parse(record["label"]))
                        rows.append([float(record[c]) for c in cols])
                    except (TypeError, ValueError) as exc:
                        raise FormatError(str(exc), line, path) from None
        else:
            with open(path, encoding="utf-8") as handle:
                for n, line in enumerate(handle, 1):
                    if not line.strip():
                        continue
                    try:
                        record = json.loads(line)
                        labels.append(RiskLevel.parse(record["label"]))
                        rows.append([float(x) for x in record["features"]])
                    except (KeyError, TypeError, ValueError) as exc:
                        raise FormatError(str(exc), n, path) from None
    except FileNotFoundError:
        raise FormatError("file not found", path=path) from None
    if len({len(r) for r in rows}) > 1:
        raise FormatError("rows have differing feature counts", path=path)
    return np.array(rows, dtype=np.float64).reshape(len(rows), -1), labels


def write_curve(history: Sequence[tuple[int, float]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["epoch", "loss"])
        for epoch, loss in history:
            writer.writerow([epoch, repr(float(loss))])
