"""Adam training on cross-entropy, plus accuracy/F1 evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, batches
from .network import MaskedNetwork, backward, cross_entropy, forward


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 30
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.beta1, self.beta2, self.adam_eps) <= 0:
            raise ValueError("all rates must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
    masks: list[np.ndarray | None] | None = None,
) -> tuple[list[np.ndarray], AdamState]:
    """One Adam update with bias correction, applied in place.

    When a mask is given for a parameter, its masked positions are re-forced
    to zero after the update.
    """
    state.t += 1
    t = state.t
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        if masks is not None and masks[i] is not None:
            p *= masks[i]
    return params, state


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def rows(self) -> list[tuple[int, float, float]]:
        return [(r.epoch, r.loss, r.accuracy) for r in self.records]


def train(net: MaskedNetwork, train_set: Dataset, cfg: TrainConfig) -> TrainHistory:
    """Mini-batch Adam on cross-entropy for cfg.epochs passes.

    Mutates `net` in place and returns the per-epoch loss/accuracy history.
    Deterministic for a fixed cfg.seed. Raises TrainingDivergedError if the
    loss goes non-finite; the mask invariant is asserted every epoch.
    """
    params = [g.weights for g in net.groups] + net.biases
    masks: list[np.ndarray | None] = [g.mask for g in net.groups] + [None] * len(net.biases)
    state = AdamState.for_params(params)

    history = TrainHistory()
    for epoch in range(cfg.epochs):
        epoch_loss = 0.0
        correct = 0
        for batch_idx in batches(train_set, cfg.batch_size, cfg.seed + 1_000_003 * epoch):
            xb = train_set.images[batch_idx]
            yb = train_set.labels[batch_idx]
            logits, probs, cache = forward(net, xb)
            loss = cross_entropy(logits, yb)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at epoch {epoch}, t={state.t}")
            epoch_loss += loss * len(batch_idx)
            correct += int((probs.argmax(axis=1) == yb).sum())
            w_grads, b_grads, _ = backward(net, cache, yb)
            adam_step(params, w_grads + b_grads, state, cfg, masks)
            net.mark_mutated()
        net.assert_mask_invariant()
        history.records.append(EpochRecord(
            epoch=epoch,
            loss=epoch_loss / train_set.n,
            accuracy=correct / train_set.n,
        ))
    return history


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    precision: list[float]
    recall: list[float]
    f1_per_class: list[float]
    confusion: np.ndarray  # (10, 10), rows = true class
    absent_classes: list[int]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "precision": self.precision,
            "recall": self.recall,
            "f1_per_class": self.f1_per_class,
            "confusion": self.confusion.tolist(),
            "absent_classes": self.absent_classes,
        }


def predict(net: MaskedNetwork, images: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Class probabilities in evaluation batches; returns (n, output_dim)."""
    outs = []
    for i in range(0, images.shape[0], batch_size):
        _, probs, _ = forward(net, images[i:i + batch_size])
        outs.append(probs)
    return np.concatenate(outs, axis=0)


def evaluate_f1(net: MaskedNetwork, test_set: Dataset, n_classes: int = 10) -> EvalReport:
    """Accuracy plus macro-averaged F1 (unweighted mean of per-class F1).

    A class absent from both predictions and truth gets F1 = 0 and is listed
    in absent_classes.
    """
    probs = predict(net, test_set.images)
    return classification_report(test_set.labels, probs.argmax(axis=1), n_classes)


def classification_report(truth: np.ndarray, preds: np.ndarray,
                          n_classes: int = 10) -> EvalReport:
    truth = np.asarray(truth, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (truth, preds), 1)

    precision, recall, f1s, absent = [], [], [], []
    for c in range(n_classes):
        tp = confusion[c, c]
        support = confusion[c, :].sum()
        predicted = confusion[:, c].sum()
        if support == 0 and predicted == 0:
            absent.append(c)
            precision.append(0.0)
            recall.append(0.0)
            f1s.append(0.0)
            continue
        prec = tp / predicted if predicted else 0.0
        rec = tp / support if support else 0.0
        f1 = 2 * prec * rec / (prec + rec) if (prec + rec) else 0.0
        precision.append(float(prec))
        recall.append(float(rec))
        f1s.append(float(f1))
    return EvalReport(
        accuracy=float((preds == truth).mean()),
        macro_f1=float(np.mean(f1s)),
        precision=precision,
        recall=recall,
        f1_per_class=f1s,
        confusion=confusion,
        absent_classes=absent,
    )
