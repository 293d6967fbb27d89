"""AdamW optimization, the warmup/cosine schedule, MCC evaluation, and the train loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Original, PerturbationKind, perturb
from .model import (
    EmptyBatchError,
    ModelConfig,
    forward,
    loss_and_gradients,
)


class TrainingError(Exception):
    pass


class ShapeMismatchError(TrainingError):
    pass


class EmptyMatrixError(TrainingError):
    pass


def lr_at(step: int, total_steps: int, lr_peak: float) -> float:
    """Learning rate at ``step``: linear warmup over the first 10% of steps,
    then cosine decay to zero.

    The warmup length is ``ceil(0.1 * total_steps)``; both branches equal
    ``lr_peak`` at the boundary, so the schedule is continuous.
    """
    if not 0 <= step <= total_steps:
        raise TrainingError(f"step {step} outside [0, {total_steps}]")
    warmup = math.ceil(0.1 * total_steps)
    if step <= warmup:
        return lr_peak * step / warmup if warmup > 0 else lr_peak
    progress = (step - warmup) / (total_steps - warmup)
    return lr_peak * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class AdamWState:
    """Per-parameter moment accumulators plus the optimizer hyperparameters.

    Normalization gains/offsets and other 1-D tensors are excluded from
    weight decay.
    """

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr_peak: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    @classmethod
    def init(cls, params: dict[str, np.ndarray], **hyper) -> "AdamWState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            **hyper,
        )


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    lr: float | None = None,
) -> tuple[dict[str, np.ndarray], AdamWState]:
    """One decoupled-weight-decay Adam update, in place.

    p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p, with bias-corrected
    moments. ``lr`` defaults to the state's peak rate (schedulers pass the
    current value explicitly).
    """
    if set(params) != set(grads):
        raise ShapeMismatchError("params and grads have different keys")
    if lr is None:
        lr = state.lr_peak
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatchError(f"{name}: grad shape {g.shape} != param shape {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p -= lr * (m_hat / (np.sqrt(v_hat) + state.eps))
        if state.weight_decay != 0.0 and p.ndim > 1:
            p -= lr * state.weight_decay * p
    return params, state


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int) -> np.ndarray:
    """C x C integer counts with entry (true, predicted)."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ShapeMismatchError("y_true and y_pred differ in length")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def mcc(cm: np.ndarray) -> float:
    """Multiclass Matthews correlation coefficient (the R_K statistic).

    Reduces to the familiar binary MCC for 2x2 matrices. A degenerate
    denominator (e.g. a constant predictor) yields 0.
    """
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ShapeMismatchError(f"confusion matrix must be square, got {cm.shape}")
    total = int(cm.sum())
    if total == 0:
        raise EmptyMatrixError("confusion matrix has no counts")
    correct = int(np.trace(cm))
    true_marginals = cm.sum(axis=1)
    pred_marginals = cm.sum(axis=0)
    cov = float(correct * total - true_marginals @ pred_marginals)
    denom_true = float(total * total - true_marginals @ true_marginals)
    denom_pred = float(total * total - pred_marginals @ pred_marginals)
    denom = math.sqrt(denom_true) * math.sqrt(denom_pred)
    if denom == 0.0:
        return 0.0
    return cov / denom


def predict_batches(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    ids: np.ndarray,
    batch_size: int = 64,
) -> np.ndarray:
    """Eval-mode argmax predictions for an encoded id matrix."""
    if len(ids) == 0:
        raise EmptyBatchError("no sequences to predict")
    out = []
    for start in range(0, len(ids), batch_size):
        chunk = ids[start : start + batch_size]
        width = int((chunk != 0).sum(axis=1).max())  # PAD is id 0
        logits, _ = forward(params, config, chunk[:, :width])
        out.append(np.argmax(logits, axis=1))
    return np.concatenate(out)


def predict_proba_batches(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    ids: np.ndarray,
    batch_size: int = 64,
) -> np.ndarray:
    if len(ids) == 0:
        raise EmptyBatchError("no sequences to predict")
    out = []
    for start in range(0, len(ids), batch_size):
        chunk = ids[start : start + batch_size]
        width = int((chunk != 0).sum(axis=1).max())
        logits, _ = forward(params, config, chunk[:, :width])
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        out.append(e / e.sum(axis=1, keepdims=True))
    return np.concatenate(out)


@dataclass
class TrainResult:
    """Dev-selected parameters plus the full training record."""

    params: dict[str, np.ndarray]  # checkpoint of the best dev-MCC epoch
    final_params: dict[str, np.ndarray]
    dev_mcc_history: list[float] = field(default_factory=list)
    loss_history: list[float] = field(default_factory=list)
    best_epoch: int = -1


def train(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    train_ids: np.ndarray,
    train_labels: np.ndarray,
    dev_ids: np.ndarray,
    dev_labels: np.ndarray,
    epochs: int = 3,
    batch_size: int = 32,
    lr_peak: float = 1e-4,
    weight_decay: float = 0.01,
    seed: int = 0,
    eval_batch_size: int = 64,
) -> TrainResult:
    """Seeded epoch loop: shuffle, step with the warmup/cosine schedule,
    evaluate dev MCC each epoch, and keep the best-dev checkpoint.

    With ``epochs=0`` the initial parameters come back unchanged with an
    empty history. Identical seeds produce identical histories and
    parameters.
    """
    n = len(train_ids)
    if n == 0:
        raise EmptyBatchError("empty training split")
    if len(train_labels) != n:
        raise ShapeMismatchError("train ids and labels differ in length")
    if epochs == 0:
        return TrainResult(params=params, final_params=params)
    root = np.random.default_rng(seed)
    shuffle_rng = np.random.default_rng(root.integers(2**63))
    dropout_rng = np.random.default_rng(root.integers(2**63))

    state = AdamWState.init(params, lr_peak=lr_peak, weight_decay=weight_decay)
    batches_per_epoch = math.ceil(n / batch_size)
    total_steps = epochs * batches_per_epoch
    step = 0
    best_mcc = -np.inf
    best_epoch = -1
    best_params: dict[str, np.ndarray] = {k: p.copy() for k, p in params.items()}
    dev_history: list[float] = []
    loss_history: list[float] = []

    for epoch in range(epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, batch_size):
            take = order[start : start + batch_size]
            batch_ids = train_ids[take]
            width = int((batch_ids != 0).sum(axis=1).max())
            step += 1
            loss, grads = loss_and_gradients(
                params, config, batch_ids[:, :width], train_labels[take], rng=dropout_rng
            )
            adamw_step(params, grads, state, lr=lr_at(step, total_steps, lr_peak))
            loss_history.append(loss)
        preds = predict_batches(params, config, dev_ids, batch_size=eval_batch_size)
        cm = confusion_matrix(dev_labels, preds, config.num_classes)
        dev_mcc = mcc(cm)
        dev_history.append(dev_mcc)
        if dev_mcc > best_mcc:
            best_mcc = dev_mcc
            best_epoch = epoch
            best_params = {k: p.copy() for k, p in params.items()}

    return TrainResult(
        params=best_params,
        final_params=params,
        dev_mcc_history=dev_history,
        loss_history=loss_history,
        best_epoch=best_epoch,
    )


def evaluate(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    tokenizer,
    records: Sequence[tuple[str, int]],
    perturbation: PerturbationKind = Original(),
    seed: int = 0,
    batch_size: int = 64,
) -> tuple[np.ndarray, float]:
    """Perturb, tokenize, and classify a split; returns (confusion matrix, MCC).

    The perturbation stream is seeded, so the same seed reproduces the same
    perturbed sequences and therefore the same MCC.
    """
    if not records:
        raise EmptyBatchError("empty evaluation split")
    rng = np.random.default_rng(seed)
    seqs = [perturb(seq, perturbation, rng) for seq, _ in records]
    labels = np.array([label for _, label in records], dtype=np.int64)
    ids = tokenizer.transform(seqs)
    preds = predict_batches(params, config, ids, batch_size=batch_size)
    cm = confusion_matrix(labels, preds, config.num_classes)
    return cm, mcc(cm)
