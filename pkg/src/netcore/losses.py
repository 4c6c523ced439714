"""
Training losses and the metrics reported next to them.
"""
import numpy as np

from src.core.errors import ContractViolation
from src.netcore import tape as T
from src.netcore.tape import Value


def _check_shapes(pred: Value, target: np.ndarray) -> None:
    if pred.shape != target.shape:
        raise ContractViolation(f"prediction shape {pred.shape} does not match target shape {target.shape}")


def l1(pred: T.ValueLike, target) -> Value:
    pred, target = T.as_value(pred), T.raw(target)
    _check_shapes(pred, target)
    return T.mean(T.vabs(pred - target))


def cosine_similarity(pred: T.ValueLike, target) -> Value:
    """Mean over rows of the cosine between predicted and target vectors."""
    pred, target = T.as_value(pred), T.raw(target)
    _check_shapes(pred, target)
    dots = T.vsum(pred * target, axis=-1)
    pred_norm = T.sqrt(T.vsum(pred * pred, axis=-1) + 1e-24)
    target_norm = np.linalg.norm(target, axis=-1)
    return T.mean(dots * T.reciprocal(pred_norm) * (1.0 / target_norm))


def cross_entropy(logits: T.ValueLike, labels, smoothing: float = 0.0) -> Value:
    """Mean cross-entropy of ``(B, C)`` logits against integer labels, with label smoothing."""
    logits = T.as_value(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ContractViolation(f"logits of shape {logits.shape} do not match {labels.shape[0]} labels")
    if not 0.0 <= smoothing < 1.0:
        raise ContractViolation(f"label smoothing must be in [0, 1), got {smoothing}")
    batch, classes = logits.shape
    if np.any(labels < 0) or np.any(labels >= classes):
        raise ContractViolation(f"labels must lie in [0, {classes})")
    shift = logits.data.max(axis=-1, keepdims=True)
    lse = T.log(T.vsum(T.exp(logits - shift), axis=-1, keepdims=True)) + shift
    log_probs = logits - lse
    target = np.full((batch, classes), smoothing / classes)
    target[np.arange(batch), labels] += 1.0 - smoothing
    return -T.vsum(log_probs * target) * (1.0 / batch)


def accuracy(logits, labels) -> float:
    labels = np.asarray(labels).reshape(-1)
    return float(np.mean(np.argmax(T.raw(logits), axis=-1) == labels))


def mean_iou(logits, labels, num_classes: int) -> float:
    """Intersection over union per class, averaged over classes present in the prediction or the labels."""
    labels = np.asarray(labels).reshape(-1)
    predicted = np.argmax(T.raw(logits), axis=-1).reshape(-1)
    if predicted.shape != labels.shape:
        raise ContractViolation(f"{predicted.shape[0]} predictions for {labels.shape[0]} labels")
    scores = []
    for c in range(num_classes):
        union = np.sum((predicted == c) | (labels == c))
        if union:
            scores.append(np.sum((predicted == c) & (labels == c)) / union)
    return float(np.mean(scores)) if scores else 1.0
