from __future__ import annotations

import numpy as np

N_CLASSES = 3


def _pair(preds, labels):
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValueError("preds and labels must have the same length")
    if preds.size == 0:
        raise ValueError("metrics are undefined on empty input")
    return preds, labels


def confusion_matrix(preds, labels, n_classes: int = N_CLASSES) -> np.ndarray:
    """Rows are true labels, columns predictions."""
    preds, labels = _pair(preds, labels)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def precision_recall_f1(preds, labels, n_classes: int = N_CLASSES):
    """Per-class precision, recall, F1; 0/0 is taken as 0."""
    cm = confusion_matrix(preds, labels, n_classes)
    tp = np.diag(cm).astype(float)
    pred_tot = cm.sum(axis=0)
    true_tot = cm.sum(axis=1)
    precision = np.divide(tp, pred_tot, out=np.zeros(n_classes), where=pred_tot > 0)
    recall = np.divide(tp, true_tot, out=np.zeros(n_classes), where=true_tot > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(n_classes), where=denom > 0)
    return precision, recall, f1


def macro_f1(preds, labels) -> float:
    """Unweighted mean of the three per-class F1 scores.

    A class absent from both predictions and labels contributes 0.
    """
    return float(precision_recall_f1(preds, labels)[2].mean())


def accuracy(preds, labels) -> float:
    preds, labels = _pair(preds, labels)
    return float((preds == labels).mean())
