from __future__ import annotations

import numpy as np

from .errors import EmptyEvalSet


def accuracy(y_true, y_pred) -> float:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if len(y_true) == 0:
        raise EmptyEvalSet("no samples to score")
    return float(np.mean(y_true == y_pred))


def f1_binary(y_true, y_pred, positive: int = 1) -> float:
    """F1 of the positive class; 0 when there is no true or predicted positive."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if len(y_true) == 0:
        raise EmptyEvalSet("no samples to score")
    tp = np.sum((y_pred == positive) & (y_true == positive))
    fp = np.sum((y_pred == positive) & (y_true != positive))
    fn = np.sum((y_pred != positive) & (y_true == positive))
    denom = 2 * tp + fp + fn
    return float(2 * tp / denom) if tp > 0 else 0.0


def per_subject_summary(rows, keys=("acc", "f1")) -> dict:
    """Mean and population std across test subjects, never pooled over clips."""
    out = {}
    for k in keys:
        vals = np.array([r[k] for r in rows], dtype=float)
        out[k] = (float(vals.mean()), float(vals.std()))
    return out
