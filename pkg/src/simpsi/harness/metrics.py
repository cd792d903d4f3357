"""Symbol accuracy and average precision."""

from __future__ import annotations

from decimal import Context, Decimal

import numpy as np

_EXACT = Context(prec=60)


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError(f"predictions {predictions.shape} and labels {labels.shape} differ")
    return float(np.mean(predictions == labels))


def auprc(scores, labels) -> float:
    """Average precision: sum of (R_i - R_{i-1}) * P_i over descending thresholds.

    Tied scores form one threshold. The sum is accumulated in 60-digit decimal
    arithmetic so the returned float is the correctly rounded value.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("auprc needs at least one positive label")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    # the last index of every run of tied scores closes a threshold
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[last]
    seen = last + 1
    gained = np.diff(np.r_[0, tp])
    total = Decimal(0)
    for d_tp, t, k in zip(gained.tolist(), tp.tolist(), seen.tolist()):
        if d_tp:
            total = _EXACT.add(total, _EXACT.divide(Decimal(d_tp * t), Decimal(k)))
    return float(_EXACT.divide(total, Decimal(n_pos)))


def macro_auprc(probs: np.ndarray, labels: np.ndarray) -> tuple[float, list[float | None]]:
    """One-vs-rest AUPRC per class over flattened symbols, averaged over present classes.

    ``probs`` is [..., M] and ``labels`` the matching leading shape. Classes
    absent from ``labels`` report ``None`` and are left out of the mean.
    """
    probs = np.asarray(probs)
    m = probs.shape[-1]
    flat_p = probs.reshape(-1, m)
    flat_y = np.asarray(labels).reshape(-1)
    per_class: list[float | None] = []
    for c in range(m):
        positives = flat_y == c
        per_class.append(auprc(flat_p[:, c], positives) if positives.any() else None)
    present = [v for v in per_class if v is not None]
    return float(np.mean(present)), per_class
