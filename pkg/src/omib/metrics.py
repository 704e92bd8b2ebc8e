"""Classification and anomaly-detection metrics."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def accuracy(preds, labels) -> float:
    preds, labels = np.asarray(preds), np.asarray(labels)
    if preds.shape != labels.shape:
        raise ValueError(f"accuracy: shapes differ {preds.shape} vs {labels.shape}")
    if preds.size == 0:
        raise ValueError("accuracy: empty input")
    return float(np.mean(preds == labels))


def _check_scored(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1 or scores.size == 0:
        raise ValueError(f"need equal-length 1-D scores/labels, got {scores.shape} and {labels.shape}")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise ValueError("both classes must be present")
    return scores, labels.astype(np.int64), n_pos


def binary_auc(scores, labels) -> float:
    """ROC-AUC as the Mann-Whitney U statistic; tied pairs count one half.

    Higher scores are taken to indicate the positive class (label 1).
    """
    scores, labels, n_pos = _check_scored(scores, labels)
    n_neg = labels.size - n_pos
    ranks = rankdata(scores)  # average ranks give ties 0.5 credit
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def f1_at_matched_threshold(scores, labels) -> float:
    """F1 when exactly as many samples are flagged as there are true positives.

    Samples are ranked by descending score, ties broken by ascending index,
    and the top ``sum(labels)`` are predicted positive.
    """
    scores, labels, n_pos = _check_scored(scores, labels)
    order = np.lexsort((np.arange(scores.size), -scores))
    pred = np.zeros_like(labels)
    pred[order[:n_pos]] = 1
    tp = int(np.sum(pred & labels))
    fp = n_pos - tp
    fn = n_pos - tp
    if tp == 0:
        return 0.0
    return float(2 * tp / (2 * tp + fp + fn))
