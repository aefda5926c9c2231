"""Multilabel metrics, PR-AUC and the multitask loss combiner."""
from __future__ import annotations

import math

import numpy as np

from ..taxonomy import LABELS


def _pair(preds, golds) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds).astype(bool)
    g = np.asarray(golds).astype(bool)
    if p.ndim == 1:
        p = p[None, :]
    if g.ndim == 1:
        g = g[None, :]
    if p.shape != g.shape or p.ndim != 2:
        raise ValueError(f"prediction shape {p.shape} does not match gold shape {g.shape}")
    if p.shape[1] != len(LABELS):
        raise ValueError(f"label vectors must have {len(LABELS)} entries, got {p.shape[1]}")
    if p.shape[0] == 0:
        raise ValueError("no samples")
    return p, g


def per_sample_jaccard(preds, golds) -> np.ndarray:
    """|pred & gold| / |pred | gold| per row; 0/0 counts as 1."""
    p, g = _pair(preds, golds)
    inter = (p & g).sum(axis=1)
    union = (p | g).sum(axis=1)
    out = np.ones(len(p))
    nz = union > 0
    out[nz] = inter[nz] / union[nz]
    return out


def emr(preds, golds) -> float:
    p, g = _pair(preds, golds)
    return float(np.mean((p == g).all(axis=1)))


def hamming_loss(preds, golds) -> float:
    p, g = _pair(preds, golds)
    return float(np.mean(p != g))


def jaccard(preds, golds) -> float:
    return float(np.mean(per_sample_jaccard(preds, golds)))


def at_least_one_correct(preds, golds) -> float:
    p, g = _pair(preds, golds)
    return float(np.mean((p & g).any(axis=1)))


def per_label_counts(preds, golds) -> dict[str, dict[str, int]]:
    p, g = _pair(preds, golds)
    return {lab.name: {"gold": int(g[:, j].sum()), "predicted": int(p[:, j].sum()),
                       "correct": int((p[:, j] & g[:, j]).sum())}
            for j, lab in enumerate(LABELS)}


def multilabel_report(preds, golds) -> dict:
    return {
        "jaccard": jaccard(preds, golds),
        "hamming": hamming_loss(preds, golds),
        "emr": emr(preds, golds),
        "at_least_one": at_least_one_correct(preds, golds),
        "n": int(np.asarray(golds).shape[0]),
        "per_label_counts": per_label_counts(preds, golds),
    }


def multitask_loss(main_loss: float, ordinality_loss: float, weight: float = 1.0) -> float:
    if not (math.isfinite(main_loss) and math.isfinite(ordinality_loss) and math.isfinite(weight)):
        raise ValueError("multitask loss inputs must be finite")
    return main_loss + weight * ordinality_loss


def pr_auc(scores, labels) -> float:
    """Step-wise area under the precision-recall curve.

    Sweeps thresholds over the distinct scores in descending order; tied
    scores enter together. Sum of (recall gain) x (precision) per step.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-d of equal length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be binary")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise ValueError("PR-AUC needs at least one positive and one negative")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last_of_group = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(y)[last_of_group]
    k = np.flatnonzero(last_of_group) + 1
    precision = tp / k
    recall = tp / n_pos
    gains = np.diff(np.r_[0.0, recall])
    return float(np.sum(gains * precision))
