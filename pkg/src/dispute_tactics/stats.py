"""Correlation, agreement, PMI and resampling significance tests."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, asdict
from typing import Hashable, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

DEFAULT_RESAMPLES = 10_000


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n_resamples: int
    seed: int
    n: int = 0

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return asdict(self)


def _pearson_arrays(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        raise ValueError("correlation undefined for constant input")
    return float(np.clip((dx @ dy) / denom, -1.0, 1.0))


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1-d sequences of equal length")
    if len(x) < 2:
        raise ValueError("pearson needs at least 2 observations")
    return _pearson_arrays(x, y)


def spearman(x: Sequence[float], y: Sequence[float], n_resamples: int = DEFAULT_RESAMPLES,
             seed: int = 0) -> TestResult:
    """Spearman's rho with tie-averaged ranks; two-sided permutation p-value."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("spearman needs two 1-d sequences of equal length")
    if len(x) < 3:
        raise ValueError("spearman needs at least 3 observations")
    rx, ry = rankdata(x), rankdata(y)
    rho = _pearson_arrays(rx, ry)
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    rng = np.random.default_rng(seed)
    rx_c = rx - rx.mean()
    ry_c = ry - ry.mean()
    norm = math.sqrt(float(rx_c @ rx_c) * float(ry_c @ ry_c))
    hits = 0
    chunk = 1000
    done = 0
    while done < n_resamples:
        m = min(chunk, n_resamples - done)
        perms = rng.permuted(np.tile(ry_c, (m, 1)), axis=1)
        r = perms @ rx_c / norm
        hits += int(np.sum(np.abs(r) >= abs(rho) - 1e-12))
        done += m
    p = (hits + 1) / (n_resamples + 1)
    return TestResult(rho, p, n_resamples, seed, len(x))


def cohens_kappa(a: Sequence[Hashable], b: Sequence[Hashable]) -> float:
    """Cohen's kappa treating every value as a nominal category."""
    if len(a) != len(b):
        raise ValueError("annotation sequences differ in length")
    n = len(a)
    if n < 1:
        raise ValueError("cohens_kappa needs at least one item")
    p_o = sum(1 for u, v in zip(a, b) if u == v) / n
    ca, cb = Counter(a), Counter(b)
    p_e = sum(ca[k] * cb.get(k, 0) for k in ca) / (n * n)
    if p_e >= 1.0:
        raise ValueError("kappa undefined: expected agreement is 1")
    return (p_o - p_e) / (1.0 - p_e)


def pmi(count_xy: int, count_x: int, count_y: int, n: int) -> float:
    """log2 of P(x,y) / (P(x) P(y)) from raw counts."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if count_x < 1 or count_y < 1:
        raise ValueError("marginal counts must be >= 1")
    if count_xy < 1:
        raise ValueError("PMI undefined for zero joint count")
    return math.log2(count_xy * n / (count_x * count_y))


def paired_permutation_test(scores_a: Sequence[float], scores_b: Sequence[float],
                            n_resamples: int = DEFAULT_RESAMPLES, seed: int = 0) -> TestResult:
    """Two-sided sign-flip test on the mean paired difference.

    The p-value counts the observed assignment, ``(hits + 1) / (n + 1)``,
    so it is never zero.
    """
    a = np.asarray(scores_a, dtype=float)
    b = np.asarray(scores_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired scores must be 1-d sequences of equal length")
    if len(a) < 1:
        raise ValueError("paired_permutation_test needs at least one pair")
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    d = a - b
    observed = abs(d.mean())
    tol = 1e-12 * max(1.0, float(np.abs(d).max()))
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    chunk = max(1, min(n_resamples, 2_000_000 // max(1, len(d))))
    while done < n_resamples:
        m = min(chunk, n_resamples - done)
        signs = rng.integers(0, 2, size=(m, len(d))) * 2 - 1
        means = np.abs(signs @ d) / len(d)
        hits += int(np.sum(means >= observed - tol))
        done += m
    p = (hits + 1) / (n_resamples + 1)
    return TestResult(float(d.mean()), p, n_resamples, seed, len(d))
