import math

import numpy as np
import pytest

from dispute_tactics import stats


def test_pearson_example():
    assert stats.pearson([0, 1, 2], [0, 1, 4]) == pytest.approx(0.96076892283, abs=1e-9)
    with pytest.raises(ValueError):
        stats.pearson([1, 1, 1], [0, 1, 2])


def test_spearman_ties_and_pvalue_bounds():
    res = stats.spearman([1, 2, 2, 3], [1, 3, 2, 4], n_resamples=500, seed=1)
    assert res.statistic == pytest.approx(0.9486832980505138)
    assert 1 / 501 <= res.p_value <= 1
    assert stats.spearman([1, 2, 3, 4, 5], [5, 4, 3, 2, 1], 200).statistic == pytest.approx(-1)


def test_spearman_seeded():
    x, y = np.arange(10.0), np.array([3, 1, 4, 1, 5, 9, 2, 6, 5, 3.0])
    assert stats.spearman(x, y, 1000, seed=3) == stats.spearman(x, y, 1000, seed=3)


def test_kappa_example():
    assert stats.cohens_kappa(["x", "x", "y", "y"], ["x", "y", "y", "y"]) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        stats.cohens_kappa(["x"], ["x"])


def test_pmi_example():
    assert stats.pmi(4, 20, 10, 100) == pytest.approx(1.0)
    assert stats.pmi(1, 20, 10, 100) == pytest.approx(math.log2(0.5))
    with pytest.raises(ValueError):
        stats.pmi(0, 20, 10, 100)


def test_paired_test_identical_scores():
    res = stats.paired_permutation_test([0.5, 0.2, 1.0], [0.5, 0.2, 1.0], 100)
    assert res.statistic == 0 and res.p_value == 1.0


def test_paired_test_clear_difference():
    a = np.ones(30)
    b = np.zeros(30)
    res = stats.paired_permutation_test(a, b, 2000, seed=0)
    assert res.statistic == 1.0
    assert res.p_value == pytest.approx(1 / 2001)
