"""Truncated label powerset: the top-K labelset catalog and subset fallback."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Optional

import numpy as np

from ..corpus import Corpus
from ..taxonomy import LABEL_BY_NAME, TacticLabel, sort_labels, to_vector

Labelset = frozenset  # frozenset[TacticLabel]


def _canon_key(ls: Labelset) -> tuple[int, ...]:
    return tuple(sorted(lab.index for lab in ls))


@dataclass(frozen=True)
class LabelsetCatalog:
    labelsets: tuple[Labelset, ...]
    frequencies: tuple[int, ...]
    coverage: float

    def __len__(self) -> int:
        return len(self.labelsets)

    def index_of(self, labels: Iterable[TacticLabel]) -> Optional[int]:
        try:
            return self.labelsets.index(frozenset(labels))
        except ValueError:
            return None

    def vectors(self) -> np.ndarray:
        return np.stack([to_vector(ls) for ls in self.labelsets])

    def to_dict(self) -> dict:
        return {
            "labelsets": [[lab.name for lab in sort_labels(ls)] for ls in self.labelsets],
            "frequencies": list(self.frequencies),
            "coverage": self.coverage,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabelsetCatalog":
        sets = tuple(frozenset(LABEL_BY_NAME[n] for n in names) for names in d["labelsets"])
        return cls(sets, tuple(d["frequencies"]), d["coverage"])


def build_catalog(train: Corpus, k: int = 20) -> LabelsetCatalog:
    """The ``k`` most frequent non-empty training labelsets.

    Ties in frequency go to the labelset whose sorted canonical label
    indices compare lower.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    sets = [u.labels for u in train.utterances()]
    if not sets:
        raise ValueError("cannot build a catalog from an empty corpus")
    counts = Counter(ls for ls in sets if ls)
    ranked = sorted(counts, key=lambda ls: (-counts[ls], _canon_key(ls)))[:k]
    chosen = set(ranked)
    coverage = sum(1 for ls in sets if ls in chosen) / len(sets)
    return LabelsetCatalog(tuple(ranked), tuple(counts[ls] for ls in ranked), coverage)


def map_to_catalog(labels: Iterable[TacticLabel], catalog: LabelsetCatalog) -> Optional[int]:
    """Exact catalog match, else the largest strict subset in the catalog.

    Among equally large subsets the more frequent (lower index) wins.
    Returns None when no non-empty subset of ``labels`` is catalogued.
    """
    target = frozenset(labels)
    exact = catalog.index_of(target)
    if exact is not None:
        return exact
    best, best_size = None, 0
    for i, ls in enumerate(catalog.labelsets):
        if ls and ls < target and len(ls) > best_size:
            best, best_size = i, len(ls)
    return best


def map_to_catalog_bruteforce(labels: Iterable[TacticLabel], catalog: LabelsetCatalog) -> Optional[int]:
    """Reference implementation: enumerate subsets from largest to smallest."""
    target = sort_labels(labels)
    for size in range(len(target), 0, -1):
        hits = [catalog.index_of(c) for c in combinations(target, size)]
        hits = [h for h in hits if h is not None]
        if hits:
            return min(hits)
    return None
