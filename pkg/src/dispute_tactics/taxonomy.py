"""Tactic taxonomy: the 18 labels, rebuttal levels and label-vector layout.

Canonical order puts rebuttal labels first (ascending level, then name),
followed by the coordination labels alphabetically. Checkpoints and label
vectors depend on this order, so it must never change within a schema
version.
"""
from __future__ import annotations

import enum
import statistics
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

SCHEMA_VERSION = "1"


class Kind(str, enum.Enum):
    REBUTTAL = "rebuttal"
    COORDINATION = "coordination"


@dataclass(frozen=True, order=False)
class TacticLabel:
    name: str
    kind: Kind
    level: Optional[int] = None
    index: int = -1

    def __post_init__(self):
        if (self.kind is Kind.REBUTTAL) != (self.level is not None):
            raise ValueError(f"{self.name}: level must be set iff kind is rebuttal")

    def __lt__(self, other: "TacticLabel") -> bool:
        return self.index < other.index

    def __repr__(self) -> str:
        return f"TacticLabel({self.name!r})"

    def __str__(self) -> str:
        return self.name


_REBUTTAL = [
    ("name-calling", 0),
    ("credibility-attack", 1),
    ("derailing", 2),
    ("policing", 3),
    ("stating-stance", 4),
    ("repeated-argument", 4),
    ("counterargument", 5),
    ("refutation", 6),
    ("refuting-central-point", 7),
]
_COORDINATION = [
    "coordinating-edits",
    "contextualisation",
    "asking-questions",
    "providing-clarification",
    "suggesting-compromise",
    "conceding-recanting",
    "bailing-out",
    "i-dont-know",
    "other",
]


def _build() -> tuple[TacticLabel, ...]:
    rebuttal = sorted(_REBUTTAL, key=lambda p: (p[1], p[0]))
    ordered = [(n, Kind.REBUTTAL, lvl) for n, lvl in rebuttal]
    ordered += [(n, Kind.COORDINATION, None) for n in sorted(_COORDINATION)]
    return tuple(TacticLabel(n, k, lvl, i) for i, (n, k, lvl) in enumerate(ordered))


LABELS: tuple[TacticLabel, ...] = _build()
N_LABELS = len(LABELS)
LABEL_BY_NAME: dict[str, TacticLabel] = {lab.name: lab for lab in LABELS}
REBUTTAL_LABELS = tuple(lab for lab in LABELS if lab.kind is Kind.REBUTTAL)
COORDINATION_LABELS = tuple(lab for lab in LABELS if lab.kind is Kind.COORDINATION)

# Default reference level before the first rebuttal-bearing utterance.
INITIAL_REFERENCE_LEVEL = 3


def label(name: str) -> TacticLabel:
    """Look up a canonical label by name (raises KeyError)."""
    return LABEL_BY_NAME[name]


def labels(*names: str) -> frozenset[TacticLabel]:
    return frozenset(LABEL_BY_NAME[n] for n in names)


def rebuttal_level(lab: TacticLabel) -> Optional[int]:
    return lab.level


def is_personal_attack(lab: TacticLabel) -> bool:
    return lab.level is not None and lab.level <= 1


def has_attack(labelset: Iterable[TacticLabel]) -> bool:
    return any(is_personal_attack(lab) for lab in labelset)


def rebuttal_levels(labelset: Iterable[TacticLabel]) -> list[int]:
    return sorted(lab.level for lab in labelset if lab.level is not None)


def reference_level(labelset: Iterable[TacticLabel], how: str = "max") -> Optional[float]:
    """Reference rebuttal level of one utterance's labels.

    ``how`` is ``max`` (default), ``median`` or ``min``. Returns None when
    the labelset carries no rebuttal tactic.
    """
    levels = rebuttal_levels(labelset)
    if not levels:
        return None
    if how == "max":
        return levels[-1]
    if how == "min":
        return levels[0]
    if how == "median":
        return statistics.median(levels)
    raise ValueError(f"unknown reference rule {how!r}")


class Ordinality(enum.IntEnum):
    UP = 0
    DOWN = 1
    SAME = 2
    COORDINATION = 3


def ordinality_sequence(conv, how: str = "max") -> list[Ordinality]:
    """Direction of each utterance's rebuttal level relative to the last one.

    Coordination-only utterances are tagged COORDINATION and leave the
    running reference untouched; the chain starts at level 3.
    """
    prev = INITIAL_REFERENCE_LEVEL
    out = []
    for utt in conv.utterances:
        ref = reference_level(utt.labels, how)
        if ref is None:
            out.append(Ordinality.COORDINATION)
            continue
        if ref > prev:
            out.append(Ordinality.UP)
        elif ref < prev:
            out.append(Ordinality.DOWN)
        else:
            out.append(Ordinality.SAME)
        prev = ref
    return out


def to_vector(labelset: Iterable[TacticLabel]) -> np.ndarray:
    v = np.zeros(N_LABELS, dtype=np.int8)
    for lab in labelset:
        v[lab.index] = 1
    return v


def from_vector(v) -> frozenset[TacticLabel]:
    v = np.asarray(v)
    if v.shape != (N_LABELS,):
        raise ValueError(f"expected a vector of length {N_LABELS}, got shape {v.shape}")
    if not np.isin(v, (0, 1)).all():
        raise ValueError("label vector entries must be 0 or 1")
    return frozenset(LABELS[i] for i in np.flatnonzero(v))


def sort_labels(labelset: Iterable[TacticLabel]) -> list[TacticLabel]:
    return sorted(labelset, key=lambda lab: lab.index)
