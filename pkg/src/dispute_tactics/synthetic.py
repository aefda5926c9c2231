"""Seeded synthetic corpora for tests and demos.

Each tactic label is keyed to a unique token (``kw_<label>``) mixed into
filler text, so a bag-of-words model can learn the mapping exactly.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .corpus import Conversation, Corpus, Utterance
from .taxonomy import LABELS, TacticLabel, labels

FILLER = tuple(f"w{i}" for i in range(40))
ESCALATION_TOKEN = "attackword"


def key_token(lab: TacticLabel) -> str:
    return "kw_" + lab.name.replace("-", "_")


def default_labelsets() -> list[frozenset]:
    """All 18 singletons plus two frequent rebuttal/coordination pairs."""
    sets = [frozenset([lab]) for lab in LABELS]
    sets.append(labels("credibility-attack", "counterargument"))
    sets.append(labels("counterargument", "coordinating-edits"))
    return sets


def keyed_corpus(n_conversations: int = 60, seed: int = 0, min_len: int = 5, max_len: int = 15,
                 labelsets: Optional[Sequence[frozenset]] = None, n_speakers: int = 6,
                 filler_tokens: int = 6, escalation_keyed: bool = False) -> Corpus:
    """Random conversations whose utterances contain one key token per label.

    With ``escalation_keyed`` a conversation is escalated iff one of its
    utterances contains ``attackword``; otherwise the flag is random.
    """
    rng = np.random.default_rng(seed)
    pool = list(labelsets) if labelsets is not None else default_labelsets()
    weights = np.linspace(2.0, 1.0, len(pool))
    weights /= weights.sum()
    convs = []
    for c in range(n_conversations):
        n = int(rng.integers(min_len, max_len + 1))
        escalated = bool(rng.random() < 0.5)
        marked = int(rng.integers(n)) if (escalation_keyed and escalated) else -1
        utts = []
        for k in range(n):
            labs = pool[int(rng.choice(len(pool), p=weights))]
            words = list(rng.choice(FILLER, size=filler_tokens))
            words += [key_token(lab) for lab in labs]
            if k == marked:
                words.append(ESCALATION_TOKEN)
            rng.shuffle(words)
            speaker = f"user{int(rng.integers(n_speakers))}"
            utts.append(Utterance(k, speaker, " ".join(words), frozenset(labs)))
        convs.append(Conversation(f"conv{c:04d}", tuple(utts), f"Article {c}", escalated))
    return Corpus(tuple(convs))


def random_labelset(rng: np.random.Generator, max_rebuttal: int = 3, max_coordination: int = 2,
                    allow_empty: bool = False) -> frozenset:
    """A random labelset that respects the per-utterance limits."""
    from .taxonomy import COORDINATION_LABELS, REBUTTAL_LABELS

    while True:
        n_r = int(rng.integers(0, max_rebuttal + 1))
        n_c = int(rng.integers(0, max_coordination + 1))
        chosen = list(rng.choice(len(REBUTTAL_LABELS), size=n_r, replace=False))
        picked = [REBUTTAL_LABELS[i] for i in chosen]
        chosen = list(rng.choice(len(COORDINATION_LABELS), size=n_c, replace=False))
        picked += [COORDINATION_LABELS[i] for i in chosen]
        if picked or allow_empty:
            return frozenset(picked)


def random_corpus(n_conversations: int = 20, seed: int = 0, max_len: int = 12,
                  n_speakers: int = 8) -> Corpus:
    """Unstructured random corpus for fuzzing analyses."""
    rng = np.random.default_rng(seed)
    convs = []
    for c in range(n_conversations):
        n = int(rng.integers(1, max_len + 1))
        utts = tuple(Utterance(k, f"u{int(rng.integers(n_speakers))}", f"text {c} {k}", random_labelset(rng))
                     for k in range(n))
        convs.append(Conversation(f"c{c}", utts, None, bool(rng.random() < 0.5)))
    return Corpus(tuple(convs))
