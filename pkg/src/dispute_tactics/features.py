"""Tokenisation, vocabulary and bag-of-words / context feature encoding."""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import sparse

from .corpus import Conversation, Corpus, Utterance

UNK = "<unk>"
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase; word runs and single punctuation characters become tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]           # index order; index 0 is UNK
    min_freq: int = 2
    max_size: int = 10_000
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.tokens or self.tokens[0] != UNK:
            raise ValueError("vocabulary must start with the unknown token")
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})

    unk_index = 0

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token != UNK and token in self.index

    def lookup(self, token: str) -> int:
        return self.index.get(token, self.unk_index)

    def to_dict(self) -> dict:
        return {"tokens": list(self.tokens), "min_freq": self.min_freq, "max_size": self.max_size}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        return cls(tuple(d["tokens"]), d["min_freq"], d["max_size"])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False)

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_vocab(train: Corpus, min_freq: int = 2, max_size: int = 10_000) -> Vocab:
    """Most frequent training tokens first, ties broken lexicographically."""
    if not train.conversations:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = Counter(tok for u in train.utterances() for tok in tokenize(u.text))
    kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    return Vocab((UNK, *kept[:max_size]), min_freq, max_size)


@dataclass
class FeatureVector:
    """Sparse non-negative weights over ``dim`` feature indices."""

    weights: dict[int, float]
    dim: int

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        for i, w in self.weights.items():
            out[i] = w
        return out

    def __add__(self, other: "FeatureVector") -> "FeatureVector":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        w = dict(self.weights)
        for i, v in other.weights.items():
            w[i] = w.get(i, 0.0) + v
        return FeatureVector(w, self.dim)

    def concat(self, other: "FeatureVector") -> "FeatureVector":
        w = dict(self.weights)
        w.update({i + self.dim: v for i, v in other.weights.items()})
        return FeatureVector(w, self.dim + other.dim)


def _bow(tokens: Iterable[str], vocab: Vocab, binary: bool = False) -> FeatureVector:
    counts = Counter(vocab.lookup(t) for t in tokens)
    if binary:
        return FeatureVector({i: 1.0 for i in counts}, len(vocab))
    return FeatureVector({i: float(c) for i, c in counts.items()}, len(vocab))


def bow_vector(utterance: Utterance, vocab: Vocab, binary: bool = False) -> FeatureVector:
    return _bow(tokenize(utterance.text), vocab, binary)


def context_vector(conv: Conversation, index: int, vocab: Vocab, binary: bool = False,
                   max_tokens: Optional[int] = None) -> FeatureVector:
    """BoW over utterances ``0..index-1``; ``max_tokens`` keeps the most recent tokens."""
    if not 0 <= index < len(conv):
        raise IndexError(f"utterance index {index} out of range for conversation of length {len(conv)}")
    tokens = [t for u in conv.utterances[:index] for t in tokenize(u.text)]
    if max_tokens is not None:
        tokens = tokens[-max_tokens:] if max_tokens > 0 else []
    return _bow(tokens, vocab, binary)


@dataclass(frozen=True)
class FeatureConfig:
    context: bool = False
    binary: bool = False
    context_max_tokens: Optional[int] = None

    def dim(self, vocab: Vocab) -> int:
        return len(vocab) * (2 if self.context else 1)


def encode_conversation(conv: Conversation, vocab: Vocab, cfg: FeatureConfig) -> sparse.csr_matrix:
    """One row per utterance: utterance BoW, followed by context BoW when enabled."""
    V = len(vocab)
    rows, cols, vals = [], [], []
    running: Counter = Counter()
    history: list[int] = []
    for k, utt in enumerate(conv.utterances):
        ids = [vocab.lookup(t) for t in tokenize(utt.text)]
        own = Counter(ids)
        for i, c in own.items():
            rows.append(k); cols.append(i); vals.append(1.0 if cfg.binary else float(c))
        if cfg.context:
            if cfg.context_max_tokens is None:
                ctx = running
            else:
                keep = history[-cfg.context_max_tokens:] if cfg.context_max_tokens > 0 else []
                ctx = Counter(keep)
            for i, c in ctx.items():
                if c:
                    rows.append(k); cols.append(V + i); vals.append(1.0 if cfg.binary else float(c))
            running.update(ids)
            history.extend(ids)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(len(conv), cfg.dim(vocab)))


def encode_corpus(corpus: Corpus, vocab: Vocab, cfg: FeatureConfig) -> sparse.csr_matrix:
    blocks = [encode_conversation(c, vocab, cfg) for c in corpus]
    if not blocks:
        return sparse.csr_matrix((0, cfg.dim(vocab)))
    return sparse.vstack(blocks, format="csr")
