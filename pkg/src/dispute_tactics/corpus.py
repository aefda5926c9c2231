"""Loading, validating, summarising and splitting annotated dispute corpora.

The canonical on-disk format is JSON Lines, one conversation per line::

    {"conv_id": "...", "title": "...", "escalated": true,
     "utterances": [{"speaker": "...", "text": "...", "tactics": ["..."]}]}
"""
from __future__ import annotations

import hashlib
import json
import statistics
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .taxonomy import (
    LABEL_BY_NAME,
    LABELS,
    SCHEMA_VERSION,
    Kind,
    TacticLabel,
    sort_labels,
)

MAX_REBUTTAL = 3
MAX_COORDINATION = 2

PathLike = Union[str, Path]


class CorpusError(ValueError):
    """Raised for malformed corpus files or records."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownLabelError(CorpusError):
    def __init__(self, raw: str, line: Optional[int] = None):
        self.raw = raw
        super().__init__(f"unknown label string {raw!r}", line)


class CorpusValidationError(CorpusError):
    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        shown = "; ".join(str(v) for v in self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"{len(self.violations)} invariant violation(s): {shown}{more}")


@dataclass(frozen=True)
class Utterance:
    index: int
    speaker: str
    text: str
    labels: frozenset[TacticLabel]


@dataclass(frozen=True)
class Conversation:
    conv_id: str
    utterances: tuple[Utterance, ...]
    title: Optional[str] = None
    escalated: Optional[bool] = None

    def __len__(self) -> int:
        return len(self.utterances)

    @property
    def speakers(self) -> list[str]:
        return sorted({u.speaker for u in self.utterances})


@dataclass(frozen=True)
class Corpus:
    conversations: tuple[Conversation, ...]
    label_schema_version: str = SCHEMA_VERSION

    def __len__(self) -> int:
        return len(self.conversations)

    def __iter__(self):
        return iter(self.conversations)

    def utterances(self) -> Iterable[Utterance]:
        for conv in self.conversations:
            yield from conv.utterances

    def subset(self, conv_ids: Iterable[str]) -> "Corpus":
        by_id = {c.conv_id: c for c in self.conversations}
        return Corpus(tuple(by_id[i] for i in conv_ids), self.label_schema_version)


@dataclass(frozen=True)
class Violation:
    conv_id: str
    index: Optional[int]
    rule: str

    def __str__(self) -> str:
        where = f"utterance {self.index}" if self.index is not None else "conversation"
        return f"{self.conv_id} {where}: {self.rule}"


@dataclass
class CorpusStats:
    n_conversations: int
    n_utterances: int
    n_speakers: int
    length_median: float
    length_min: int
    length_max: int
    mean_utterance_tokens: float
    label_counts: dict[str, int]
    multilabel_fraction: float
    n_escalated: int = 0
    mean_speakers_per_conversation: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# -- schema -----------------------------------------------------------------

def default_schema_path() -> Path:
    return Path(str(resources.files("dispute_tactics") / "data" / "schema_v1.json"))


def load_schema(path: Optional[PathLike] = None) -> dict[str, TacticLabel]:
    """Return a raw-string -> TacticLabel mapping.

    Accepts either the shipped versioned format (``{"labels": [...]}`` with
    aliases) or a flat JSON object mapping raw strings to canonical names.
    Canonical names always map to themselves.
    """
    src = Path(path) if path is not None else default_schema_path()
    doc = json.loads(src.read_text(encoding="utf-8"))
    mapping = {lab.name: lab for lab in LABELS}
    if isinstance(doc, dict) and "labels" in doc and isinstance(doc["labels"], list):
        for entry in doc["labels"]:
            lab = LABEL_BY_NAME[entry["name"]]
            for alias in entry.get("aliases", []):
                mapping[alias] = lab
    elif isinstance(doc, dict):
        for raw, canonical in doc.items():
            if canonical not in LABEL_BY_NAME:
                raise CorpusError(f"schema maps {raw!r} to unknown canonical label {canonical!r}")
            mapping[raw] = LABEL_BY_NAME[canonical]
    else:
        raise CorpusError(f"schema file {src} must contain a JSON object")
    return mapping


def _resolve(raw: str, schema: Mapping[str, TacticLabel], unknown: str, line: int) -> TacticLabel:
    lab = schema.get(raw)
    if lab is None:
        lab = schema.get(raw.strip())
    if lab is not None:
        return lab
    if unknown == "other":
        return LABEL_BY_NAME["other"]
    raise UnknownLabelError(raw, line)


# -- parsing ----------------------------------------------------------------

def _conversation_from_record(rec, schema, unknown, line) -> Conversation:
    if not isinstance(rec, dict):
        raise CorpusError("record must be a JSON object", line)
    conv_id = rec.get("conv_id")
    if not isinstance(conv_id, str) or not conv_id:
        raise CorpusError("missing or non-string 'conv_id'", line)
    title = rec.get("title")
    if title is not None and not isinstance(title, str):
        raise CorpusError("'title' must be a string or null", line)
    escalated = rec.get("escalated")
    if escalated is not None and not isinstance(escalated, bool):
        raise CorpusError("'escalated' must be a boolean", line)
    raw_utts = rec.get("utterances")
    if not isinstance(raw_utts, list) or not raw_utts:
        raise CorpusError(f"conversation {conv_id!r} has no utterances", line)
    utts = []
    for i, u in enumerate(raw_utts):
        if not isinstance(u, dict):
            raise CorpusError(f"utterance {i} must be a JSON object", line)
        speaker, text, tactics = u.get("speaker"), u.get("text", ""), u.get("tactics", [])
        if not isinstance(speaker, str):
            raise CorpusError(f"utterance {i}: 'speaker' must be a string", line)
        if not isinstance(text, str):
            raise CorpusError(f"utterance {i}: 'text' must be a string", line)
        if not isinstance(tactics, list) or not all(isinstance(t, str) for t in tactics):
            raise CorpusError(f"utterance {i}: 'tactics' must be a list of strings", line)
        labs = frozenset(_resolve(t, schema, unknown, line) for t in tactics)
        utts.append(Utterance(i, speaker, text, labs))
    return Conversation(conv_id, tuple(utts), title, escalated)


def parse_corpus(
    path: PathLike,
    schema: Optional[Mapping[str, TacticLabel]] = None,
    unknown: str = "reject",
    strict: bool = True,
) -> Corpus:
    """Read a JSONL corpus.

    ``unknown`` is ``"reject"`` (raise UnknownLabelError) or ``"other"``.
    With ``strict`` every conversation must pass validate_conversation;
    otherwise violations are left for the caller to inspect.
    """
    if unknown not in ("reject", "other"):
        raise ValueError(f"unknown-label policy must be 'reject' or 'other', got {unknown!r}")
    if schema is None:
        schema = load_schema()
    convs = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"invalid JSON ({exc.msg})", lineno) from None
            conv = _conversation_from_record(rec, schema, unknown, lineno)
            if conv.conv_id in seen:
                raise CorpusError(f"duplicate conv_id {conv.conv_id!r}", lineno)
            seen.add(conv.conv_id)
            convs.append(conv)
    corpus = Corpus(tuple(convs))
    if strict:
        violations = [v for c in corpus for v in validate_conversation(c)]
        if violations:
            raise CorpusValidationError(violations)
    return corpus


def conversation_to_record(conv: Conversation) -> dict:
    return {
        "conv_id": conv.conv_id,
        "title": conv.title,
        "escalated": conv.escalated,
        "utterances": [
            {"speaker": u.speaker, "text": u.text, "tactics": [lab.name for lab in sort_labels(u.labels)]}
            for u in conv.utterances
        ],
    }


def dumps_corpus(corpus: Corpus) -> str:
    return "".join(json.dumps(conversation_to_record(c), ensure_ascii=False) + "\n" for c in corpus)


def write_corpus(corpus: Corpus, path: PathLike) -> None:
    Path(path).write_text(dumps_corpus(corpus), encoding="utf-8")


def corpus_checksum(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- validation -------------------------------------------------------------

def validate_conversation(conv: Conversation, require_labels: bool = True,
                          require_outcome: bool = False) -> list[Violation]:
    out = []
    if not conv.utterances:
        out.append(Violation(conv.conv_id, None, "conversation has no utterances"))
    if require_outcome and conv.escalated is None:
        out.append(Violation(conv.conv_id, None, "missing escalation outcome"))
    for pos, utt in enumerate(conv.utterances):
        if utt.index != pos:
            out.append(Violation(conv.conv_id, utt.index, f"index {utt.index} at position {pos}"))
        if require_labels and not utt.labels:
            out.append(Violation(conv.conv_id, utt.index, "empty labelset"))
        n_reb = sum(1 for lab in utt.labels if lab.kind is Kind.REBUTTAL)
        n_coord = len(utt.labels) - n_reb
        if n_reb > MAX_REBUTTAL:
            out.append(Violation(conv.conv_id, utt.index, f"max {MAX_REBUTTAL} rebuttal labels"))
        if n_coord > MAX_COORDINATION:
            out.append(Violation(conv.conv_id, utt.index, f"max {MAX_COORDINATION} coordination labels"))
    return out


def validate_corpus(corpus: Corpus, **kwargs) -> list[Violation]:
    return [v for conv in corpus for v in validate_conversation(conv, **kwargs)]


# -- statistics -------------------------------------------------------------

def corpus_stats(corpus: Corpus) -> CorpusStats:
    from .features import tokenize

    if not corpus.conversations:
        raise ValueError("corpus is empty")
    lengths = [len(c) for c in corpus]
    utts = list(corpus.utterances())
    counts = Counter(lab.name for u in utts for lab in u.labels)
    speakers = {u.speaker for u in utts}
    n_tokens = sum(len(tokenize(u.text)) for u in utts)
    return CorpusStats(
        n_conversations=len(corpus),
        n_utterances=len(utts),
        n_speakers=len(speakers),
        length_median=float(statistics.median(lengths)),
        length_min=min(lengths),
        length_max=max(lengths),
        mean_utterance_tokens=n_tokens / len(utts),
        label_counts={lab.name: counts.get(lab.name, 0) for lab in LABELS},
        multilabel_fraction=sum(1 for u in utts if len(u.labels) > 1) / len(utts),
        n_escalated=sum(1 for c in corpus if c.escalated),
        mean_speakers_per_conversation=float(np.mean([len(c.speakers) for c in corpus])),
    )


# -- splitting --------------------------------------------------------------

def split_sizes(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of ``n`` items; every part gets >= 1."""
    if any(r <= 0 for r in ratios):
        raise ValueError(f"split ratios must be positive, got {list(ratios)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {sum(ratios)!r}")
    if n < len(ratios):
        raise ValueError(f"cannot split {n} conversations into {len(ratios)} parts")
    quotas = [n * r for r in ratios]
    sizes = [int(np.floor(q)) for q in quotas]
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    for i, s in enumerate(sizes):
        if s == 0:
            donor = max(range(len(sizes)), key=lambda j: (sizes[j], -j))
            sizes[donor] -= 1
            sizes[i] = 1
    return sizes


def split_corpus(corpus: Corpus, ratios: Sequence[float] = (0.7, 0.2, 0.1),
                 seed: int = 0) -> tuple[Corpus, ...]:
    """Shuffle conversations with ``seed`` and cut them into len(ratios) parts."""
    sizes = split_sizes(len(corpus), ratios)
    perm = np.random.default_rng(seed).permutation(len(corpus))
    parts, start = [], 0
    for size in sizes:
        idx = perm[start:start + size]
        parts.append(Corpus(tuple(corpus.conversations[i] for i in idx), corpus.label_schema_version))
        start += size
    return tuple(parts)
