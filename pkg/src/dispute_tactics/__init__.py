"""Dispute-tactic taxonomy, corpus tools, analyses and classifiers."""

__version__ = "0.1.0"

from .corpus import Conversation, Corpus, Utterance, parse_corpus, split_corpus, validate_corpus  # noqa: E402
from .taxonomy import LABELS, N_LABELS, Ordinality, label, labels, reference_level  # noqa: E402

__all__ = [
    "__version__", "Conversation", "Corpus", "Utterance", "parse_corpus", "split_corpus",
    "validate_corpus", "LABELS", "N_LABELS", "Ordinality", "label", "labels", "reference_level",
]
