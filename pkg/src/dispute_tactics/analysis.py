"""Corpus-level analyses of rebuttal levels, personal attacks and users."""
from __future__ import annotations

import statistics
from collections import defaultdict
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from . import stats
from .corpus import Conversation, Corpus, Utterance
from .taxonomy import (
    LABELS,
    has_attack,
    is_personal_attack,
    rebuttal_levels,
    reference_level,
)

MIRROR_TOL = 1e-9
RECOVERY_LEVEL = 5


@dataclass(frozen=True)
class ConversationScore:
    conv_id: str
    micro_mean: Optional[float]
    macro_mean: Optional[float]
    escalated: Optional[bool]


@dataclass
class AttackReport:
    n_attacks: int
    n_conversations_with_attack: int
    share_in_escalated: float
    recovery_rate_overall: float
    recovery_rate_escalated: float
    recovery_rate_resolved: float
    immediate_retaliation_rate: float
    reoffend_prob: float
    other_user_attack_prob: float
    anchor: str = "last"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MirrorScore:
    user_id: str
    conv_id: str
    m: float
    defined: bool


@dataclass
class MirrorResult:
    scores: list[MirrorScore]
    positive_fraction: float
    n_users: int

    @property
    def n_defined(self) -> int:
        return sum(1 for s in self.scores if s.defined)


# -- rebuttal means ---------------------------------------------------------

def _micro(utts) -> Optional[float]:
    levels = [lvl for u in utts for lvl in rebuttal_levels(u.labels)]
    return sum(levels) / len(levels) if levels else None


def _macro(utts) -> Optional[float]:
    per_utt = [np.mean(lv) for lv in (rebuttal_levels(u.labels) for u in utts) if lv]
    return float(sum(per_utt) / len(per_utt)) if per_utt else None


def micro_mean_rebuttal(conv: Conversation) -> Optional[float]:
    """Mean level over every rebuttal label in the conversation."""
    return _micro(conv.utterances)


def macro_mean_rebuttal(conv: Conversation) -> Optional[float]:
    """Mean over rebuttal-bearing utterances of their per-utterance mean level."""
    return _macro(conv.utterances)


def conversation_scores(corpus: Corpus) -> list[ConversationScore]:
    return [ConversationScore(c.conv_id, micro_mean_rebuttal(c), macro_mean_rebuttal(c), c.escalated)
            for c in corpus]


def escalation_correlation(corpus: Corpus, mode: str = "micro",
                           n_resamples: int = stats.DEFAULT_RESAMPLES, seed: int = 0) -> stats.TestResult:
    if mode not in ("micro", "macro"):
        raise ValueError(f"mode must be 'micro' or 'macro', got {mode!r}")
    fn = micro_mean_rebuttal if mode == "micro" else macro_mean_rebuttal
    xs, ys = [], []
    for conv in corpus:
        s = fn(conv)
        if s is None or conv.escalated is None:
            continue
        xs.append(s)
        ys.append(1.0 if conv.escalated else 0.0)
    if len(xs) < 3:
        raise ValueError(f"need at least 3 conversations with defined means and outcomes, got {len(xs)}")
    return stats.spearman(xs, ys, n_resamples=n_resamples, seed=seed)


# -- personal attacks -------------------------------------------------------

def attack_pmi_table(corpus: Corpus) -> dict[str, Optional[float]]:
    """PMI of each non-attack label with 'utterance contains a personal attack'.

    Counts are per utterance. Labels never co-occurring with an attack (or
    never used) map to None.
    """
    utts = list(corpus.utterances())
    n = len(utts)
    attack = [has_attack(u.labels) for u in utts]
    n_attack = sum(attack)
    if n_attack == 0:
        raise ValueError("corpus contains no personal attacks")
    out: dict[str, Optional[float]] = {}
    for lab in LABELS:
        if is_personal_attack(lab):
            continue
        n_x = sum(1 for u in utts if lab in u.labels)
        n_xy = sum(1 for u, a in zip(utts, attack) if a and lab in u.labels)
        out[lab.name] = stats.pmi(n_xy, n_x, n_attack, n) if n_xy > 0 else None
    return out


def _attack_positions(conv: Conversation) -> list[int]:
    return [k for k, u in enumerate(conv.utterances) if has_attack(u.labels)]


def recovers(conv: Conversation, anchor: str = "last") -> Optional[bool]:
    """Whether a conversation with an attack reaches level >= 5 afterwards.

    ``last``: some utterance after the final attack has reference level >= 5.
    ``first``: after the first attack, level >= 5 is reached before any
    further attack. None when the conversation has no attack.
    """
    pos = _attack_positions(conv)
    if not pos:
        return None
    if anchor == "last":
        start, stop = pos[-1] + 1, len(conv)
    elif anchor == "first":
        start = pos[0] + 1
        stop = pos[1] if len(pos) > 1 else len(conv)
    else:
        raise ValueError(f"anchor must be 'first' or 'last', got {anchor!r}")
    for u in conv.utterances[start:stop]:
        ref = reference_level(u.labels)
        if ref is not None and ref >= RECOVERY_LEVEL:
            return True
    return False


def _frac(num: int, den: int) -> float:
    return num / den if den else 0.0


def attack_report(corpus: Corpus, anchor: str = "last") -> AttackReport:
    n_attacks = n_attacks_esc = 0
    n_followed = n_retaliated = 0
    attacked = rec_all = 0
    esc_attacked = esc_rec = res_attacked = res_rec = 0
    reoffend = other_user = 0
    for conv in corpus:
        pos = _attack_positions(conv)
        if not pos:
            continue
        n_attacks += len(pos)
        if conv.escalated:
            n_attacks_esc += len(pos)
        for k in pos:
            if k + 1 < len(conv):
                n_followed += 1
                n_retaliated += has_attack(conv.utterances[k + 1].labels)
        attacked += 1
        rec = recovers(conv, anchor)
        rec_all += rec
        if conv.escalated is True:
            esc_attacked += 1
            esc_rec += rec
        elif conv.escalated is False:
            res_attacked += 1
            res_rec += rec
        first_speaker = conv.utterances[pos[0]].speaker
        later = [conv.utterances[k].speaker for k in pos[1:]]
        reoffend += first_speaker in later
        other_user += any(s != first_speaker for s in later)
    return AttackReport(
        n_attacks=n_attacks,
        n_conversations_with_attack=attacked,
        share_in_escalated=_frac(n_attacks_esc, n_attacks),
        recovery_rate_overall=_frac(rec_all, attacked),
        recovery_rate_escalated=_frac(esc_rec, esc_attacked),
        recovery_rate_resolved=_frac(res_rec, res_attacked),
        immediate_retaliation_rate=_frac(n_retaliated, n_followed),
        reoffend_prob=_frac(reoffend, attacked),
        other_user_attack_prob=_frac(other_user, attacked),
        anchor=anchor,
    )


# -- users ------------------------------------------------------------------

def user_profiles(corpus: Corpus) -> dict[str, dict]:
    """Per-user level statistics over rebuttal-bearing utterances.

    Level fields are None for users who never used a rebuttal tactic.
    """
    levels: dict[str, list[float]] = defaultdict(list)
    n_utts: dict[str, int] = defaultdict(int)
    for u in corpus.utterances():
        n_utts[u.speaker] += 1
        ref = reference_level(u.labels)
        if ref is not None:
            levels[u.speaker].append(ref)
    out = {}
    for user in sorted(n_utts):
        lv = levels.get(user)
        if lv:
            out[user] = {"mean": float(np.mean(lv)), "min": min(lv), "max": max(lv),
                         "range": max(lv) - min(lv), "n_utterances": n_utts[user]}
        else:
            out[user] = {"mean": None, "min": None, "max": None, "range": None,
                         "n_utterances": n_utts[user]}
    return out


def profile_summary(profiles: dict[str, dict]) -> dict:
    multi = {u: p for u, p in profiles.items() if p["n_utterances"] > 1}
    ranges = [p["range"] for p in multi.values() if p["range"] is not None]
    with_levels = [p for p in profiles.values() if p["min"] is not None]
    return {
        "n_users": len(profiles),
        "n_users_multi": len(multi),
        "median_range_multi": float(statistics.median(ranges)) if ranges else None,
        "n_high_only": sum(1 for p in with_levels if p["min"] >= 4),
        "n_low_only": sum(1 for p in with_levels if p["max"] <= 3),
    }


def mirror_score(r_u: float, r_uc: float, r_c: float) -> Optional[float]:
    """None when the user's overall mean and the others' mean coincide."""
    if abs(r_u - r_c) < MIRROR_TOL:
        return None
    return (r_u - r_uc) / (r_u - r_c)


def mirroring(corpus: Corpus, mean: str = "micro") -> MirrorResult:
    """Mirroring scores m = (user mean - user mean in c) / (user mean - others' mean in c)."""
    if mean not in ("micro", "macro"):
        raise ValueError(f"mean must be 'micro' or 'macro', got {mean!r}")
    avg = _micro if mean == "micro" else _macro
    by_user: dict[str, list[Utterance]] = defaultdict(list)
    convs_of: dict[str, list[Conversation]] = defaultdict(list)
    for conv in corpus:
        for u in conv.utterances:
            by_user[u.speaker].append(u)
        for s in conv.speakers:
            convs_of[s].append(conv)
    scores = []
    users = [u for u in sorted(convs_of) if len(convs_of[u]) >= 2]
    for user in users:
        r_u = avg(by_user[user])
        for conv in convs_of[user]:
            r_uc = avg([u for u in conv.utterances if u.speaker == user])
            r_c = avg([u for u in conv.utterances if u.speaker != user])
            m = None
            if r_u is not None and r_uc is not None and r_c is not None:
                m = mirror_score(r_u, r_uc, r_c)
            if m is None:
                scores.append(MirrorScore(user, conv.conv_id, float("nan"), False))
            else:
                scores.append(MirrorScore(user, conv.conv_id, m, True))
    defined = [s for s in scores if s.defined]
    pos = _frac(sum(1 for s in defined if s.m > 0), len(defined))
    return MirrorResult(scores, pos, len(users))
