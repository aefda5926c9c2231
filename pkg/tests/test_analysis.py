import math

import pytest

from conftest import make_conv, make_corpus
from dispute_tactics import analysis as an
from dispute_tactics.synthetic import random_corpus


def test_micro_macro_example():
    conv = make_conv(("counterargument",), ("credibility-attack", "counterargument"), ("other",))
    assert an.micro_mean_rebuttal(conv) == pytest.approx(11 / 3)
    assert an.macro_mean_rebuttal(conv) == pytest.approx(4.0)
    assert an.micro_mean_rebuttal(make_conv(("other",))) is None


def test_escalation_correlation_direction():
    convs = [make_conv(("refutation",), conv_id=f"r{i}", escalated=False) for i in range(4)]
    convs += [make_conv(("name-calling",), conv_id=f"e{i}", escalated=True) for i in range(4)]
    res = an.escalation_correlation(make_corpus(*convs), n_resamples=2000)
    assert res.statistic == pytest.approx(-1.0)
    assert res.p_value < 0.05
    with pytest.raises(ValueError):
        an.escalation_correlation(make_corpus(*convs), mode="mean")


def test_pmi_table():
    corpus = make_corpus(make_conv(("credibility-attack", "refutation"), ("refutation",), ("other",), ("other",)))
    t = an.attack_pmi_table(corpus)
    assert "credibility-attack" not in t and "name-calling" not in t
    assert t["refutation"] == pytest.approx(1.0)
    assert t["other"] is None
    with pytest.raises(ValueError):
        an.attack_pmi_table(make_corpus(make_conv(("other",))))


def test_recovery_anchors():
    conv = make_conv(("name-calling",), ("refutation",), ("name-calling",), ("other",))
    assert an.recovers(conv, "first") is True
    assert an.recovers(conv, "last") is False
    assert an.recovers(make_conv(("other",))) is None


def test_attack_report_counts():
    c1 = make_conv(("name-calling",), ("credibility-attack",), ("policing",), ("name-calling",),
                   speakers=["a", "b", "a", "a"], escalated=True)
    c2 = make_conv(("credibility-attack",), ("refutation",), conv_id="c2", speakers=["x", "y"])
    rep = an.attack_report(make_corpus(c1, c2))
    assert rep.n_attacks == 4
    assert rep.share_in_escalated == 0.75
    assert rep.immediate_retaliation_rate == pytest.approx(1 / 3)
    assert rep.reoffend_prob == 0.5
    assert rep.other_user_attack_prob == 0.5
    assert rep.recovery_rate_resolved == 1.0 and rep.recovery_rate_escalated == 0.0


def test_user_profiles():
    conv = make_conv(("refutation",), ("policing",), ("other",), ("counterargument",), speakers=["a", "a", "b", "c"])
    prof = an.user_profiles(make_corpus(conv))
    assert prof["a"] == {"mean": 4.5, "min": 3, "max": 6, "range": 3, "n_utterances": 2}
    assert prof["b"]["mean"] is None
    summ = an.profile_summary(prof)
    assert summ == {"n_users": 3, "n_users_multi": 1, "median_range_multi": 3.0,
                    "n_high_only": 1, "n_low_only": 0}


def test_mirror_score_example():
    assert an.mirror_score(5, 4, 3) == pytest.approx(0.5)
    assert an.mirror_score(4, 4, 4 + 1e-12) is None


def test_mirroring_undefined_and_positive():
    c1 = make_conv(("refutation",), ("name-calling",), speakers=["u", "v"])
    c2 = make_conv(("refutation",), ("refutation",), conv_id="c2", speakers=["u", "w"])
    res = an.mirroring(make_corpus(c1, c2))
    assert res.n_users == 1
    scores = {s.conv_id: s for s in res.scores}
    assert not scores["c2"].defined and math.isnan(scores["c2"].m)
    assert scores["c0"].defined
    assert res.positive_fraction == 0.0


def test_fractions_bounded_under_fuzzing():
    for seed in range(30):
        rep = an.attack_report(random_corpus(15, seed=seed))
        for k, v in rep.to_dict().items():
            if isinstance(v, float):
                assert 0.0 <= v <= 1.0, k
