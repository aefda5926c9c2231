import json

import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_conv, make_corpus
from dispute_tactics import corpus as cp
from dispute_tactics.synthetic import keyed_corpus


def _write(tmp_path, records, name="c.jsonl"):
    path = tmp_path / name
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def _record(conv_id="a", tactics=(("Counterargument",),), escalated=True):
    return {"conv_id": conv_id, "title": "T", "escalated": escalated,
            "utterances": [{"speaker": f"s{i}", "text": "hi", "tactics": list(t)} for i, t in enumerate(tactics)]}


def test_parse_with_aliases(tmp_path):
    path = _write(tmp_path, [_record(tactics=(("RH5: Counterargument",), ("counterargument", "other")))])
    corpus = cp.parse_corpus(path)
    assert len(corpus) == 1
    assert [lab.name for lab in corpus.conversations[0].utterances[0].labels] == ["counterargument"]


def test_unknown_label_policies(tmp_path):
    path = _write(tmp_path, [_record(tactics=(("Shouting",),))])
    with pytest.raises(cp.UnknownLabelError):
        cp.parse_corpus(path)
    corpus = cp.parse_corpus(path, unknown="other")
    assert [lab.name for lab in corpus.conversations[0].utterances[0].labels] == ["other"]


def test_flat_schema(tmp_path):
    schema = tmp_path / "s.json"
    schema.write_text(json.dumps({"Shouting": "name-calling"}))
    path = _write(tmp_path, [_record(tactics=(("Shouting",),))])
    corpus = cp.parse_corpus(path, cp.load_schema(schema))
    assert corpus.conversations[0].utterances[0].labels == frozenset([cp.LABEL_BY_NAME["name-calling"]])
    schema.write_text(json.dumps({"Shouting": "yelling"}))
    with pytest.raises(cp.CorpusError):
        cp.load_schema(schema)


def test_rebuttal_limit_violation(tmp_path):
    bad = _record(tactics=(("counterargument", "refutation", "policing", "derailing"),))
    path = _write(tmp_path, [bad])
    with pytest.raises(cp.CorpusValidationError):
        cp.parse_corpus(path)
    corpus = cp.parse_corpus(path, strict=False)
    vs = cp.validate_corpus(corpus)
    assert [v.rule for v in vs] == ["max 3 rebuttal labels"]


def test_coordination_limit_and_empty():
    conv = make_conv(("asking-questions", "other", "bailing-out"), ())
    rules = [v.rule for v in cp.validate_conversation(conv)]
    assert rules == ["max 2 coordination labels", "empty labelset"]
    assert cp.validate_conversation(conv, require_labels=False)[0].rule == "max 2 coordination labels"


def test_malformed_lines(tmp_path):
    path = tmp_path / "x.jsonl"
    path.write_text('{"conv_id": "a"\n')
    with pytest.raises(cp.CorpusError) as exc:
        cp.parse_corpus(path)
    assert exc.value.line == 1
    path = _write(tmp_path, [_record("a"), _record("a")])
    with pytest.raises(cp.CorpusError, match="duplicate"):
        cp.parse_corpus(path)
    rec = _record()
    rec["escalated"] = "yes"
    with pytest.raises(cp.CorpusError, match="escalated"):
        cp.parse_corpus(_write(tmp_path, [rec]))


def test_write_parse_round_trip(tmp_path):
    corpus = keyed_corpus(8, seed=2)
    path = tmp_path / "r.jsonl"
    cp.write_corpus(corpus, path)
    again = cp.parse_corpus(path)
    assert again == corpus
    assert cp.dumps_corpus(again) == path.read_text(encoding="utf-8")


def test_stats():
    corpus = make_corpus(make_conv(("refutation",), ("refutation", "other")),
                         make_conv(("policing",), ("other",), ("other",), conv_id="c1", escalated=True))
    s = cp.corpus_stats(corpus)
    assert (s.n_conversations, s.n_utterances, s.length_min, s.length_max) == (2, 5, 2, 3)
    assert s.length_median == 2.5
    assert s.label_counts["other"] == 3 and s.label_counts["refutation"] == 2
    assert s.multilabel_fraction == pytest.approx(0.2)
    assert s.n_escalated == 1
    with pytest.raises(ValueError):
        cp.corpus_stats(make_corpus())


def test_split_sizes_example():
    assert cp.split_sizes(10, (0.7, 0.2, 0.1)) == [7, 2, 1]
    assert cp.split_sizes(3, (0.7, 0.2, 0.1)) == [1, 1, 1]
    with pytest.raises(ValueError):
        cp.split_sizes(2, (0.7, 0.2, 0.1))
    with pytest.raises(ValueError):
        cp.split_sizes(10, (0.5, 0.2))


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 500), st.lists(st.integers(1, 20), min_size=2, max_size=4))
def test_split_sizes_properties(n, weights):
    ratios = [w / sum(weights) for w in weights]
    if abs(sum(ratios) - 1) > 1e-9 or n < len(ratios):
        return
    sizes = cp.split_sizes(n, ratios)
    assert sum(sizes) == n and min(sizes) >= 1
    if all(n * r >= 1 for r in ratios):
        # largest remainder: no part strays a whole item from its quota
        assert all(abs(s - n * r) < 1 for s, r in zip(sizes, ratios))


def test_split_is_a_seeded_partition():
    corpus = keyed_corpus(20, seed=0)
    a = cp.split_corpus(corpus, seed=4)
    b = cp.split_corpus(corpus, seed=4)
    assert a == b
    ids = [c.conv_id for part in a for c in part]
    assert sorted(ids) == sorted(c.conv_id for c in corpus)
    assert [len(p) for p in a] == [14, 4, 2]
    assert cp.split_corpus(corpus, seed=5) != a


def test_checksum(tmp_path):
    p = tmp_path / "f"
    p.write_bytes(b"abc")
    assert cp.corpus_checksum(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
