import numpy as np
import pytest

from conftest import make_conv, make_corpus
from dispute_tactics.corpus import split_corpus
from dispute_tactics.features import build_vocab
from dispute_tactics.neural import TrainConfig
from dispute_tactics.synthetic import keyed_corpus
from dispute_tactics.tasks import tactics as tt
from dispute_tactics.tasks.catalog import build_catalog
from dispute_tactics.taxonomy import N_LABELS, Ordinality

FAST = TrainConfig(max_epochs=40, patience=40, hidden=(32, 16), dropout_p=0.1, learning_rate=0.01)


@pytest.fixture(scope="module")
def splits():
    return split_corpus(keyed_corpus(60, seed=0), seed=0)


def test_lp_training_set_drops_unmapped_only_for_train():
    corpus = make_corpus(make_conv(("refutation",), ("refutation",), ("derailing",), ("other",)))
    vocab = build_vocab(corpus, 1)
    cat = build_catalog(make_corpus(make_conv(("refutation",))))
    tr = tt.make_training_set(corpus, "lp", False, True, vocab, cat, "train")
    ev = tt.make_training_set(corpus, "lp", False, True, vocab, cat, "eval")
    assert len(tr) == 2 and len(ev) == 4
    assert ev.classes.tolist() == [0, 0, -1, -1]
    assert tr.ordinality.tolist() == [Ordinality.UP, Ordinality.SAME]
    with pytest.raises(ValueError):
        tt.make_training_set(corpus, "lp", False, False, vocab, None)


def test_calibration_prefers_lower_threshold_on_ties():
    probs = np.zeros((2, N_LABELS))
    probs[:, 0] = [0.9, 0.1]
    gold = np.zeros((2, N_LABELS), dtype=int)
    gold[0, 0] = 1
    th = tt.calibrate_on_scores(probs, gold)
    assert th[0] == pytest.approx(0.15)
    assert th[1] == pytest.approx(0.05)


@pytest.mark.parametrize("mode", ["br", "lp"])
def test_models_learn_keyed_corpus(splits, mode):
    train, dev, test = splits
    model = tt.train_tactic_model(train, dev, mode, config=FAST, min_freq=1)
    rep = tt.evaluate_tactics(model, test)
    assert rep["jaccard"] >= 0.9
    assert len(rep["per_sample"]) == rep["n"] == sum(len(c) for c in test)


def test_context_multitask_variant_runs(splits):
    train, dev, test = splits
    cfg = TrainConfig(max_epochs=3, patience=3, hidden=(16, 8))
    model = tt.train_tactic_model(train, dev, "br", context=True, multitask=True, config=cfg, min_freq=1)
    assert model.net.input_dim == 2 * len(model.vocab)
    preds = tt.predict_tactics(model, test.conversations[0])
    assert len(preds) == len(test.conversations[0]) and preds[0].shape == (N_LABELS,)


def test_probabilities_dimension_check(splits):
    train, dev, _ = splits
    model = tt.train_tactic_model(train, dev, "lp", config=TrainConfig(max_epochs=1, hidden=(8, 4)), min_freq=1)
    with pytest.raises(ValueError):
        model.probabilities(np.zeros((1, 3)))
    p = model.probabilities(model.encode(dev))
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
