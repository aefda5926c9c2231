import json

import numpy as np
import pytest

from dispute_tactics.checkpoint import CheckpointError, load_manifest, load_model, save_model
from dispute_tactics.corpus import split_corpus
from dispute_tactics.neural import TrainConfig
from dispute_tactics.synthetic import keyed_corpus
from dispute_tactics.tasks.escalation import predict_escalation, train_escalation
from dispute_tactics.tasks.tactics import train_tactic_model

CFG = TrainConfig(max_epochs=2, hidden=(8, 4))


@pytest.mark.parametrize("mode", ["br", "lp"])
def test_tactic_round_trip_bit_identical(tmp_path, mode):
    train, dev, test = split_corpus(keyed_corpus(20, seed=0), seed=0)
    model = train_tactic_model(train, dev, mode, context=True, multitask=True, config=CFG, min_freq=1)
    save_model(model, tmp_path / "m.ckpt", {"seed": 0})
    again = load_model(tmp_path / "m.ckpt")
    X = model.encode(test)
    np.testing.assert_array_equal(model.probabilities(X), again.probabilities(X))
    np.testing.assert_array_equal(model.predict_matrix(X), again.predict_matrix(X))
    assert load_manifest(tmp_path / "m.ckpt") == {"seed": 0}


def test_escalation_round_trip(tmp_path):
    train, dev, test = split_corpus(keyed_corpus(20, seed=0), seed=0)
    model = train_escalation(train, dev, CFG, min_freq=1)
    save_model(model, tmp_path / "e.ckpt")
    again = load_model(tmp_path / "e.ckpt")
    for conv in test:
        assert predict_escalation(model, conv) == predict_escalation(again, conv)


def test_bad_checkpoints(tmp_path):
    p = tmp_path / "x.ckpt"
    p.write_text("not json")
    with pytest.raises(CheckpointError):
        load_model(p)
    p.write_text(json.dumps({"format_version": 99}))
    with pytest.raises(CheckpointError, match="unsupported"):
        load_model(p)
    p.write_text(json.dumps({"format_version": 1}))
    with pytest.raises(CheckpointError):
        load_model(p)
