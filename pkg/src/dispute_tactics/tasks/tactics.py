"""Utterance-level tactic classifiers: binary relevance and truncated label powerset.

Both share a two-layer ReLU MLP encoder over bag-of-words features
(optionally concatenated with a BoW of the preceding context). BR puts 18
sigmoid outputs on top, LP a softmax over catalog labelsets. With
``multitask`` a 4-way ordinality head is trained alongside.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse

from .. import neural
from ..corpus import Conversation, Corpus
from ..features import FeatureConfig, Vocab, build_vocab, encode_conversation, encode_corpus
from ..neural import MlpParams, Params, TrainConfig
from ..taxonomy import N_LABELS, Ordinality, ordinality_sequence, to_vector
from .catalog import LabelsetCatalog, build_catalog, map_to_catalog
from .metrics import multilabel_report, multitask_loss, per_sample_jaccard

log = logging.getLogger(__name__)

THRESHOLD_GRID = np.round(np.arange(1, 20) * 0.05, 2)
N_ORDINALITY = len(Ordinality)


@dataclass
class Batch:
    x: np.ndarray
    target: np.ndarray          # (B, 18) for BR, (B,) class ids for LP
    ordinality: np.ndarray      # (B,)


@dataclass
class TacticExamples:
    """Encoded utterances; implements the ``neural.Dataset`` protocol."""

    X: sparse.csr_matrix
    gold: np.ndarray            # (n, 18) gold label vectors
    classes: np.ndarray         # (n,) catalog class, -1 when unmapped or BR
    ordinality: np.ndarray      # (n,)
    keys: list[tuple[str, int]]
    mode: str

    def __len__(self) -> int:
        return self.X.shape[0]

    def take(self, idx) -> Batch:
        idx = np.asarray(idx)
        target = self.gold[idx].astype(float) if self.mode == "br" else self.classes[idx]
        return Batch(self.X[idx].toarray(), target, self.ordinality[idx])


def make_training_set(corpus: Corpus, mode: str, context: bool, multitask: bool, vocab: Vocab,
                      catalog: Optional[LabelsetCatalog] = None, split: str = "train",
                      features: Optional[FeatureConfig] = None, reference: str = "max") -> TacticExamples:
    """One example per utterance.

    In LP mode utterances without a catalog class are dropped from the
    ``train`` split only; evaluation splits keep them with their gold vector.
    """
    if mode not in ("br", "lp"):
        raise ValueError(f"mode must be 'br' or 'lp', got {mode!r}")
    if mode == "lp" and catalog is None:
        raise ValueError("LP mode needs a labelset catalog")
    if split not in ("train", "eval"):
        raise ValueError(f"split must be 'train' or 'eval', got {split!r}")
    cfg = features or FeatureConfig(context=context)
    if cfg.context != context:
        cfg = FeatureConfig(context, cfg.binary, cfg.context_max_tokens)
    X = encode_corpus(corpus, vocab, cfg)
    gold, classes, ords, keys = [], [], [], []
    for conv in corpus:
        seq = ordinality_sequence(conv, reference) if multitask else [Ordinality.COORDINATION] * len(conv)
        for utt, o in zip(conv.utterances, seq):
            gold.append(to_vector(utt.labels))
            c = map_to_catalog(utt.labels, catalog) if mode == "lp" else None
            classes.append(-1 if c is None else c)
            ords.append(int(o))
            keys.append((conv.conv_id, utt.index))
    gold_arr = np.array(gold, dtype=np.int8).reshape(-1, N_LABELS)
    classes_arr = np.array(classes, dtype=int)
    ords_arr = np.array(ords, dtype=int)
    if mode == "lp" and split == "train":
        keep = np.flatnonzero(classes_arr >= 0)
        X, gold_arr, classes_arr, ords_arr = X[keep], gold_arr[keep], classes_arr[keep], ords_arr[keep]
        keys = [keys[i] for i in keep]
    return TacticExamples(X.tocsr(), gold_arr, classes_arr, ords_arr, keys, mode)


@dataclass
class TacticNet:
    input_dim: int
    n_out: int
    mode: str
    multitask: bool = False
    aux_weight: float = 1.0
    hidden: tuple[int, ...] = (256, 128)
    dropout_p: float = 0.5

    def init_params(self, seed: int) -> Params:
        params = neural.init_params([self.input_dim, *self.hidden], seed).named("enc")
        params.update(neural.init_params([self.hidden[-1], self.n_out], seed + 1).named("head"))
        if self.multitask:
            params.update(neural.init_params([self.hidden[-1], N_ORDINALITY], seed + 2).named("ord"))
        return params

    def _parts(self, params):
        enc = MlpParams.view(params, "enc", self.dropout_p)
        head = MlpParams.view(params, "head")
        ord_ = MlpParams.view(params, "ord") if self.multitask else None
        return enc, head, ord_

    def logits(self, params: Params, x: np.ndarray) -> np.ndarray:
        enc, head, _ = self._parts(params)
        h = neural.forward(enc, x, activate_last=True).out
        return neural.forward(head, h).out

    def _run(self, params, batch: Batch, rng):
        enc, head, ord_ = self._parts(params)
        enc_acts = neural.forward(enc, batch.x, train_mode=rng is not None, seed=rng, activate_last=True)
        h = enc_acts.out
        head_acts = neural.forward(head, h)
        if self.mode == "br":
            main, d_main = neural.bce_with_grad(head_acts.out, batch.target)
        else:
            main, d_main = neural.ce_with_grad(head_acts.out, batch.target)
        result = {"enc": (enc, enc_acts), "head": (head, head_acts, d_main), "main": main}
        loss = main
        if self.multitask:
            ord_acts = neural.forward(ord_, h)
            aux, d_aux = neural.ce_with_grad(ord_acts.out, batch.ordinality)
            loss = multitask_loss(main, aux, self.aux_weight)
            result["ord"] = (ord_, ord_acts, d_aux * self.aux_weight)
        return loss, result

    def loss(self, params: Params, batch: Batch) -> float:
        return self._run(params, batch, None)[0]

    def monitor_loss(self, params: Params, batch: Batch) -> float:
        return self._run(params, batch, None)[1]["main"]

    def loss_and_grads(self, params: Params, batch: Batch, rng) -> tuple[float, Params]:
        loss, r = self._run(params, batch, rng)
        grads: Params = {}
        head, head_acts, d_main = r["head"]
        g = neural.backward(head, head_acts, d_main, need_dx=True)
        grads.update(g.named("head"))
        dh = g.dx
        if "ord" in r:
            ord_, ord_acts, d_aux = r["ord"]
            g = neural.backward(ord_, ord_acts, d_aux, need_dx=True)
            grads.update(g.named("ord"))
            dh = dh + g.dx
        enc, enc_acts = r["enc"]
        grads.update(neural.backward(enc, enc_acts, dh).named("enc"))
        return loss, grads


@dataclass
class TacticModel:
    mode: str
    context: bool
    multitask: bool
    net: TacticNet
    params: Params
    vocab: Vocab
    features: FeatureConfig
    config: TrainConfig
    catalog: Optional[LabelsetCatalog] = None
    thresholds: Optional[np.ndarray] = None
    reference: str = "max"
    history: list = field(default_factory=list)

    def __post_init__(self):
        if (self.mode == "lp") != (self.catalog is not None):
            raise ValueError("a catalog is required for LP models and only for them")
        if self.mode == "br" and self.thresholds is None:
            self.thresholds = np.full(N_LABELS, 0.5)

    def encode(self, corpus: Corpus) -> sparse.csr_matrix:
        return encode_corpus(corpus, self.vocab, self.features)

    def probabilities(self, X) -> np.ndarray:
        """Sigmoid scores (BR) or softmax class distribution (LP)."""
        if X.shape[1] != self.net.input_dim:
            raise ValueError(f"feature dim {X.shape[1]} does not match model input {self.net.input_dim}")
        out = []
        for start in range(0, X.shape[0], 512):
            chunk = X[start:start + 512]
            chunk = chunk.toarray() if sparse.issparse(chunk) else np.asarray(chunk, dtype=float)
            z = self.net.logits(self.params, chunk)
            out.append(neural.sigmoid(z) if self.mode == "br" else neural.softmax(z, axis=1))
        if not out:
            return np.zeros((0, self.net.n_out))
        return np.vstack(out)

    def vectors_from_probabilities(self, probs: np.ndarray, thresholds=None) -> np.ndarray:
        if self.mode == "br":
            th = self.thresholds if thresholds is None else thresholds
            return (probs >= th).astype(np.int8)
        cls = np.argmax(probs, axis=1)
        return self.catalog.vectors()[cls].astype(np.int8)

    def predict_matrix(self, X) -> np.ndarray:
        return self.vectors_from_probabilities(self.probabilities(X))


def predict_tactics(model: TacticModel, conv: Conversation) -> list[np.ndarray]:
    X = encode_conversation(conv, model.vocab, model.features)
    return list(model.predict_matrix(X))


def calibrate_on_scores(probs: np.ndarray, gold: np.ndarray, grid=THRESHOLD_GRID) -> np.ndarray:
    """Coordinate-wise threshold search maximising mean Jaccard.

    Starts from 0.5 everywhere and makes one pass in canonical label order;
    ties go to the lower threshold.
    """
    if len(probs) == 0:
        raise ValueError("cannot calibrate thresholds on an empty dev set")
    gold = np.asarray(gold).astype(bool)
    th = np.full(probs.shape[1], 0.5)
    pred = probs >= th
    for j in range(probs.shape[1]):
        best_t, best_score = None, -1.0
        for t in grid:
            pred[:, j] = probs[:, j] >= t
            score = float(np.mean(per_sample_jaccard(pred, gold)))
            if score > best_score:
                best_t, best_score = t, score
        th[j] = best_t
        pred[:, j] = probs[:, j] >= best_t
    return th


def calibrate_thresholds(model: TacticModel, dev: Corpus) -> np.ndarray:
    if model.mode != "br":
        raise ValueError("threshold calibration applies to BR models only")
    if len(dev) == 0:
        raise ValueError("cannot calibrate thresholds on an empty dev set")
    probs = model.probabilities(model.encode(dev))
    gold = np.array([to_vector(u.labels) for u in dev.utterances()])
    return calibrate_on_scores(probs, gold)


def train_tactic_model(train: Corpus, dev: Corpus, mode: str = "lp", context: bool = False,
                       multitask: bool = False, config: Optional[TrainConfig] = None, k: int = 20,
                       aux_weight: float = 1.0, min_freq: int = 2, max_size: int = 10_000,
                       binary: bool = False, context_max_tokens: Optional[int] = None,
                       reference: str = "max", calibrate: bool = True) -> TacticModel:
    """Build vocab (and catalog) on ``train``, fit with early stopping on ``dev``."""
    config = config or TrainConfig()
    if aux_weight < 0:
        raise ValueError("aux_weight must be >= 0")
    vocab = build_vocab(train, min_freq, max_size)
    feats = FeatureConfig(context, binary, context_max_tokens)
    catalog = build_catalog(train, k) if mode == "lp" else None
    tr = make_training_set(train, mode, context, multitask, vocab, catalog, "train", feats, reference)
    dv = make_training_set(dev, mode, context, multitask, vocab, catalog, "train", feats, reference)
    if len(tr) == 0 or len(dv) == 0:
        raise ValueError("no usable training or dev examples")
    n_out = N_LABELS if mode == "br" else len(catalog)
    net = TacticNet(feats.dim(vocab), n_out, mode, multitask, aux_weight, config.hidden, config.dropout_p)
    params, history = neural.train(net, tr, dv, config)
    model = TacticModel(mode, context, multitask, net, params, vocab, feats, config, catalog,
                        reference=reference, history=history)
    if mode == "br" and calibrate:
        model.thresholds = calibrate_thresholds(model, dev)
    return model


def evaluate_tactics(model: TacticModel, corpus: Corpus) -> dict:
    ex = make_training_set(corpus, model.mode, model.context, False, model.vocab, model.catalog,
                           "eval", model.features)
    preds = model.predict_matrix(ex.X)
    report = multilabel_report(preds, ex.gold)
    report["per_sample"] = [
        {"conv_id": cid, "index": idx, "jaccard": float(j)}
        for (cid, idx), j in zip(ex.keys, per_sample_jaccard(preds, ex.gold))
    ]
    return report
