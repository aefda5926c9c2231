"""Conversation-level escalation prediction with an auxiliary tactic task.

Each utterance is encoded by the shared BoW MLP, the utterance embeddings
are attention-pooled into a conversation embedding, and two fully
connected layers produce the escalation logit. The auxiliary loss is a
per-utterance binary-relevance tactic loss on the same embeddings.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse

from .. import neural
from ..corpus import Conversation, Corpus
from ..features import FeatureConfig, Vocab, build_vocab, encode_conversation
from ..neural import AttentionParams, MlpParams, Params, TrainConfig
from ..taxonomy import N_LABELS, to_vector
from .metrics import pr_auc


@dataclass
class ConvItem:
    X: sparse.csr_matrix
    gold: np.ndarray
    escalated: float
    conv_id: str


@dataclass
class ConvBatch:
    xs: list[np.ndarray]
    golds: list[np.ndarray]
    y: np.ndarray


@dataclass
class EscalationData:
    items: list[ConvItem]

    def __len__(self) -> int:
        return len(self.items)

    def take(self, idx) -> ConvBatch:
        chosen = [self.items[i] for i in np.asarray(idx)]
        return ConvBatch([c.X.toarray() for c in chosen], [c.gold for c in chosen],
                         np.array([c.escalated for c in chosen], dtype=float))


def make_escalation_data(corpus: Corpus, vocab: Vocab, features: Optional[FeatureConfig] = None) -> EscalationData:
    feats = features or FeatureConfig()
    items = []
    for conv in corpus:
        if conv.escalated is None:
            raise ValueError(f"conversation {conv.conv_id!r} has no escalation flag")
        gold = np.array([to_vector(u.labels) for u in conv.utterances], dtype=float)
        items.append(ConvItem(encode_conversation(conv, vocab, feats), gold, float(conv.escalated), conv.conv_id))
    return EscalationData(items)


@dataclass
class EscalationNet:
    input_dim: int
    hidden: tuple[int, ...] = (256, 128)
    classifier_hidden: int = 64
    aux_weight: float = 1.0
    dropout_p: float = 0.5

    def __post_init__(self):
        if self.aux_weight < 0:
            raise ValueError("aux_weight must be >= 0")

    def init_params(self, seed: int) -> Params:
        emb = self.hidden[-1]
        params = neural.init_params([self.input_dim, *self.hidden], seed).named("enc")
        params.update(neural.init_attention(emb, emb, seed + 1).named("attn"))
        params.update(neural.init_params([emb, self.classifier_hidden, 1], seed + 2).named("cls"))
        params.update(neural.init_params([emb, N_LABELS], seed + 3).named("aux"))
        return params

    def _run(self, params: Params, batch: ConvBatch, rng):
        train_mode = rng is not None
        enc = MlpParams.view(params, "enc", self.dropout_p)
        attn = AttentionParams.view(params, "attn")
        cls = MlpParams.view(params, "cls", self.dropout_p)
        sizes = [len(x) for x in batch.xs]
        bounds = np.cumsum([0] + sizes)
        enc_acts = neural.forward(enc, np.vstack(batch.xs), train_mode, rng, activate_last=True)
        E = enc_acts.out
        pooled, caches = [], []
        for a, b in zip(bounds[:-1], bounds[1:]):
            v, cache = neural.attention_forward(E[a:b], attn)
            pooled.append(v)
            caches.append(cache)
        cls_acts = neural.forward(cls, np.vstack(pooled), train_mode, rng)
        main, d_logit = neural.bce_with_grad(cls_acts.out, batch.y[:, None])
        state = {"enc": (enc, enc_acts), "attn": (attn, caches, bounds), "cls": (cls, cls_acts, d_logit),
                 "main": main}
        loss = main
        if self.aux_weight > 0:
            aux_p = MlpParams.view(params, "aux")
            aux_acts = neural.forward(aux_p, E)
            aux, d_aux = neural.bce_with_grad(aux_acts.out, np.vstack(batch.golds))
            loss = main + self.aux_weight * aux
            state["aux"] = (aux_p, aux_acts, d_aux * self.aux_weight)
        return loss, state

    def loss(self, params: Params, batch: ConvBatch) -> float:
        return self._run(params, batch, None)[0]

    def monitor_loss(self, params: Params, batch: ConvBatch) -> float:
        return self._run(params, batch, None)[1]["main"]

    def loss_and_grads(self, params: Params, batch: ConvBatch, rng) -> tuple[float, Params]:
        loss, st = self._run(params, batch, rng)
        grads: Params = {}
        cls, cls_acts, d_logit = st["cls"]
        g = neural.backward(cls, cls_acts, d_logit, need_dx=True)
        grads.update(g.named("cls"))
        attn, caches, bounds = st["attn"]
        enc, enc_acts = st["enc"]
        dE = np.zeros_like(enc_acts.out)
        g_attn = {"W": np.zeros_like(attn.W), "b": np.zeros_like(attn.b), "q": np.zeros_like(attn.q)}
        for i, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
            dEi, gi = neural.attention_backward(g.dx[i], attn, caches[i])
            dE[a:b] += dEi
            for k in g_attn:
                g_attn[k] += gi[k]
        grads.update({f"attn.{k}": v for k, v in g_attn.items()})
        if "aux" in st:
            aux_p, aux_acts, d_aux = st["aux"]
            ga = neural.backward(aux_p, aux_acts, d_aux, need_dx=True)
            grads.update(ga.named("aux"))
            dE += ga.dx
        else:
            grads.update({k: np.zeros_like(v) for k, v in params.items() if k.startswith("aux.")})
        grads.update(neural.backward(enc, enc_acts, dE).named("enc"))
        return loss, grads

    def probabilities(self, params: Params, xs: list[np.ndarray]) -> np.ndarray:
        enc = MlpParams.view(params, "enc")
        attn = AttentionParams.view(params, "attn")
        cls = MlpParams.view(params, "cls")
        pooled = [neural.attention_pool(neural.forward(enc, x, activate_last=True).out, attn) for x in xs]
        return neural.sigmoid(neural.forward(cls, np.vstack(pooled)).out[:, 0])


@dataclass
class EscalationModel:
    net: EscalationNet
    params: Params
    vocab: Vocab
    config: TrainConfig
    features: FeatureConfig = field(default_factory=FeatureConfig)
    history: list = field(default_factory=list)

    @property
    def aux_weight(self) -> float:
        return self.net.aux_weight


def train_escalation(train: Corpus, dev: Corpus, config: Optional[TrainConfig] = None,
                     aux_weight: float = 1.0, min_freq: int = 2, max_size: int = 10_000,
                     classifier_hidden: int = 64, binary: bool = False) -> EscalationModel:
    config = config or TrainConfig()
    vocab = build_vocab(train, min_freq, max_size)
    feats = FeatureConfig(False, binary)
    tr = make_escalation_data(train, vocab, feats)
    dv = make_escalation_data(dev, vocab, feats)
    net = EscalationNet(feats.dim(vocab), config.hidden, classifier_hidden, aux_weight, config.dropout_p)
    params, history = neural.train(net, tr, dv, config)
    return EscalationModel(net, params, vocab, config, feats, history)


def predict_escalation(model: EscalationModel, conv: Conversation) -> float:
    X = encode_conversation(conv, model.vocab, model.features).toarray()
    return float(model.net.probabilities(model.params, [X])[0])


def evaluate_escalation(model: EscalationModel, corpus: Corpus) -> dict:
    scores = [predict_escalation(model, c) for c in corpus]
    labels = [int(bool(c.escalated)) for c in corpus]
    return {
        "pr_auc": pr_auc(scores, labels),
        "n": len(labels),
        "positive_rate": float(np.mean(labels)),
        "per_sample": [{"conv_id": c.conv_id, "score": s, "escalated": bool(c.escalated)}
                       for c, s in zip(corpus, scores)],
    }
