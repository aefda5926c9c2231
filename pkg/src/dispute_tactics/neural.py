"""A small numpy neural engine: MLPs, attention pooling, Adam and early stopping.

Parameters are kept in flat ``dict[str, np.ndarray]`` containers so that the
optimiser, checkpointing and gradient checking can treat every model the
same way. ``MlpParams`` and ``AttentionParams`` are views onto such a dict.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Protocol, Sequence

import numpy as np

log = logging.getLogger(__name__)

Params = dict[str, np.ndarray]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    dropout_p: float = 0.5
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 5
    seed: int = 0
    hidden: tuple[int, ...] = (256, 128)

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden sizes must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


# -- MLP --------------------------------------------------------------------

@dataclass
class MlpParams:
    """Weights are (out, in); hidden layers use ReLU, the last is linear
    unless the MLP is used as an encoder (``activate_last``)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout_p: float = 0.0

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def named(self, prefix: str) -> Params:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.W{i}"] = w
            out[f"{prefix}.b{i}"] = b
        return out

    @classmethod
    def view(cls, params: Params, prefix: str, dropout_p: float = 0.0) -> "MlpParams":
        n = 0
        while f"{prefix}.W{n}" in params:
            n += 1
        if n == 0:
            raise KeyError(f"no MLP parameters under prefix {prefix!r}")
        return cls([params[f"{prefix}.W{i}"] for i in range(n)],
                   [params[f"{prefix}.b{i}"] for i in range(n)], dropout_p)


def init_params(layer_dims: Sequence[int], seed: int, dropout_p: float = 0.0) -> MlpParams:
    """Gaussian weights with variance 1/fan_in, zero biases."""
    if len(layer_dims) < 2:
        raise ValueError("need at least input and output dimensions")
    if any(int(d) < 1 for d in layer_dims):
        raise ValueError(f"layer dimensions must be positive, got {list(layer_dims)}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) / math.sqrt(fan_in))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, dropout_p)


@dataclass
class Activations:
    x: np.ndarray
    pre: list[np.ndarray]
    post: list[np.ndarray]
    masks: list[Optional[np.ndarray]]
    activate_last: bool

    @property
    def out(self) -> np.ndarray:
        return self.post[-1]


def forward(params: MlpParams, x, train_mode: bool = False, seed=None,
            activate_last: bool = False) -> Activations:
    """Forward pass; ``seed`` may be an int or a numpy Generator.

    Hidden activations use inverted dropout in train mode, so evaluation
    needs no rescaling.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.weights[0].shape[1]:
        raise ValueError(f"input dim {x.shape[-1]} does not match layer input {params.weights[0].shape[1]}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    use_dropout = train_mode and params.dropout_p > 0
    keep = 1.0 - params.dropout_p
    pre, post, masks = [], [], []
    a = x
    n = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        pre.append(z)
        if i < n - 1 or activate_last:
            a = np.maximum(z, 0.0)
            if use_dropout:
                mask = (rng.random(a.shape) < keep) / keep
                a = a * mask
                masks.append(mask)
            else:
                masks.append(None)
        else:
            a = z
            masks.append(None)
        post.append(a)
    if not np.all(np.isfinite(a)):
        raise FloatingPointError("non-finite activations in forward pass")
    return Activations(x, pre, post, masks, activate_last)


@dataclass
class MlpGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dx: Optional[np.ndarray] = None

    def named(self, prefix: str) -> Params:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.W{i}"] = w
            out[f"{prefix}.b{i}"] = b
        return out


def backward(params: MlpParams, acts: Activations, d_out: np.ndarray, need_dx: bool = False) -> MlpGrads:
    """Gradients of a scalar loss given d loss / d output."""
    n = len(params.weights)
    if d_out.shape != acts.out.shape:
        raise ValueError(f"upstream gradient shape {d_out.shape} != output shape {acts.out.shape}")
    dws: list = [None] * n
    dbs: list = [None] * n
    da = d_out
    for i in range(n - 1, -1, -1):
        if i < n - 1 or acts.activate_last:
            if acts.masks[i] is not None:
                da = da * acts.masks[i]
            dz = da * (acts.pre[i] > 0)
        else:
            dz = da
        a_prev = acts.post[i - 1] if i > 0 else acts.x
        dws[i] = dz.T @ a_prev
        dbs[i] = dz.sum(axis=0)
        if i > 0 or need_dx:
            da = dz @ params.weights[i]
    return MlpGrads(dws, dbs, da if need_dx else None)


# -- losses -----------------------------------------------------------------

def _check_finite(logits):
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits")


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z, axis=-1):
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def bce_with_grad(logits, targets) -> tuple[float, np.ndarray]:
    """Mean logit-space binary cross-entropy over every entry, and its gradient."""
    z = np.asarray(logits, dtype=float)
    t = np.asarray(targets, dtype=float)
    if z.shape != t.shape:
        raise ValueError(f"logits {z.shape} and targets {t.shape} differ in shape")
    _check_finite(z)
    losses = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    return float(losses.mean()), (sigmoid(z) - t) / z.size


def ce_with_grad(logits, classes) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over rows, and its gradient."""
    z = np.atleast_2d(np.asarray(logits, dtype=float))
    c = np.atleast_1d(np.asarray(classes, dtype=int))
    if z.shape[0] != c.shape[0]:
        raise ValueError("logits and classes differ in batch size")
    if c.size and (c.min() < 0 or c.max() >= z.shape[1]):
        raise ValueError("class index out of range")
    _check_finite(z)
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    rows = np.arange(len(c))
    loss = float(np.mean(lse - z[rows, c]))
    grad = softmax(z, axis=1)
    grad[rows, c] -= 1.0
    return loss, grad / len(c)


def loss_bce(logits, targets) -> float:
    return bce_with_grad(logits, targets)[0]


def loss_ce(logits, classes) -> float:
    return ce_with_grad(logits, classes)[0]


# -- attention pooling ------------------------------------------------------

@dataclass
class AttentionParams:
    W: np.ndarray   # (attn_dim, emb_dim)
    b: np.ndarray   # (attn_dim,)
    q: np.ndarray   # (attn_dim,)

    def named(self, prefix: str) -> Params:
        return {f"{prefix}.W": self.W, f"{prefix}.b": self.b, f"{prefix}.q": self.q}

    @classmethod
    def view(cls, params: Params, prefix: str) -> "AttentionParams":
        return cls(params[f"{prefix}.W"], params[f"{prefix}.b"], params[f"{prefix}.q"])


def init_attention(emb_dim: int, attn_dim: int, seed: int) -> AttentionParams:
    rng = np.random.default_rng(seed)
    return AttentionParams(rng.standard_normal((attn_dim, emb_dim)) / math.sqrt(emb_dim),
                           np.zeros(attn_dim),
                           rng.standard_normal(attn_dim) / math.sqrt(attn_dim))


@dataclass
class AttentionCache:
    E: np.ndarray
    u: np.ndarray
    alpha: np.ndarray


def attention_forward(E: np.ndarray, p: AttentionParams) -> tuple[np.ndarray, AttentionCache]:
    E = np.atleast_2d(np.asarray(E, dtype=float))
    if E.shape[0] < 1:
        raise ValueError("attention pooling needs at least one row")
    if E.shape[1] != p.W.shape[1]:
        raise ValueError("embedding dim does not match attention projection")
    u = np.tanh(E @ p.W.T + p.b)
    alpha = softmax(u @ p.q)
    return alpha @ E, AttentionCache(E, u, alpha)


def attention_pool(utterance_embeddings, params: AttentionParams) -> np.ndarray:
    """Softmax(query . tanh(W e_i + b))-weighted sum of the rows."""
    return attention_forward(utterance_embeddings, params)[0]


def attention_backward(d_out: np.ndarray, p: AttentionParams, cache: AttentionCache):
    """Returns (dE, {"W","b","q"} grads)."""
    E, u, alpha = cache.E, cache.u, cache.alpha
    d_alpha = E @ d_out
    d_score = alpha * (d_alpha - alpha @ d_alpha)
    dq = u.T @ d_score
    d_pre = np.outer(d_score, p.q) * (1.0 - u * u)
    dW = d_pre.T @ E
    db = d_pre.sum(axis=0)
    dE = np.outer(alpha, d_out) + d_pre @ p.W
    return dE, {"W": dW, "b": db, "q": dq}


# -- optimiser --------------------------------------------------------------

@dataclass
class AdamState:
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)
    t: int = 0


def adam_step(params: Params, grads: Params, state: AdamState, config: TrainConfig) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update, applied in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name}")
    state.t += 1
    lr = config.learning_rate
    c1 = 1.0 - ADAM_BETA1 ** state.t
    c2 = 1.0 - ADAM_BETA2 ** state.t
    for name in sorted(grads):
        g = grads[name]
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return params, state


# -- training ---------------------------------------------------------------

class Dataset(Protocol):
    def __len__(self) -> int: ...
    def take(self, idx: np.ndarray): ...


class Model(Protocol):
    def init_params(self, seed: int) -> Params: ...

    def loss_and_grads(self, params: Params, batch, rng: Optional[np.random.Generator]) -> tuple[float, Params]:
        """Train-mode (dropout on) when ``rng`` is given, eval mode otherwise."""

    def loss(self, params: Params, batch) -> float:
        """Eval-mode value of the full training objective."""

    # Models may also define ``monitor_loss(params, batch)``; early stopping
    # then tracks it instead of ``loss`` (e.g. the main task of a multitask net).


def copy_params(params: Params) -> Params:
    return {k: v.copy() for k, v in params.items()}


def evaluate_loss(model: Model, params: Params, data: Dataset, batch_size: int = 256) -> float:
    fn = getattr(model, "monitor_loss", model.loss)
    n = len(data)
    total = 0.0
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(n, start + batch_size))
        total += fn(params, data.take(idx)) * len(idx)
    return total / n


def train(model: Model, train_data: Dataset, dev_data: Dataset, config: TrainConfig,
          params: Optional[Params] = None) -> tuple[Params, list[dict]]:
    """Mini-batch Adam with early stopping on dev loss (``monitor_loss`` if defined).

    Returns the parameters from the epoch with the lowest dev loss and the
    per-epoch history.
    """
    if len(train_data) == 0 or len(dev_data) == 0:
        raise ValueError("train and dev data must be non-empty")
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = model.init_params(config.seed)
    state = AdamState()
    best, best_loss, best_epoch, wait = copy_params(params), math.inf, 0, 0
    history = []
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_data))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = model.loss_and_grads(params, train_data.take(idx), rng)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite training loss at epoch {epoch}")
            adam_step(params, grads, state, config)
            total += loss * len(idx)
        train_loss = total / len(order)
        dev_loss = evaluate_loss(model, params, dev_data)
        if not math.isfinite(dev_loss):
            raise TrainingDiverged(f"non-finite dev loss at epoch {epoch}")
        history.append({"epoch": epoch, "train_loss": train_loss, "dev_loss": dev_loss})
        log.info("epoch %d train %.4f dev %.4f", epoch, train_loss, dev_loss)
        if dev_loss < best_loss:
            best, best_loss, best_epoch, wait = copy_params(params), dev_loss, epoch, 0
        else:
            wait += 1
            if wait >= config.patience:
                break
    for h in history:
        h["best"] = h["epoch"] == best_epoch
    return best, history


def grad_check(model: Model, params: Params, batch, eps: float = 1e-4,
               analytic: Optional[Params] = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs in eval mode (no dropout). ``analytic`` overrides the model's own
    gradients, which lets tests feed in deliberately corrupted ones.
    """
    if analytic is None:
        _, analytic = model.loss_and_grads(params, batch, None)
    worst = 0.0
    for name in sorted(params):
        p = params[name]
        g = analytic[name]
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = model.loss(params, batch)
            flat[i] = orig - eps
            down = model.loss(params, batch)
            flat[i] = orig
            num = (up - down) / (2 * eps)
            err = abs(gflat[i] - num) / max(abs(gflat[i]), abs(num), 1e-8)
            worst = max(worst, err)
    return worst
