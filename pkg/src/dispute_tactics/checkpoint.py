"""Versioned JSON checkpoints for tactic and escalation models.

Weights are stored per parameter, in canonical layer order, as base64
little-endian float64 so that reloaded models predict bit-identically.
"""
from __future__ import annotations

import base64
import json
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .features import FeatureConfig, Vocab
from .neural import Params, TrainConfig
from .tasks.catalog import LabelsetCatalog
from .tasks.escalation import EscalationModel, EscalationNet
from .tasks.tactics import TacticModel, TacticNet

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _encode(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _decode(s: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").reshape(shape).astype(float)


def _weights(params: Params) -> list[dict]:
    return [{"name": k, "shape": list(v.shape), "data": _encode(v)} for k, v in params.items()]


def _features(f: FeatureConfig) -> dict:
    return {"context": f.context, "binary": f.binary, "context_max_tokens": f.context_max_tokens}


def model_to_dict(model: Union[TacticModel, EscalationModel], manifest: Optional[dict] = None) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "vocab_ref": "embedded",
        "vocab": model.vocab.to_dict(),
        "features": _features(model.features),
        "shapes": {k: list(v.shape) for k, v in model.params.items()},
        "weights": _weights(model.params),
        "history": model.history,
    }
    if isinstance(model, TacticModel):
        doc.update({
            "task": "tactics",
            "model": {"mode": model.mode, "context": model.context, "multitask": model.multitask,
                      "aux_weight": model.net.aux_weight, "reference": model.reference,
                      "input_dim": model.net.input_dim, "n_out": model.net.n_out},
            "thresholds": None if model.thresholds is None else [float(t) for t in model.thresholds],
            "catalog": None if model.catalog is None else model.catalog.to_dict(),
        })
    elif isinstance(model, EscalationModel):
        doc.update({
            "task": "escalation",
            "model": {"aux_weight": model.net.aux_weight, "classifier_hidden": model.net.classifier_hidden,
                      "input_dim": model.net.input_dim},
            "thresholds": None,
            "catalog": None,
        })
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    if manifest is not None:
        doc["manifest"] = manifest
    return doc


def model_from_dict(doc: dict) -> Union[TacticModel, EscalationModel]:
    if doc.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    try:
        config = TrainConfig.from_dict(doc["config"])
        vocab = Vocab.from_dict(doc["vocab"])
        feats = FeatureConfig(**doc["features"])
        params = {w["name"]: _decode(w["data"], w["shape"]) for w in doc["weights"]}
        m = doc["model"]
        if doc["task"] == "tactics":
            net = TacticNet(m["input_dim"], m["n_out"], m["mode"], m["multitask"], m["aux_weight"],
                            config.hidden, config.dropout_p)
            catalog = LabelsetCatalog.from_dict(doc["catalog"]) if doc["catalog"] else None
            th = np.array(doc["thresholds"]) if doc["thresholds"] is not None else None
            return TacticModel(m["mode"], m["context"], m["multitask"], net, params, vocab, feats, config,
                               catalog, th, m.get("reference", "max"), doc.get("history", []))
        if doc["task"] == "escalation":
            net = EscalationNet(m["input_dim"], config.hidden, m["classifier_hidden"], m["aux_weight"],
                                config.dropout_p)
            return EscalationModel(net, params, vocab, config, feats, doc.get("history", []))
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from None
    raise CheckpointError(f"unknown task {doc.get('task')!r}")


def save_model(model, path, manifest: Optional[dict] = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, manifest)), encoding="utf-8")


def load_model(path) -> Union[TacticModel, EscalationModel]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a JSON checkpoint ({exc.msg})") from None
    return model_from_dict(doc)


def load_manifest(path) -> Optional[dict]:
    return json.loads(Path(path).read_text(encoding="utf-8")).get("manifest")
