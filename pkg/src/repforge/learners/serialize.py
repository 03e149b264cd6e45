"""JSON model files carrying a format version and a feature-schema hash."""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .forest import ForestModel, ForestParams
from .gbt import GbtModel
from .linear import LinearModel
from .tree import LearnerError, Tree

FORMAT = "repforge-model"
FORMAT_VERSION = 1


def schema_hash(names) -> str:
    return hashlib.sha256("\n".join(names).encode()).hexdigest()[:16]


def _arr(a):
    return None if a is None else np.asarray(a).tolist()


def model_to_dict(model) -> dict:
    if isinstance(model, ForestModel):
        body = {"kind": "forest", "task": model.task, "classes": _arr(model.classes),
                "params": vars(model.params), "seeds": list(model.seeds),
                "trees": [t.to_dict() for t in model.trees]}
    elif isinstance(model, GbtModel):
        body = {"kind": "gbt", "task": model.task, "base": _arr(model.base), "classes": _arr(model.classes),
                "learning_rate": model.learning_rate, "loss_history": model.loss_history,
                "params": model.params, "trees": [[t.to_dict() for t in rnd] for rnd in model.trees]}
    elif isinstance(model, LinearModel):
        body = {"kind": "linear", "weights": _arr(model.weights), "intercept": _arr(model.intercept),
                "reg": model.reg, "classes": _arr(model.classes)}
    else:
        raise LearnerError(f"cannot serialize {type(model).__name__}")
    names = list(model.feature_names)
    return {"format": FORMAT, "version": FORMAT_VERSION, "n_features": model.n_features,
            "feature_names": names, "schema_hash": schema_hash(names), **body}


def model_from_dict(d: dict):
    if d.get("format") != FORMAT:
        raise LearnerError("not a repforge model file")
    if d.get("version") != FORMAT_VERSION:
        raise LearnerError(f"unsupported model version {d.get('version')}")
    names = tuple(d["feature_names"])
    if schema_hash(names) != d["schema_hash"]:
        raise LearnerError("schema hash does not match feature names")
    cls = None if d.get("classes") is None else np.asarray(d["classes"])
    if d["kind"] == "forest":
        return ForestModel(d["task"], [Tree.from_dict(t) for t in d["trees"]], cls, d["n_features"],
                           names, ForestParams(**d["params"]), d["seeds"])
    if d["kind"] == "gbt":
        return GbtModel(d["task"], np.asarray(d["base"]), [[Tree.from_dict(t) for t in rnd] for rnd in d["trees"]],
                        d["learning_rate"], cls, d["n_features"], d["loss_history"], names, d["params"])
    if d["kind"] == "linear":
        ic = d["intercept"]
        return LinearModel(np.asarray(d["weights"]), np.asarray(ic) if isinstance(ic, list) else ic,
                           d["reg"], cls, d["n_features"], names)
    raise LearnerError(f"unknown model kind {d['kind']!r}")


def save_model(model, path, extra: dict | None = None) -> None:
    d = model_to_dict(model)
    if extra:
        d["meta"] = extra
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(d))
    os.replace(tmp, path)


def load_model(path, expect_names=None):
    d = json.loads(Path(path).read_text())
    model = model_from_dict(d)
    if expect_names is not None and schema_hash(list(expect_names)) != d["schema_hash"]:
        raise LearnerError("feature schema of data differs from the model's")
    return model, d.get("meta", {})
