"""Versioned JSON model files with bit-exact parameter round-trips.

Floats are written with Python's shortest round-trip repr, so a decimal
load reproduces every float64 bit pattern and a save-load-save cycle is
byte-identical (keys are sorted, separators fixed).
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import ModelFormatError, ModelVersionError
from ..features import NormalizationStats
from .mlp import MlpModel
from .recurrent import LstmModel, RecurrentLayer, RnnModel

FORMAT_VERSION = 1
FEATURE_SCHEMA_VERSION = 1

_MODEL_TYPES = {"mlp": MlpModel, "lstm": LstmModel, "rnn": RnnModel}


def _type_name(model) -> str:
    for name, cls in _MODEL_TYPES.items():
        if type(model) is cls:
            return name
    raise ModelFormatError(f"unsupported model class {type(model).__name__}")


def _envelope(model) -> dict:
    kind = _type_name(model)
    params = {name: p.tolist() for name, p in model.parameters()}
    if kind == "mlp":
        hyper = {"layer_sizes": model.layer_sizes}
    else:
        hyper = {
            "input_size": model.input_size,
            "hidden_size": model.hidden_size,
            "n_layers": len(model.layers),
            "dropout": model.dropout,
            "horizon_h": model.horizon_h,
            "target_mean": model.target_mean,
            "target_std": model.target_std,
        }
    return {
        "format_version": FORMAT_VERSION,
        "model_type": kind,
        "hyperparams": hyper,
        "feature_schema": {
            "version": FEATURE_SCHEMA_VERSION,
            "features": list(model.feature_names),
        },
        "normalization": (model.normalization.to_jsonable()
                          if model.normalization is not None else None),
        "parameters": params,
    }


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(_envelope(model), sort_keys=True,
                            separators=(",", ":")))
        fh.write("\n")


def load_model(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict) or "format_version" not in obj:
        raise ModelFormatError(f"{path}: not a model file")
    version = obj["format_version"]
    if version > FORMAT_VERSION:
        raise ModelVersionError(
            f"{path}: format_version {version} is newer than supported "
            f"{FORMAT_VERSION}")
    try:
        kind = obj["model_type"]
        params = {k: np.asarray(v, dtype=np.float64)
                  for k, v in obj["parameters"].items()}
        norm = (NormalizationStats.from_jsonable(obj["normalization"])
                if obj.get("normalization") else None)
        features = tuple(obj["feature_schema"]["features"])
        if kind == "mlp":
            sizes = obj["hyperparams"]["layer_sizes"]
            n_layers = len(sizes) - 1
            model = MlpModel(
                weights=[params[f"layer{i}.w"] for i in range(n_layers)],
                biases=[params[f"layer{i}.b"] for i in range(n_layers)],
                normalization=norm,
                feature_names=features,
            )
        elif kind in ("lstm", "rnn"):
            hyper = obj["hyperparams"]
            layers = [
                RecurrentLayer(wx=params[f"layer{i}.wx"],
                               wh=params[f"layer{i}.wh"],
                               b=params[f"layer{i}.b"])
                for i in range(hyper["n_layers"])
            ]
            cls = LstmModel if kind == "lstm" else RnnModel
            model = cls(
                layers=layers,
                head_w=params["head.w"],
                head_b=params["head.b"],
                dropout=hyper["dropout"],
                normalization=norm,
                feature_names=features,
                target_mean=hyper["target_mean"],
                target_std=hyper["target_std"],
                horizon_h=hyper["horizon_h"],
            )
        else:
            raise ModelFormatError(f"{path}: unknown model_type {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model file: {exc}") from None
    return model
