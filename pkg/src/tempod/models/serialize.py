"""Save and load intensity models as JSON.

Every model serializes to a dict with a ``kind`` tag and enough state
to rebuild it exactly: analytic models store their rate tables, the
gap-length baseline stores its sorted pool, and the neural model
stores every parameter block as a flat array with shape metadata plus
the training configuration it was fit with.  Floats round-trip through
``repr`` so a reloaded model scores identically.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ctlstm import CtLstmModel
from .groundtruth import GroundTruthGamma, GroundTruthPoisson
from .length import LenModel

__all__ = ["model_to_dict", "model_from_dict", "save_model", "load_model"]


def model_to_dict(model) -> dict:
    to_config = getattr(model, "to_config", None)
    if to_config is None:
        raise TypeError(f"{type(model).__name__} is not a serializable model")
    config = to_config()
    config.setdefault("view", getattr(model, "view", None))
    return config


def model_from_dict(config: dict):
    kind = config.get("kind")
    if kind == "gt-poisson":
        return GroundTruthPoisson(
            rates=tuple(config["rates"]),
            fallback_initial=int(config.get("fallback_initial", 0)),
        )
    if kind == "gt-gamma":
        return GroundTruthGamma(
            params=tuple((float(a), float(b)) for a, b in config["params"]),
            fallback_initial=int(config.get("fallback_initial", 0)),
        )
    if kind == "len":
        return LenModel(np.asarray(config["lengths"], dtype=np.float64))
    if kind == "ctlstm":
        return CtLstmModel.from_config(config)
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    Path(path).write_text(model_json(model))


def model_json(model) -> str:
    return json.dumps(model_to_dict(model), indent=2, sort_keys=True) + "\n"


def load_model(path):
    return model_from_json(Path(path).read_text())


def model_from_json(text: str):
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ValueError("model file must hold a JSON object")
    return model_from_dict(config)
