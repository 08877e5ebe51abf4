"""Model checkpoints: a self-describing JSON container.

Layout (format tag ``panfl-checkpoint-v1``)::

    {
      "format": "panfl-checkpoint-v1",
      "layer_sizes": [784, 1024, ..., 10],
      "activations": ["relu", ..., "identity"],
      "pan": {"mode": "multiplicative", "amplitude": 0.1, "period": 1.0},
      "seed": 7,
      "weights": [{"shape": [r, c], "data": "<base64>"}, ...],
      "biases":  [{"shape": [r],    "data": "<base64>"}, ...]
    }

Array payloads are the raw little-endian float64 bytes, base64-encoded, so a
save/load round trip is bit-exact on every platform.
"""

from __future__ import annotations

import base64
import json

import numpy as np

from .errors import FormatError
from .network import MlpModel, PanConfig

FORMAT_TAG = "panfl-checkpoint-v1"


def _encode_array(arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(arr.shape),
            "data": base64.b64encode(data.tobytes()).decode("ascii")}


def _decode_array(obj: dict, what: str) -> np.ndarray:
    try:
        raw = base64.b64decode(obj["data"], validate=True)
        arr = np.frombuffer(raw, dtype="<f8").reshape(obj["shape"])
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"corrupt checkpoint array ({what}): {exc}") from exc
    return arr.astype(np.float64)


def save_checkpoint(path, model: MlpModel, seed: int | None = None) -> None:
    payload = {
        "format": FORMAT_TAG,
        "layer_sizes": list(model.layer_sizes),
        "activations": list(model.activations),
        "pan": {"mode": model.pan.mode.value,
                "amplitude": model.pan.amplitude,
                "period": model.pan.period},
        "seed": seed,
        "weights": [_encode_array(w) for w in model.weights],
        "biases": [_encode_array(b) for b in model.biases],
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")


def load_checkpoint(path) -> tuple[MlpModel, int | None]:
    try:
        with open(path) as f:
            payload = json.load(f)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    if payload.get("format") != FORMAT_TAG:
        raise FormatError(f"{path}: unknown checkpoint format "
                          f"{payload.get('format')!r}")
    try:
        pan = PanConfig(mode=payload["pan"]["mode"],
                        amplitude=payload["pan"]["amplitude"],
                        period=payload["pan"]["period"])
        weights = [_decode_array(o, f"weights[{i}]")
                   for i, o in enumerate(payload["weights"])]
        biases = [_decode_array(o, f"biases[{i}]")
                  for i, o in enumerate(payload["biases"])]
        model = MlpModel(weights=weights, biases=biases, pan=pan,
                         activations=list(payload["activations"]))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: corrupt checkpoint: {exc}") from exc
    if list(model.layer_sizes) != list(payload["layer_sizes"]):
        raise FormatError(f"{path}: declared layer_sizes {payload['layer_sizes']} "
                          f"do not match stored arrays {list(model.layer_sizes)}")
    return model, payload.get("seed")
