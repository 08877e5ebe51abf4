import json

import numpy as np
import pytest

from panfl.checkpoint import load_checkpoint, save_checkpoint
from panfl.errors import FormatError
from panfl.linalg import make_rng
from panfl.network import PanConfig, init_mlp


def test_round_trip_bit_exact(tmp_path):
    model = init_mlp((7, 13, 5), PanConfig(mode="multiplicative", amplitude=0.1,
                                           period=2.0), make_rng(3))
    path = tmp_path / "model.json"
    save_checkpoint(path, model, seed=42)
    loaded, seed = load_checkpoint(path)
    assert seed == 42
    assert loaded.pan == model.pan
    assert loaded.activations == model.activations
    for a, b in zip(loaded.parameters(), model.parameters()):
        np.testing.assert_array_equal(a, b)


def test_round_trip_twice_is_byte_identical(tmp_path):
    model = init_mlp((4, 6, 2), PanConfig(), make_rng(0))
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_checkpoint(p1, model, seed=1)
    save_checkpoint(p2, load_checkpoint(p1)[0], seed=1)
    assert p1.read_bytes() == p2.read_bytes()


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(FormatError):
        load_checkpoint(path)


def test_unknown_format_tag(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"format": "something-else"}))
    with pytest.raises(FormatError):
        load_checkpoint(path)


def test_corrupt_array_payload(tmp_path):
    model = init_mlp((4, 6, 2), PanConfig(), make_rng(0))
    path = tmp_path / "model.json"
    save_checkpoint(path, model)
    payload = json.loads(path.read_text())
    payload["weights"][0]["data"] = "!!!not-base64!!!"
    path.write_text(json.dumps(payload))
    with pytest.raises(FormatError):
        load_checkpoint(path)


def test_inconsistent_layer_sizes(tmp_path):
    model = init_mlp((4, 6, 2), PanConfig(), make_rng(0))
    path = tmp_path / "model.json"
    save_checkpoint(path, model)
    payload = json.loads(path.read_text())
    payload["layer_sizes"] = [4, 7, 2]
    path.write_text(json.dumps(payload))
    with pytest.raises(FormatError):
        load_checkpoint(path)
