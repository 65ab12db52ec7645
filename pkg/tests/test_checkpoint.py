import numpy as np
import pytest

from scenewise.checkpoint import load_checkpoint, save_checkpoint


def test_checkpoint_round_trip(tmp_path):
    params = {
        "b.weights": np.arange(6, dtype=float).reshape(2, 3),
        "a.bias": np.array([0.5, -0.25]),
        "scalarish": np.array(3.0),
    }
    manifest = {"seed": 7, "vocabulary_hash": "abc", "model": {"kind": "x"}}
    path = tmp_path / "model.swck"
    save_checkpoint(path, params, manifest)
    loaded, loaded_manifest = load_checkpoint(path)
    assert loaded_manifest == manifest
    assert set(loaded) == set(params)
    for name in params:
        assert np.array_equal(loaded[name], params[name])
        assert loaded[name].shape == params[name].shape


def test_checkpoint_bytes_deterministic(tmp_path):
    params = {"w": np.linspace(0, 1, 12).reshape(3, 4)}
    manifest = {"seed": 1}
    p1, p2 = tmp_path / "a.swck", tmp_path / "b.swck"
    save_checkpoint(p1, params, manifest)
    save_checkpoint(p2, {"w": params["w"].copy()}, dict(manifest))
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.swck"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(path)
