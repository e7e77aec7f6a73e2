import json

import numpy as np
import pytest

from mpcprune.model import (LayerSpec, ModelFormatError, ModelManifest,
                            load_model, make_toy_model, positional_encoding,
                            save_model)
from mpcprune.ring import FixedPointParams, encode, vdecode

P = FixedPointParams()


def test_toy_model_validates_and_roundtrips(tmp_path):
    m = make_toy_model(layers=2, dim=8, heads=2, ffn_dim=16, seed=3)
    mpath, bpath = save_model(m, tmp_path / "toy")
    assert mpath.name == "toy.manifest.json" and bpath.name == "toy.blob"
    back = load_model(mpath)
    assert back.vocab == m.vocab and back.classes == m.classes
    assert len(back.layers) == len(m.layers)
    for name, arr in m.tensors.items():
        assert np.array_equal(back.tensors[name], arr), name


def test_load_by_stem_suffix(tmp_path):
    m = make_toy_model(layers=1, dim=8, heads=2, ffn_dim=8)
    mpath, bpath = save_model(m, tmp_path / "m")
    assert load_model(mpath, bpath).dim == 8


def test_blob_is_sorted_concatenation(tmp_path):
    m = make_toy_model(layers=1, dim=8, heads=2, ffn_dim=8)
    mpath, bpath = save_model(m, tmp_path / "m")
    doc = json.loads(mpath.read_text())
    names = list(doc["tensors"])
    offsets = [doc["tensors"][n]["offset"] for n in sorted(names)]
    assert offsets == sorted(offsets)
    total = sum(int(np.prod(doc["tensors"][n]["shape"])) * 8 for n in names)
    assert bpath.stat().st_size == total


def test_missing_files_raise(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "none.manifest.json")
    (tmp_path / "x.manifest.json").write_text("{}")
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "x.manifest.json")


def test_bad_version_rejected(tmp_path):
    m = make_toy_model(layers=1, dim=8, heads=2, ffn_dim=8)
    mpath, bpath = save_model(m, tmp_path / "m")
    doc = json.loads(mpath.read_text())
    doc["version"] = 99
    mpath.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        load_model(mpath, bpath)


def test_truncated_blob_rejected(tmp_path):
    m = make_toy_model(layers=1, dim=8, heads=2, ffn_dim=8)
    mpath, bpath = save_model(m, tmp_path / "m")
    raw = bpath.read_bytes()
    bpath.write_bytes(raw[:-16])
    with pytest.raises(ModelFormatError):
        load_model(mpath, bpath)


def test_corrupt_json_rejected(tmp_path):
    m = make_toy_model(layers=1, dim=8, heads=2, ffn_dim=8)
    mpath, bpath = save_model(m, tmp_path / "m")
    mpath.write_text(mpath.read_text()[:-20])
    with pytest.raises(ModelFormatError):
        load_model(mpath, bpath)


def test_thresholds_must_be_ordered():
    m = make_toy_model(layers=1, dim=8, heads=2, ffn_dim=8)
    m.layers[0] = LayerSpec(2, 8, 8, encode(0.5, P), encode(0.4, P))
    with pytest.raises(ModelFormatError):
        m.validate()


def test_missing_and_extra_tensors_rejected():
    m = make_toy_model(layers=1, dim=8, heads=2, ffn_dim=8)
    extra = dict(m.tensors)
    extra["rogue"] = np.zeros(3, np.uint64)
    with pytest.raises(ModelFormatError):
        ModelManifest(m.params, m.poly, m.layers, m.vocab, m.classes,
                      extra).validate()
    missing = dict(m.tensors)
    del missing["embed"]
    with pytest.raises(ModelFormatError):
        ModelManifest(m.params, m.poly, m.layers, m.vocab, m.classes,
                      missing).validate()


def test_shape_mismatch_rejected():
    m = make_toy_model(layers=1, dim=8, heads=2, ffn_dim=8)
    m.tensors["head.b"] = np.zeros(7, np.uint64)
    with pytest.raises(ModelFormatError):
        m.validate()


def test_dim_head_divisibility():
    with pytest.raises(ModelFormatError):
        make_toy_model(layers=1, dim=10, heads=3, ffn_dim=8)


def test_toy_model_deterministic():
    a = make_toy_model(seed=5)
    b = make_toy_model(seed=5)
    for name in a.tensors:
        assert np.array_equal(a.tensors[name], b.tensors[name])
    c = make_toy_model(seed=6)
    assert any(not np.array_equal(a.tensors[n], c.tensors[n]) for n in a.tensors)


def test_positional_encoding_bounded_and_shaped():
    pe = vdecode(positional_encoding(12, 8, P), P)
    assert pe.shape == (12, 8)
    assert np.abs(pe).max() <= 0.5 + 1e-6
    assert pe[0, 0] == 0.0  # sin(0)
    assert abs(pe[0, 1] - 0.5) < 1e-5  # cos(0) scaled by 0.5
