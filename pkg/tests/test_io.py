import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ssvepnet.config import ConfigError, ProtocolConfig, RunConfig
from ssvepnet.dataset import EpochSet, read_epoch_set, write_epoch_set
from ssvepnet.methods import LdaMethod, ProposedMethod, Standardizer
from ssvepnet.nn import NetArch, TrainConfig, TwoStreamNet
from ssvepnet.rng import derive_rng, derive_seed
from ssvepnet.serialize import (load_container, load_lda, load_net, load_proposed, save_container, save_lda,
                                save_net, save_proposed)
from ssvepnet.signal import Montage


# random streams

def test_streams_keyed_not_ordered():
    a = derive_rng(7, "x", 1).normal(size=3)
    derive_rng(7, "y").normal(size=100)
    b = derive_rng(7, "x", 1).normal(size=3)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, derive_rng(7, "x", 2).normal(size=3))
    assert not np.array_equal(a, derive_rng(8, "x", 1).normal(size=3))


def test_streams_stable_across_processes():
    code = "from ssvepnet.rng import derive_seed; print(derive_seed(3, 'kfold', 5, 'Walk08'))"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout
    assert int(out) == derive_seed(3, "kfold", 5, "Walk08")


# epoch sets

def _set(n=6):
    rng = np.random.default_rng(0)
    return EpochSet(Montage.ear18(), 100.0, rng.normal(size=(n, 18, 350)).astype(np.float32),
                    np.arange(n) % 3, np.repeat([1, 2], n // 2), ["Standing", "Walk08", "Walk16"] * (n // 3))


def test_epoch_set_round_trip(tmp_path):
    es = _set()
    write_epoch_set(tmp_path, es)
    back, manifest = read_epoch_set(tmp_path)
    assert manifest["T"] == 350 and manifest["montage"] == "Ear18" and len(manifest["trials"]) == 6
    assert np.array_equal(back.data, es.data)
    assert np.array_equal(back.labels, es.labels) and list(back.conditions) == list(es.conditions)
    assert (tmp_path / "epochs.bin").stat().st_size == 6 * 18 * 350 * 4


def test_epoch_set_truncated(tmp_path):
    write_epoch_set(tmp_path, _set())
    blob = (tmp_path / "epochs.bin").read_bytes()
    (tmp_path / "epochs.bin").write_bytes(blob[:-4])
    with pytest.raises(ValueError):
        read_epoch_set(tmp_path)


def test_epoch_set_slicing():
    es = _set()
    part = es.slice(subject_id=2, condition="Standing")
    assert len(part) == 1 and part.subject_ids[0] == 2 and part.conditions[0] == "Standing"
    with pytest.raises(ValueError):
        EpochSet(Montage.ear18(), 100.0, np.zeros((2, 17, 10)), [0, 1], [1, 1], ["Standing"] * 2)


# model container

def test_container_round_trip(tmp_path):
    tensors = [("a", np.arange(6.0).reshape(2, 3)), ("b", np.array([np.pi]))]
    save_container(tmp_path / "m.bin", "demo", {"k": 1}, tensors)
    tag, desc, back = load_container(tmp_path / "m.bin")
    assert tag == "demo" and desc["k"] == 1 and desc["tensors"] == [["a", [2, 3]], ["b", [1]]]
    assert np.array_equal(back["a"], tensors[0][1]) and back["b"][0] == np.pi


def test_container_corruption(tmp_path):
    p = tmp_path / "m.bin"
    save_container(p, "demo", {}, [("a", np.ones(4))])
    blob = p.read_bytes()
    p.write_bytes(b"XXXXXXXX" + blob[8:])
    with pytest.raises(ValueError, match="magic"):
        load_container(p)
    p.write_bytes(blob[:-8])
    with pytest.raises(ValueError, match="truncated"):
        load_container(p)
    p.write_bytes(blob + b"\0")
    with pytest.raises(ValueError, match="trailing"):
        load_container(p)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_net_round_trip_bit_exact(tmp_path, dtype):
    arch = NetArch(n_channels=3, n_bins=40, n_steps=12, hidden=5, dense_units=6)
    net = TwoStreamNet.initialise(arch, np.random.default_rng(0)).astype(dtype)
    save_net(tmp_path / "n.bin", net)
    back, desc, extra = load_net(tmp_path / "n.bin")
    assert back.arch == arch and back.dtype == dtype and extra == {}
    assert all(back.params[k].tobytes() == net.params[k].tobytes() for k in net.params)


def test_proposed_round_trip_predictions(tmp_path, high_small):
    from ssvepnet.evaluation import preprocess_set

    part = preprocess_set(high_small.ear).slice(subject_id=2, condition="Walk08")
    m = ProposedMethod(part.rate, TrainConfig(epochs=2), seed=4).fit(part.data, part.labels)
    save_proposed(tmp_path / "p.bin", m)
    back = load_proposed(tmp_path / "p.bin")
    assert back.predict_proba(part.data).tobytes() == m.predict_proba(part.data).tobytes()


def test_lda_round_trip(tmp_path, high_small):
    part = high_small.ear.slice(subject_id=1, condition="Standing")
    m = LdaMethod(part.rate).fit(part.data, part.labels)
    save_lda(tmp_path / "l.bin", m.model)
    model, desc = load_lda(tmp_path / "l.bin")
    assert desc["gamma"] == m.model.gamma
    assert np.array_equal(model.scores(np.ones(model.n_features)), m.model.scores(np.ones(model.n_features)))
    with pytest.raises(ValueError):
        load_net(tmp_path / "l.bin")


def test_standardizer_uses_training_stats():
    rng = np.random.default_rng(0)
    f, s = rng.normal(3, 2, size=(50, 4, 7)), rng.normal(-1, 5, size=(50, 9, 4))
    sc = Standardizer.fit(f, s)
    fz, sz = sc.apply(f, s)
    assert np.allclose(fz.mean(axis=0), 0, atol=1e-12) and np.allclose(fz.std(axis=0), 1)
    assert np.allclose(sz.mean(axis=(0, 1)), 0, atol=1e-12)
    f2, _ = sc.apply(f + 10, s)
    assert np.allclose(f2.mean(axis=0), 10 / sc.freq_std)


# run configuration

def test_run_config_round_trip():
    cfg = RunConfig(seed=4, jobs=2, protocol=ProtocolConfig(kind="session-to-session", methods=("lda", "proposed")))
    again = RunConfig.loads(cfg.dumps())
    assert again == cfg
    assert again.dumps() == cfg.dumps()


@given(st.integers(0, 10 ** 6), st.integers(1, 8), st.sampled_from(["noiseless", "high", "paper-like", "hard"]),
       st.integers(1, 20))
def test_run_config_round_trip_property(seed, jobs, preset, n):
    from ssvepnet.synthgen import GenConfig

    cfg = RunConfig(seed=seed, jobs=jobs, generator=GenConfig(preset=preset, n_subjects=n),
                    train=TrainConfig(epochs=n))
    assert RunConfig.from_dict(json.loads(cfg.dumps())) == cfg


@pytest.mark.parametrize("doc, key", [
    ({"sed": 1}, "sed"),
    ({"generator": {"n_subject": 3}}, "n_subject"),
    ({"train": {"momentum": 0.9}}, "momentum"),
    ({"protocol": {"folds": 3}}, "folds"),
])
def test_run_config_unknown_keys(doc, key):
    with pytest.raises(ConfigError, match=key):
        RunConfig.from_dict(doc)


def test_run_config_invalid_values():
    with pytest.raises(ConfigError, match="n_subjects"):
        RunConfig.from_dict({"generator": {"n_subjects": 0}})
    with pytest.raises(ConfigError):
        RunConfig.loads("{not json")
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"jobs": 0})
