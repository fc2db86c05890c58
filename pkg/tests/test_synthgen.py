import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ssvepnet.baselines import build_references, cca_classify
from ssvepnet.signal import CONDITIONS, Condition, Montage
from ssvepnet.spectral import rfft
from ssvepnet.synthgen import (OCCIPITAL, STIMULUS_HZ, ConditionSpec, GenConfig, gen_dataset, gen_pink_noise,
                               gen_ssvep, gen_trial, gen_walking_artifact, make_profile, read_dataset,
                               write_dataset)

T, RATE = 350, 100.0


# SSVEP template

def test_ssvep_zero_gain():
    assert not gen_ssvep(12.0, 0.0, 0.3, T, RATE).any()


def test_ssvep_harmonic_content():
    x = gen_ssvep(12.0, 1.0, 0.0, 400, RATE)  # 48 periods of 12 Hz in 400 samples
    mag = np.abs(rfft(x))
    freqs = np.arange(len(mag)) * RATE / 400
    at = lambda f: mag[int(round(f / (RATE / 400)))]
    assert at(36.0) > 0.2 * at(12.0)
    assert at(48.0) < 1e-9 * at(12.0)  # no 4th harmonic
    assert abs(freqs[np.argmax(mag)] - 12.0) <= RATE / 400
    assert at(24.0) / at(12.0) == pytest.approx(0.5, abs=0.05)


def test_ssvep_rejects_bad_frequency():
    with pytest.raises(ValueError):
        gen_ssvep(60.0, 1.0, 0.0, T, RATE)


# pink noise

def test_pink_zero_scale():
    assert not gen_pink_noise(T, 0.0, np.random.default_rng(0)).any()


@given(st.floats(1e-3, 1e3), st.integers(0, 2 ** 31))
def test_pink_rms_exact(scale, seed):
    x = gen_pink_noise(T, scale, np.random.default_rng(seed), (4,))
    assert np.allclose(np.sqrt(np.mean(x ** 2, axis=-1)), scale, rtol=1e-9, atol=0)


def test_pink_spectral_slope():
    rng = np.random.default_rng(7)
    x = gen_pink_noise(T, 1.0, rng, (200,))
    power = np.mean(np.abs(rfft(x)) ** 2, axis=0)
    freqs = np.arange(len(power)) * RATE / T
    sel = (freqs >= 2) & (freqs <= 40)
    slope = np.polyfit(np.log(freqs[sel]), np.log(power[sel]), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.2)


# walking artifact

def test_standing_artifact_zero():
    spec = GenConfig().condition_spec(Condition.STANDING)
    assert not gen_walking_artifact(spec, 1.0, T, RATE, np.random.default_rng(0)).any()


def test_condition_spec_invariants():
    cfg = GenConfig()
    s, w8, w16 = (cfg.condition_spec(c) for c in CONDITIONS)
    assert s.amplitude == 0 and s.emg_rate == 0
    assert w16.amplitude > w8.amplitude > 0
    with pytest.raises(ValueError):
        ConditionSpec(Condition.STANDING, 1.0, 0.1, 0.0)


def _artifact_rms(cond, draws=100, seed=0):
    spec = GenConfig().condition_spec(cond)
    rng = np.random.default_rng(seed)
    return np.mean([np.sqrt(np.mean(gen_walking_artifact(spec, 1.0, T, RATE, rng) ** 2)) for _ in range(draws)])


def test_artifact_speed_ratio():
    ratio = _artifact_rms(Condition.WALK16) / _artifact_rms(Condition.WALK08)
    assert 1.5 <= ratio <= 3.0


def test_artifact_cadence_peak():
    spec = GenConfig().condition_spec(Condition.WALK08)
    rng = np.random.default_rng(1)
    n = 1000
    power = np.mean([np.abs(rfft(gen_walking_artifact(spec, 1.0, n, RATE, rng))) ** 2 for _ in range(100)], axis=0)
    freqs = np.arange(len(power)) * RATE / n
    assert abs(freqs[1 + np.argmax(power[1:])] - 1.8) <= RATE / n


# profiles

@pytest.mark.parametrize("preset", ["paper-like", "high"])
def test_profile_gain_invariants(preset):
    cfg = GenConfig(preset=preset)
    scalp = Montage.scalp32()
    occ = [scalp.index(c) for c in OCCIPITAL]
    frontal = [i for i, c in enumerate(scalp.channels) if c.startswith(("Fp", "AF", "F")) and not c.startswith("FC")]
    for sid in range(1, 14):
        p = make_profile(cfg, sid)
        assert np.all(p.scalp_gain >= 0) and np.all(p.ear_gain >= 0)
        assert p.scalp_gain[occ].min() >= p.scalp_gain[frontal].max()
        assert p.ear_gain.max() <= 0.5 * p.scalp_gain.max()


def test_artifact_monotone_per_subject():
    cfg = GenConfig()
    rng = np.random.default_rng(3)
    for sid in range(1, 14):
        p = make_profile(cfg, sid)
        means = []
        for cond in CONDITIONS:
            spec = cfg.condition_spec(cond)
            rms = []
            for _ in range(30):
                src = np.array([gen_walking_artifact(spec, p.susceptibility, T, RATE, rng, p.noise_scale)
                                for _ in range(cfg.artifact_sources)])
                mixed = np.vstack([p.scalp_mix.T @ src, p.ear_mix.T @ src])
                rms.append(np.sqrt(np.mean(mixed ** 2, axis=1)).mean())
            means.append(np.mean(rms))
        assert means[0] == 0 < means[1] < means[2]


# trials

def test_noiseless_trial_closed_loop():
    cfg = GenConfig(preset="noiseless", n_subjects=2)
    bank = build_references(cfg.stim_freqs, 2, T, RATE)
    for sid in (1, 2):
        p = make_profile(cfg, sid)
        for cond in CONDITIONS:
            for k in range(3):
                scalp, ear = gen_trial(p, cfg.condition_spec(cond), k, cfg, trial_index=k + 5)
                assert cca_classify(scalp, bank)[0] == k
                # every ear channel is a multiple of one template
                ref = ear[0] / np.linalg.norm(ear[0])
                resid = ear - np.outer(ear @ ref, ref)
                assert np.max(np.abs(resid)) < 1e-12 * np.abs(ear).max()


def test_trial_counter_seeding():
    cfg = GenConfig()
    p = make_profile(cfg, 3)
    spec = cfg.condition_spec(Condition.WALK16)
    a = gen_trial(p, spec, 2, cfg, 7)
    b = gen_trial(p, spec, 2, cfg, 7)
    c = gen_trial(p, spec, 2, cfg, 8)
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()
    assert a[0].tobytes() != c[0].tobytes()


# config

def test_config_validation_lists_fields():
    with pytest.raises(ValueError, match="n_subjects.*trials_per_class"):
        GenConfig(n_subjects=0, trials_per_class=0)
    with pytest.raises(ValueError, match="stim_freqs"):
        GenConfig(stim_freqs=(5.0, 30.0))
    with pytest.raises(ValueError, match="preset"):
        GenConfig(preset="medium")


def test_config_round_trip():
    cfg = GenConfig(preset="hard", seed=9, n_subjects=4)
    assert GenConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    with pytest.raises(ValueError):
        GenConfig.from_dict({"n_subject": 3})


# datasets

def test_default_counts_arithmetic():
    cfg = GenConfig()
    assert cfg.n_subjects * len(CONDITIONS) * cfg.trials_per_class * len(cfg.stim_freqs) == 3510


def test_small_dataset_balanced_and_written(tmp_path, noiseless_small):
    ds = noiseless_small
    assert len(ds.scalp) == len(ds.ear) == 2 * 3 * 30
    for sid in (1, 2):
        for cond in CONDITIONS:
            part = ds.scalp.slice(subject_id=sid, condition=cond)
            assert np.bincount(part.labels).tolist() == [10, 10, 10]
    write_dataset(ds, tmp_path / "a")
    manifest, sets = read_dataset(tmp_path / "a")
    assert manifest["n_pairs"] == 180
    assert manifest["generator"] == ds.cfg.to_dict()
    assert np.array_equal(sets["ear"].data, ds.ear.data)
    assert np.array_equal(sets["scalp"].labels, ds.scalp.labels)


def test_regeneration_byte_identical(tmp_path):
    cfg = GenConfig(n_subjects=1, trials_per_class=4, seed=5)
    write_dataset(gen_dataset(cfg), tmp_path / "a")
    write_dataset(gen_dataset(cfg), tmp_path / "b")
    for sub in ("scalp", "ear"):
        assert (tmp_path / "a" / sub / "epochs.bin").read_bytes() == (tmp_path / "b" / sub / "epochs.bin").read_bytes()
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()


def test_scalp_occipital_snr_beats_ear():
    # zeroing the gains leaves the trial's noise stream untouched, so the difference is the exact SSVEP part
    from dataclasses import replace

    cfg = GenConfig(trials_per_class=10)
    occ = [Montage.scalp32().index(c) for c in OCCIPITAL]
    hz = np.arange(T // 2 + 1) * RATE / T
    spec = cfg.condition_spec(Condition.STANDING)
    for sid in range(1, 14):
        p = make_profile(cfg, sid)
        quiet = replace(p, scalp_gain=np.zeros(32), ear_gain=np.zeros(18))
        sig = {"scalp": 0.0, "ear": 0.0}
        noise = {"scalp": 0.0, "ear": 0.0}
        for j in range(cfg.trials_per_class):
            for k, f in enumerate(STIMULUS_HZ):
                band = np.abs(hz - f) <= 0.5
                full = dict(zip(("scalp", "ear"), gen_trial(p, spec, k, cfg, j)))
                bg = dict(zip(("scalp", "ear"), gen_trial(quiet, spec, k, cfg, j)))
                for m in full:
                    sig[m] = sig[m] + np.sum(np.abs(rfft(full[m] - bg[m])[:, band]) ** 2, axis=1)
                    noise[m] = noise[m] + np.sum(np.abs(rfft(bg[m])[:, band]) ** 2, axis=1)
        snr_scalp = sig["scalp"] / noise["scalp"]
        snr_ear = sig["ear"] / noise["ear"]
        assert snr_scalp[occ].min() > snr_ear.max(), sid


def test_paper_like_ear_standing_cca_band():
    from ssvepnet.evaluation import ProtocolSpec, preprocess_set, run_session_dependent

    ds = gen_dataset(GenConfig())
    ear = preprocess_set(ds.ear.slice(condition=Condition.STANDING))
    accs = run_session_dependent(ear, ProtocolSpec("session-dependent", "ear", "Standing", "CCA"))
    assert 0.40 <= np.mean(list(accs.values())) <= 0.65
