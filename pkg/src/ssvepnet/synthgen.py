"""Synthetic ambulatory SSVEP recordings, scalp and ear montages recorded together.

Every trial is a pure function of the generator config and its indices: all
randomness comes from counter-style streams keyed by (seed, purpose, ids), so
trials can be generated in any order or in parallel with identical bytes.

Signal model per channel::

    gain[ch] * ssvep(f_k) + pink noise + sum_s mix[s, ch] * artifact_s(condition)

The artifact sources are shared by both montages of a trial, as is the SSVEP
phase, because the two montages observe the same head at the same time.
"""
from dataclasses import asdict, dataclass, field, fields
import json
from pathlib import Path

import numpy as np

from .dataset import EpochSet, read_epoch_set, write_epoch_set
from .rng import derive_rng
from .signal import CONDITIONS, Condition, Montage
from .spectral import irfft

STIMULUS_HZ = (60 / 11, 60 / 7, 60 / 5)
OCCIPITAL = ("O1", "Oz", "O2", "PO7", "PO3", "POz", "PO4", "PO8")

# SSVEP amplitude as a multiple of the background noise RMS
PRESETS = {
    "noiseless": {"ssvep_snr": 1.0, "noise": False},
    "high": {"ssvep_snr": 2.0, "noise": True},
    "paper-like": {"ssvep_snr": 0.2, "noise": True},
    "hard": {"ssvep_snr": 0.1, "noise": True},
}

# documented 5-seed set used for the calibration check
CALIBRATION_SEEDS = (0, 1, 2, 3, 4)


def region_gain(label):
    """Nominal SSVEP gain of a scalp electrode by its 10-20 region."""
    if label in OCCIPITAL:
        return 1.0
    if label.startswith("P"):
        return 0.6
    if label.startswith(("C", "FC")):
        return 0.3
    return 0.15


@dataclass(frozen=True)
class ConditionSpec:
    condition: Condition
    cadence_hz: float
    amplitude: float  # cadence oscillation amplitude, in units of background RMS
    emg_rate: float  # bursts per second

    def __post_init__(self):
        if self.condition == Condition.STANDING and (self.amplitude != 0 or self.emg_rate != 0):
            raise ValueError("Standing must carry no artifact")
        if self.amplitude < 0 or self.emg_rate < 0 or self.cadence_hz < 0:
            raise ValueError("cadence, amplitude and burst rate must be non-negative")


@dataclass(frozen=True)
class GenConfig:
    n_subjects: int = 13
    trials_per_class: int = 30
    stim_freqs: tuple = STIMULUS_HZ
    n_samples: int = 350
    rate: float = 100.0
    preset: str = "paper-like"
    seed: int = 0
    noise_rms: float = 10.0  # µV
    harmonics: int = 3
    harmonic_decay: float = 0.5
    phase_jitter: float = 0.2  # rad, per trial
    cadence_walk08: float = 1.8
    cadence_walk16: float = 2.4
    artifact_walk08: float = 0.05
    artifact_walk16: float = 0.1
    emg_rate_walk08: float = 0.1
    emg_rate_walk16: float = 0.3
    artifact_sources: int = 3

    def __post_init__(self):
        object.__setattr__(self, "stim_freqs", tuple(float(f) for f in self.stim_freqs))
        bad = []
        for name in ("n_subjects", "trials_per_class", "n_samples", "harmonics", "artifact_sources"):
            if getattr(self, name) < 1:
                bad.append(name)
        if self.preset not in PRESETS:
            bad.append("preset")
        if not self.rate > 0:
            bad.append("rate")
        if any(not 0 < 2 * f < self.rate / 2 for f in self.stim_freqs):
            bad.append("stim_freqs")
        if not self.noise_rms > 0:
            bad.append("noise_rms")
        if not 0 < self.artifact_walk08 < self.artifact_walk16:
            bad.append("artifact_walk08/artifact_walk16")
        for name in ("cadence_walk08", "cadence_walk16"):
            if not 0 < getattr(self, name) < self.rate / 8:
                bad.append(name)
        if bad:
            raise ValueError(f"invalid generator config fields: {', '.join(bad)}")

    @property
    def preset_params(self):
        return PRESETS[self.preset]

    @property
    def ssvep_amplitude(self):
        return self.preset_params["ssvep_snr"] * self.noise_rms

    @property
    def noisy(self):
        return self.preset_params["noise"]

    def condition_spec(self, condition):
        """Artifact parameters of a condition; the noiseless preset has none anywhere."""
        condition = Condition(condition)
        if condition == Condition.STANDING:
            return ConditionSpec(condition, 0.0, 0.0, 0.0)
        if condition == Condition.WALK08:
            cadence, amp, emg = self.cadence_walk08, self.artifact_walk08, self.emg_rate_walk08
        else:
            cadence, amp, emg = self.cadence_walk16, self.artifact_walk16, self.emg_rate_walk16
        if not self.noisy:
            amp, emg = 0.0, 0.0
        return ConditionSpec(condition, cadence, amp, emg)

    def to_dict(self):
        d = asdict(self)
        d["stim_freqs"] = list(self.stim_freqs)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ValueError(f"unknown generator config keys: {', '.join(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class SubjectProfile:
    subject_id: int
    scalp_gain: np.ndarray
    ear_gain: np.ndarray
    noise_scale: float  # µV RMS of the background
    susceptibility: float
    scalp_mix: np.ndarray  # (sources, 32) artifact coupling
    ear_mix: np.ndarray  # (sources, 18)
    phases: np.ndarray  # one per stimulus
    stream: str = field(default="")


def make_profile(cfg, subject_id):
    rng = derive_rng(cfg.seed, "profile", subject_id)
    scalp = Montage.scalp32()
    strength = rng.uniform(0.5, 1.5)
    nominal = np.array([region_gain(c) for c in scalp.channels])
    scalp_gain = nominal * rng.uniform(0.8, 1.2, size=nominal.size)
    ear_gain = 0.3 * rng.uniform(0.8, 1.2, size=18)
    amp = cfg.ssvep_amplitude * strength
    noise = cfg.noise_rms * rng.uniform(0.8, 1.25) if cfg.noisy else 0.0
    susc = rng.uniform(0.7, 1.3)
    s = cfg.artifact_sources
    return SubjectProfile(
        subject_id=subject_id,
        scalp_gain=amp * scalp_gain,
        ear_gain=amp * ear_gain,
        noise_scale=noise,
        susceptibility=susc,
        scalp_mix=rng.uniform(0.5, 1.5, size=(s, 32)),
        ear_mix=rng.uniform(0.5, 1.5, size=(s, 18)),
        phases=rng.uniform(0, 2 * np.pi, size=len(cfg.stim_freqs)),
        stream=f"profile/{cfg.seed}/{subject_id}",
    )


def gen_ssvep(f, gain, phase, n_samples, rate, harmonics=3, decay=0.5):
    """``gain * sum_h decay**(h-1) * sin(2 pi h f t + h phase)``; harmonics at or above Nyquist are dropped."""
    if not 0 < f < rate / 2:
        raise ValueError(f"stimulus frequency {f} Hz must lie in (0, Nyquist = {rate / 2} Hz)")
    t = np.arange(n_samples) / rate
    out = np.zeros(n_samples)
    for h in range(1, harmonics + 1):
        if h * f >= rate / 2:
            break
        out += decay ** (h - 1) * np.sin(2 * np.pi * h * f * t + h * phase)
    return gain * out


def gen_pink_noise(n_samples, scale, rng, shape=()):
    """1/f noise: Gaussian spectrum weighted by 1/sqrt(f), DC removed, RMS set to ``scale``.

    ``shape`` adds leading axes; every row is normalized separately.
    """
    if n_samples < 2:
        raise ValueError("pink noise needs at least 2 samples")
    half = n_samples // 2 + 1
    spec = rng.normal(size=shape + (half,)) + 1j * rng.normal(size=shape + (half,))
    k = np.arange(half)
    weight = np.zeros(half)
    weight[1:] = 1 / np.sqrt(k[1:])
    x = irfft(spec * weight, n_samples)
    if scale == 0:
        return np.zeros(shape + (n_samples,))
    rms = np.sqrt(np.mean(x ** 2, axis=-1, keepdims=True))
    return x * (scale / rms)


def gen_walking_artifact(spec, susceptibility, n_samples, rate, rng, background_rms=1.0, harmonics=3):
    """Gait artifact: cadence oscillation with harmonics plus Poisson EMG bursts.

    The oscillation has amplitude ``spec.amplitude * susceptibility *
    background_rms`` and harmonic weights ``0.5 ** (h - 1)`` with random
    phases; each burst is a 50-100 ms window of first-differenced white noise
    at three times the background RMS (scaled by susceptibility).
    """
    if spec.amplitude == 0 and spec.emg_rate == 0:
        return np.zeros(n_samples)
    if not spec.cadence_hz < rate / 8:
        raise ValueError(f"cadence {spec.cadence_hz} Hz must be below Nyquist / 4")
    t = np.arange(n_samples) / rate
    cadence = spec.cadence_hz * (1 + rng.uniform(-0.03, 0.03))
    phases = rng.uniform(0, 2 * np.pi, size=harmonics)
    osc = np.zeros(n_samples)
    for h in range(1, harmonics + 1):
        osc += 0.5 ** (h - 1) * np.sin(2 * np.pi * h * cadence * t + phases[h - 1])
    out = spec.amplitude * susceptibility * background_rms * osc
    n_bursts = rng.poisson(spec.emg_rate * n_samples / rate)
    for _ in range(n_bursts):
        width = int(round(rng.uniform(0.05, 0.10) * rate))
        start = rng.integers(0, n_samples - width + 1)
        burst = np.diff(rng.normal(size=width + 1))
        burst *= 3 * background_rms * susceptibility / np.sqrt(np.mean(burst ** 2))
        out[start:start + width] += burst
    return out


def trial_key(cfg, subject_id, condition, k, trial_index):
    return ("trial", subject_id, Condition(condition).value, k, trial_index)


def gen_trial(profile, cond_spec, k, cfg, trial_index=0):
    """One simultaneous (scalp, ear) pair of ``(C, T)`` arrays for class ``k``."""
    if k not in range(len(cfg.stim_freqs)):
        raise ValueError(f"class index {k} out of range")
    key = trial_key(cfg, profile.subject_id, cond_spec.condition, k, trial_index)
    rng = derive_rng(cfg.seed, *key)
    T, rate = cfg.n_samples, cfg.rate
    phase = profile.phases[k] + rng.normal(0, cfg.phase_jitter)
    template = gen_ssvep(cfg.stim_freqs[k], 1.0, phase, T, rate, cfg.harmonics, cfg.harmonic_decay)
    scalp = profile.scalp_gain[:, None] * template
    ear = profile.ear_gain[:, None] * template
    if profile.noise_scale > 0:
        scalp = scalp + gen_pink_noise(T, profile.noise_scale, rng, (32,))
        ear = ear + gen_pink_noise(T, profile.noise_scale, rng, (18,))
    if cond_spec.amplitude > 0 or cond_spec.emg_rate > 0:
        sources = np.array([gen_walking_artifact(cond_spec, profile.susceptibility, T, rate, rng,
                                                 profile.noise_scale)
                            for _ in range(cfg.artifact_sources)])
        scalp = scalp + profile.scalp_mix.T @ sources
        ear = ear + profile.ear_mix.T @ sources
    return scalp, ear


@dataclass
class SyntheticDataset:
    cfg: GenConfig
    profiles: list
    scalp: EpochSet
    ear: EpochSet

    def montage(self, name):
        return self.scalp if Montage.by_name(name).short == "scalp" else self.ear


def gen_dataset(cfg=GenConfig()):
    """All trials, ordered subject, condition, trial index, class."""
    profiles = [make_profile(cfg, s) for s in range(1, cfg.n_subjects + 1)]
    n_cls = len(cfg.stim_freqs)
    n = cfg.n_subjects * len(CONDITIONS) * cfg.trials_per_class * n_cls
    scalp = np.empty((n, 32, cfg.n_samples), np.float32)
    ear = np.empty((n, 18, cfg.n_samples), np.float32)
    labels = np.empty(n, int)
    subjects = np.empty(n, int)
    conds = np.empty(n, object)
    extra = []
    i = 0
    for prof in profiles:
        for cond in CONDITIONS:
            spec = cfg.condition_spec(cond)
            for j in range(cfg.trials_per_class):
                for k in range(n_cls):
                    scalp[i], ear[i] = gen_trial(prof, spec, k, cfg, j)
                    labels[i], subjects[i], conds[i] = k, prof.subject_id, cond.value
                    extra.append({"trial_index": j,
                                  "stream": [cfg.seed, *trial_key(cfg, prof.subject_id, cond, k, j)]})
                    i += 1
    rate = cfg.rate
    mk = lambda m, d: EpochSet(m, rate, d, labels.copy(), subjects.copy(), conds.copy(), list(extra))
    return SyntheticDataset(cfg, profiles, mk(Montage.scalp32(), scalp), mk(Montage.ear18(), ear))


def _profile_record(p):
    return {"subject_id": p.subject_id, "noise_scale": p.noise_scale, "susceptibility": p.susceptibility,
            "phases": p.phases.tolist(), "stream": p.stream}


def write_dataset(ds, out_dir):
    """``out_dir/manifest.json`` listing the trial pairs, plus ``scalp/`` and ``ear/`` epoch sets."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    provenance = {"generator": ds.cfg.to_dict()}
    write_epoch_set(out / "scalp", ds.scalp, extra_manifest=provenance)
    write_epoch_set(out / "ear", ds.ear, extra_manifest=provenance)
    pairs = [{"subject_id": int(s), "condition": c, "label": int(y), **x}
             for s, c, y, x in zip(ds.scalp.subject_ids, ds.scalp.conditions, ds.scalp.labels, ds.scalp.extra)]
    manifest = {
        "format_version": 1,
        "kind": "paired-montage-dataset",
        "montages": {"scalp": "scalp", "ear": "ear"},
        "generator": ds.cfg.to_dict(),
        "preset_params": ds.cfg.preset_params,
        "profiles": [_profile_record(p) for p in ds.profiles],
        "n_pairs": len(pairs),
        "trials": pairs,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return out


def read_dataset(path):
    """``(manifest, {"scalp": EpochSet, "ear": EpochSet})`` from a directory written by ``write_dataset``."""
    path = Path(path)
    with open(path / "manifest.json") as fh:
        manifest = json.load(fh)
    sets = {name: read_epoch_set(path / sub)[0] for name, sub in manifest["montages"].items()}
    return manifest, sets
