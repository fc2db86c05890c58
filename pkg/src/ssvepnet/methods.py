"""The three classifiers behind one fit/predict interface.

All methods take high-pass filtered epochs ``(N, C, T)`` at the working rate.
"""
from dataclasses import dataclass, replace

import numpy as np

from .baselines import build_references, cca_classify, lda_features, lda_fit, lda_predict
from .nn import NetArch, TrainConfig, TwoStreamNet, train
from .rng import derive_rng
from .signal import resample
from .spectral import DEFAULT_BAND, band_magnitudes

METHODS = ("CCA", "LDA", "Proposed")
TIME_RATE = 50.0


def method_name(name):
    for m in METHODS:
        if m.lower() == str(name).lower():
            return m
    raise ValueError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")


class CcaMethod:
    name = "CCA"
    training_free = True

    def __init__(self, rate, n_samples, freqs=None, n_harmonics=2):
        kw = {} if freqs is None else {"freqs": freqs}
        self.bank = build_references(n_harmonics=n_harmonics, n_samples=n_samples, rate=rate, **kw)

    def fit(self, data, labels):
        return self

    def predict(self, data):
        return np.array([cca_classify(x, self.bank)[0] for x in data])


class LdaMethod:
    name = "LDA"
    training_free = False

    def __init__(self, rate, gamma=None):
        self.rate = rate
        self.gamma = gamma
        self.model = None

    def fit(self, data, labels):
        self.model = lda_fit(lda_features(data, self.rate), labels, self.gamma)
        return self

    def predict(self, data):
        return lda_predict(self.model, lda_features(data, self.rate))


# ------------------------------------------------------------ proposed

def network_inputs(data, rate, band=DEFAULT_BAND, time_rate=TIME_RATE):
    """Band magnitudes ``(N, C, B)`` and the time-major sequence ``(N, T', C)`` at ``time_rate``."""
    data = np.asarray(data, dtype=float)
    freq, _ = band_magnitudes(data, rate, band)
    seq = resample(data, rate, time_rate)
    return freq, np.ascontiguousarray(seq.transpose(0, 2, 1))


@dataclass(frozen=True)
class Standardizer:
    """Training-set z-scoring: per (channel, bin) for spectra, per channel for sequences."""
    freq_mean: np.ndarray
    freq_std: np.ndarray
    time_mean: np.ndarray
    time_std: np.ndarray

    @classmethod
    def fit(cls, freq, seq):
        fs = freq.std(axis=0)
        ts = seq.std(axis=(0, 1))
        return cls(freq.mean(axis=0), np.where(fs > 0, fs, 1.0),
                   seq.mean(axis=(0, 1)), np.where(ts > 0, ts, 1.0))

    def apply(self, freq, seq):
        return (freq - self.freq_mean) / self.freq_std, (seq - self.time_mean) / self.time_std


class ProposedMethod:
    """Two-stream network trained from scratch with plain SGD.

    Training runs in float32 for speed; the dtype is kept with the model so
    that a reloaded model predicts bit-identically.
    """
    name = "Proposed"
    training_free = False

    def __init__(self, rate, cfg=TrainConfig(), seed=0, dtype=np.float32, band=DEFAULT_BAND):
        self.rate = rate
        self.cfg = cfg
        self.seed = seed
        self.dtype = dtype
        self.band = band
        self.net = None
        self.scaler = None
        self.losses = []

    def inputs(self, data):
        return network_inputs(data, self.rate, self.band)

    def fit(self, data, labels):
        freq, seq = self.inputs(data)
        self.scaler = Standardizer.fit(freq, seq)
        freq, seq = self.scaler.apply(freq, seq)
        arch = NetArch(n_channels=freq.shape[1], n_bins=freq.shape[2], n_steps=seq.shape[1])
        rng = derive_rng(self.seed, "net-init")
        net = TwoStreamNet.initialise(arch, rng, self.cfg.init_std, self.cfg.forget_bias,
                                      self.cfg.init_scheme).astype(self.dtype)
        result = train(net, freq.astype(self.dtype), seq.astype(self.dtype), np.asarray(labels),
                       replace(self.cfg, rng_seed=self.seed))
        self.net, self.losses = result.net, result.losses
        return self

    def _classify(self, data):
        freq, seq = self.scaler.apply(*self.inputs(data))
        return self.net.predict(freq, seq)

    def predict_proba(self, data):
        return self._classify(data)[1]

    def predict(self, data):
        return self._classify(data)[0]


def make_method(name, rate, n_samples, seed=0, train_cfg=TrainConfig()):
    name = method_name(name)
    if name == "CCA":
        return CcaMethod(rate, n_samples)
    if name == "LDA":
        return LdaMethod(rate)
    return ProposedMethod(rate, train_cfg, seed)
