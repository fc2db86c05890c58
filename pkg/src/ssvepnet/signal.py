"""Montages, recordings, epochs and the offline preprocessing chain.

The working pipeline is resample -> zero-phase FIR high-pass -> epoch. Every
function here is pure; arrays passed in are never modified.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

SCALP32_LABELS = (
    "Fp1", "Fp2", "AFz", "F7", "F3", "Fz", "F4", "F8",
    "FC5", "FC1", "FC2", "FC6", "C3", "Cz", "C4",
    "CP5", "CP1", "CP2", "CP6", "P7", "P3", "Pz", "P4", "P8",
    "PO7", "PO3", "POz", "PO4", "PO8", "O1", "Oz", "O2",
)
EAR18_LABELS = tuple(f"L{i}" for i in range(1, 11)) + tuple(f"R{i}" for i in range(1, 9))

WORKING_RATE = 100.0
EPOCH_SECONDS = 3.5
HIGHPASS_HZ = 3.0
HIGHPASS_TAPS = 101


class Condition(str, Enum):
    STANDING = "Standing"
    WALK08 = "Walk08"
    WALK16 = "Walk16"

    @property
    def speed_label(self):
        return {"Standing": "Standing", "Walk08": "0.8m/s", "Walk16": "1.6m/s"}[self.value]


CONDITIONS = (Condition.STANDING, Condition.WALK08, Condition.WALK16)


class MontageName(str, Enum):
    SCALP32 = "Scalp32"
    EAR18 = "Ear18"


_CANONICAL = {MontageName.SCALP32: SCALP32_LABELS, MontageName.EAR18: EAR18_LABELS}


@dataclass(frozen=True)
class Montage:
    """Ordered channel labels of one of the two recording montages.

    Only the two canonical layouts can be constructed; anything else raises.
    """

    name: MontageName
    channels: tuple = None

    def __post_init__(self):
        name = MontageName(self.name)
        object.__setattr__(self, "name", name)
        canonical = _CANONICAL[name]
        if self.channels is None:
            object.__setattr__(self, "channels", canonical)
        elif tuple(self.channels) != canonical:
            raise ValueError(f"{name.value} montage must list exactly {len(canonical)} canonical labels")
        else:
            object.__setattr__(self, "channels", tuple(self.channels))

    @classmethod
    def scalp32(cls):
        return cls(MontageName.SCALP32)

    @classmethod
    def ear18(cls):
        return cls(MontageName.EAR18)

    @classmethod
    def by_name(cls, name):
        key = {"scalp": "Scalp32", "ear": "Ear18"}.get(str(name).lower(), name)
        return cls(MontageName(key))

    @property
    def n_channels(self):
        return len(self.channels)

    @property
    def short(self):
        return "scalp" if self.name is MontageName.SCALP32 else "ear"

    def index(self, label):
        return self.channels.index(label)


def _check_matrix(data, montage, what):
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] != montage.n_channels:
        raise ValueError(f"{what} must be {montage.n_channels} x samples, got shape {data.shape}")
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{what} contains non-finite samples")
    return data


@dataclass(frozen=True)
class ContinuousRecording:
    montage: Montage
    rate: float
    data: np.ndarray
    condition: Condition = Condition.STANDING
    subject_id: int = 1

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if int(self.subject_id) < 1:
            raise ValueError("subject_id must be >= 1")
        object.__setattr__(self, "data", _check_matrix(self.data, self.montage, "recording data"))
        object.__setattr__(self, "condition", Condition(self.condition))

    @property
    def n_samples(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class Epoch:
    montage: Montage
    rate: float
    data: np.ndarray
    label: int
    condition: Condition = Condition.STANDING
    subject_id: int = 1

    def __post_init__(self):
        if int(self.label) not in (0, 1, 2):
            raise ValueError(f"label must be 0, 1 or 2, got {self.label}")
        object.__setattr__(self, "data", _check_matrix(self.data, self.montage, "epoch data"))
        object.__setattr__(self, "condition", Condition(self.condition))

    @property
    def n_samples(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class FirFilter:
    taps: np.ndarray
    cutoff_hz: float
    rate: float

    @property
    def num_taps(self):
        return len(self.taps)

    def response(self, freqs_hz):
        """Complex frequency response by direct evaluation of the tap sum."""
        k = np.arange(self.num_taps)
        f = np.atleast_1d(np.asarray(freqs_hz, dtype=float))
        return np.exp(-2j * np.pi * np.outer(f, k) / self.rate) @ self.taps


def _odd_reflect(x, n):
    # continues the local trend instead of mirroring it; acts on the last axis
    left = 2 * x[..., :1] - x[..., n:0:-1]
    right = 2 * x[..., -1:] - x[..., -2:-n - 2:-1]
    return np.concatenate([left, x, right], axis=-1)


def _kaiser(u, beta):
    inside = np.abs(u) < 1
    arg = np.sqrt(np.clip(1.0 - u * u, 0.0, None))
    return np.where(inside, np.i0(beta * arg) / np.i0(beta), 0.0)


def resample(signal, from_rate, to_rate, half_width=32, beta=8.0):
    """Resample along the last axis with a Kaiser-windowed sinc kernel.

    The kernel has ``2 * half_width`` taps at the lower of the two rates and
    its cutoff sits at the lower Nyquist frequency. Weights are normalised per
    output sample so DC passes unchanged. Edges are odd-reflected.
    """
    if not (from_rate > 0 and to_rate > 0):
        raise ValueError("sampling rates must be positive")
    x = np.asarray(signal, dtype=float)
    if x.ndim < 1 or x.shape[-1] < 2:
        raise ValueError("resample needs a signal with at least 2 samples")
    if from_rate == to_rate:
        return x.copy()
    n_in = x.shape[-1]
    n_out = int(round(n_in * to_rate / from_rate))
    scale = min(1.0, to_rate / from_rate)
    hw = int(np.ceil(half_width / scale))
    pos = np.arange(n_out) * (from_rate / to_rate)
    k = np.floor(pos).astype(int)[:, None] + np.arange(-hw + 1, hw + 1)[None, :]
    tau = pos[:, None] - k
    w = scale * np.sinc(scale * tau) * _kaiser(tau / hw, beta)
    w /= w.sum(axis=1, keepdims=True)
    pad = min(hw + 1, n_in - 1)
    xp = _odd_reflect(x, pad)
    idx = np.clip(k + pad, 0, xp.shape[-1] - 1)
    return np.einsum("...ij,ij->...i", xp[..., idx], w)


def design_highpass(cutoff_hz=HIGHPASS_HZ, rate=WORKING_RATE, num_taps=HIGHPASS_TAPS):
    """Hamming-windowed sinc low-pass turned into a high-pass by spectral inversion."""
    if not rate > 0:
        raise ValueError("rate must be positive")
    if not 0 < cutoff_hz < rate / 2:
        raise ValueError(f"cutoff {cutoff_hz} Hz must lie strictly between 0 and Nyquist ({rate / 2} Hz)")
    if num_taps < 3 or num_taps % 2 == 0:
        raise ValueError("num_taps must be odd and >= 3")
    m = np.arange(num_taps) - (num_taps - 1) / 2
    lowpass = 2 * cutoff_hz / rate * np.sinc(2 * cutoff_hz / rate * m) * np.hamming(num_taps)
    lowpass /= lowpass.sum()
    taps = -lowpass
    taps[(num_taps - 1) // 2] += 1.0
    # exact symmetry, independent of rounding in the window
    taps = 0.5 * (taps + taps[::-1])
    fir = FirFilter(taps=taps, cutoff_hz=float(cutoff_hz), rate=float(rate))
    # window ripple overshoots unity by a few 1e-4 in the passband; scale it back to a peak gain of 1
    peak = np.abs(fir.response(np.linspace(cutoff_hz, rate / 2, 16385))).max()
    if peak > 1.0:
        fir = FirFilter(taps=taps / peak, cutoff_hz=float(cutoff_hz), rate=float(rate))
    return fir


def filter_zero_phase(fir, signal):
    """Forward-backward FIR filtering with odd-reflect padding of ``num_taps`` samples."""
    x = np.asarray(signal, dtype=float)
    n = fir.num_taps
    if x.ndim != 1 or x.size <= 3 * n:
        raise ValueError(f"signal must be longer than 3 * num_taps = {3 * n} samples")
    xp = _odd_reflect(x, n)
    y = np.convolve(xp, fir.taps, mode="same")
    y = np.convolve(y[::-1], fir.taps, mode="same")[::-1]
    return y[n:-n]


def filter_rows(fir, data):
    """``filter_zero_phase`` applied along the last axis of an array of any shape."""
    x = np.asarray(data, dtype=float)
    n = fir.num_taps
    if x.shape[-1] <= 3 * n:
        raise ValueError(f"signal must be longer than 3 * num_taps = {3 * n} samples")
    lead = x.shape[:-1]
    rows = x.reshape(-1, x.shape[-1])
    left = 2 * rows[:, :1] - rows[:, n:0:-1]
    right = 2 * rows[:, -1:] - rows[:, -2:-n - 2:-1]
    xp = np.concatenate([left, rows, right], axis=1)
    half = (n - 1) // 2
    taps = fir.taps[::-1]
    for _ in range(2):
        # 'same' convolution of a symmetric filter, i.e. zero delay
        padded = np.pad(xp, ((0, 0), (half, half)))
        xp = np.lib.stride_tricks.sliding_window_view(padded, n, axis=1) @ taps
        xp = xp[:, ::-1]
    return xp[:, n:-n].reshape(*lead, -1)


def preprocess(rec, to_rate=WORKING_RATE, fir=None):
    """Resample every channel to the working rate, then high-pass it."""
    rows = [resample(row, rec.rate, to_rate) for row in rec.data]
    fir = fir or design_highpass(HIGHPASS_HZ, to_rate, HIGHPASS_TAPS)
    data = filter_rows(fir, np.stack(rows))
    return ContinuousRecording(rec.montage, float(to_rate), data, rec.condition, rec.subject_id)


def extract_epochs(rec, onsets, window_s, labels):
    n = int(round(window_s * rec.rate))
    if len(onsets) != len(labels):
        raise ValueError(f"{len(onsets)} onsets but {len(labels)} labels")
    epochs = []
    for i, (onset, label) in enumerate(zip(onsets, labels)):
        onset = int(onset)
        if onset < 0 or onset + n > rec.n_samples:
            raise ValueError(
                f"onset #{i} ({onset}) + window ({n} samples) exceeds recording length {rec.n_samples}")
        epochs.append(Epoch(rec.montage, rec.rate, rec.data[:, onset:onset + n].copy(), int(label),
                            rec.condition, rec.subject_id))
    return epochs
