"""Epoch collections and their on-disk form.

A dataset directory holds ``manifest.json`` and ``epochs.bin``. The binary
file is every trial's ``channels x T`` matrix as little-endian float32,
row-major (channel-major), concatenated in manifest order. Each manifest
trial entry carries its byte offset into ``epochs.bin``.
"""
from dataclasses import dataclass, field
import json
import os

import numpy as np

from .signal import Condition, Epoch, Montage

MANIFEST = "manifest.json"
EPOCHS = "epochs.bin"
FORMAT_VERSION = 1


@dataclass
class EpochSet:
    """A stack of equally shaped epochs from one montage."""

    montage: Montage
    rate: float
    data: np.ndarray  # (n_trials, channels, T)
    labels: np.ndarray
    subject_ids: np.ndarray
    conditions: np.ndarray  # Condition values as str
    extra: list = field(default_factory=list)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        self.subject_ids = np.asarray(self.subject_ids, dtype=int)
        self.conditions = np.asarray([Condition(c).value for c in self.conditions], dtype=object)
        n = len(self.labels)
        if self.data.ndim != 3 or self.data.shape[0] != n or self.data.shape[1] != self.montage.n_channels:
            raise ValueError(f"data shape {self.data.shape} inconsistent with {n} trials "
                             f"of {self.montage.n_channels} channels")
        if len(self.subject_ids) != n or len(self.conditions) != n:
            raise ValueError("metadata arrays must have one entry per trial")
        if not self.extra:
            self.extra = [{} for _ in range(n)]

    def __len__(self):
        return len(self.labels)

    @property
    def n_samples(self):
        return self.data.shape[2]

    def epoch(self, i):
        return Epoch(self.montage, self.rate, self.data[i], int(self.labels[i]),
                     Condition(self.conditions[i]), int(self.subject_ids[i]))

    def select(self, mask):
        idx = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask, dtype=int)
        return EpochSet(self.montage, self.rate, self.data[idx], self.labels[idx],
                        self.subject_ids[idx], self.conditions[idx], [self.extra[i] for i in idx])

    def slice(self, subject_id=None, condition=None):
        mask = np.ones(len(self), dtype=bool)
        if subject_id is not None:
            mask &= self.subject_ids == int(subject_id)
        if condition is not None:
            mask &= self.conditions == Condition(condition).value
        return self.select(mask)

    @classmethod
    def from_epochs(cls, epochs):
        if not epochs:
            raise ValueError("need at least one epoch")
        first = epochs[0]
        return cls(first.montage, first.rate, np.stack([e.data for e in epochs]),
                   [e.label for e in epochs], [e.subject_id for e in epochs],
                   [e.condition for e in epochs])


def write_epoch_set(directory, epochs, n_classes=3, extra_manifest=None):
    """Write ``manifest.json`` and ``epochs.bin`` for one montage."""
    os.makedirs(directory, exist_ok=True)
    block = epochs.montage.n_channels * epochs.n_samples * 4
    trials = []
    for i in range(len(epochs)):
        entry = {
            "subject_id": int(epochs.subject_ids[i]),
            "condition": str(epochs.conditions[i]),
            "label": int(epochs.labels[i]),
            "offset": i * block,
        }
        entry.update(epochs.extra[i])
        trials.append(entry)
    manifest = {
        "format_version": FORMAT_VERSION,
        "montage": epochs.montage.name.value,
        "channels": list(epochs.montage.channels),
        "rate": float(epochs.rate),
        "T": int(epochs.n_samples),
        "n_classes": int(n_classes),
        "dtype": "<f4",
        "trials": trials,
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    with open(os.path.join(directory, EPOCHS), "wb") as fh:
        fh.write(np.ascontiguousarray(epochs.data, dtype="<f4").tobytes())
    with open(os.path.join(directory, MANIFEST), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def read_epoch_set(directory):
    with open(os.path.join(directory, MANIFEST)) as fh:
        manifest = json.load(fh)
    montage = Montage.by_name(manifest["montage"])
    c, t = montage.n_channels, int(manifest["T"])
    raw = np.fromfile(os.path.join(directory, EPOCHS), dtype="<f4")
    trials = manifest["trials"]
    block = c * t
    data = np.empty((len(trials), c, t))
    for i, tr in enumerate(trials):
        start = int(tr["offset"]) // 4
        if start + block > raw.size:
            raise ValueError(f"trial {i} offset {tr['offset']} runs past the end of {EPOCHS}")
        data[i] = raw[start:start + block].reshape(c, t)
    core = {"subject_id", "condition", "label", "offset"}
    extra = [{k: v for k, v in tr.items() if k not in core} for tr in trials]
    es = EpochSet(montage, float(manifest["rate"]), data, [tr["label"] for tr in trials],
                  [tr["subject_id"] for tr in trials], [tr["condition"] for tr in trials], extra)
    return es, manifest
