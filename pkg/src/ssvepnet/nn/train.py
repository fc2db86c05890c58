"""Mini-batch SGD for the two-stream network."""
from dataclasses import dataclass
import logging

import numpy as np

from ..errors import DivergenceError
from ..rng import derive_rng
from ._alloc import tune_allocator

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 50
    batch_size: int = 32
    init_std: float = 0.05
    init_scheme: str = "fan-in"
    forget_bias: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.init_std > 0:
            raise ValueError("init_std must be positive")
        if self.init_scheme not in ("fixed", "fan-in"):
            raise ValueError("init_scheme must be 'fixed' or 'fan-in'")


@dataclass
class TrainResult:
    net: object
    losses: list


def train(net, freq_in, time_in, labels, cfg=TrainConfig()):
    """Plain SGD (no momentum, no decay), reshuffled every epoch.

    ``net`` is updated in place and returned together with the per-epoch mean
    training loss.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if n == 0:
        raise ValueError("training set is empty")
    if np.any((labels < 0) | (labels > 2)):
        raise ValueError("labels must be in {0, 1, 2}")
    tune_allocator()
    rng = derive_rng(cfg.rng_seed, "train-shuffle")
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            loss, grads = net.loss_and_grads(freq_in[idx], time_in[idx], labels[idx])
            if not np.isfinite(loss):
                raise DivergenceError(epoch, bi, loss)
            net.sgd_step(grads, cfg.learning_rate)
            total += loss * len(idx)
        losses.append(total / n)
        log.debug("epoch %d loss %.4f", epoch + 1, losses[-1])
    return TrainResult(net, losses)
