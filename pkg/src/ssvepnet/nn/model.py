"""Two-stream network: spectral CNN branch plus LSTM time branch.

Frequency branch, input ``(N, C, B)`` band magnitudes:
    channel-wise conv (8 kernels of 1 x C) -> conv1d -> conv1d -> dense, ReLU after each.
Time branch, input ``(N, T_seq, C)``:
    three stacked LSTM layers, final hidden state of the top layer.
Head: concatenate both branch outputs, one dense layer to 3 logits.

Parameter count, with ``L1 = (B - k) // s + 1`` and ``L2 = (L1 - k) // s + 1``::

    K*C + K                         channel-wise conv (K = 8)
    M1*K*k + M1                     conv1d #1
    M2*M1*k + M2                    conv1d #2
    M2*L2*F + F                     dense (F units)
    4H*(C + H) + 4H                 LSTM layer 1
    (layers - 1) * (4H*2H + 4H)     LSTM layers 2..
    (F + H)*3 + 3                   head

It depends on (C, B, H) and the fixed layer geometry only, not on T_seq.
"""
from dataclasses import asdict, dataclass, field
import itertools

import numpy as np

from ..errors import InvalidStateError, ShapeError
from . import layers as L
from . import lstm


@dataclass(frozen=True)
class NetArch:
    n_channels: int
    n_bins: int
    n_steps: int
    n_kernels: int = 8
    conv_maps: tuple = (16, 16)
    kernel_len: int = 11
    stride: int = 2
    dense_units: int = 32
    hidden: int = 32
    lstm_layers: int = 3
    n_classes: int = 3

    def __post_init__(self):
        object.__setattr__(self, "conv_maps", tuple(int(m) for m in self.conv_maps))
        if self.conv_lengths[-1] < 1:
            raise ShapeError(f"{self.n_bins} bins are too few for kernel {self.kernel_len}, stride {self.stride}")

    @property
    def conv_lengths(self):
        l1 = L.conv_out_len(self.n_bins, self.kernel_len, self.stride)
        return l1, L.conv_out_len(l1, self.kernel_len, self.stride)

    def shapes(self):
        """Parameter names and shapes in the fixed serialisation order."""
        C, K, k, H = self.n_channels, self.n_kernels, self.kernel_len, self.hidden
        m1, m2 = self.conv_maps
        F = self.dense_units
        out = [
            ("conv0.W", (K, C)), ("conv0.b", (K,)),
            ("conv1.W", (m1, K, k)), ("conv1.b", (m1,)),
            ("conv2.W", (m2, m1, k)), ("conv2.b", (m2,)),
            ("fdense.W", (m2 * self.conv_lengths[1], F)), ("fdense.b", (F,)),
        ]
        for i in range(self.lstm_layers):
            d = C if i == 0 else H
            out += [(f"lstm{i}.W", (d, 4 * H)), (f"lstm{i}.U", (H, 4 * H)), (f"lstm{i}.b", (4 * H,))]
        out += [("head.W", (F + H, self.n_classes)), ("head.b", (self.n_classes,))]
        return out

    def n_params(self):
        C, K, k, H, F = self.n_channels, self.n_kernels, self.kernel_len, self.hidden, self.dense_units
        m1, m2 = self.conv_maps
        l2 = self.conv_lengths[1]
        return (K * C + K + m1 * K * k + m1 + m2 * m1 * k + m2 + m2 * l2 * F + F
                + 4 * H * (C + H) + 4 * H + (self.lstm_layers - 1) * (8 * H * H + 4 * H)
                + (F + H) * self.n_classes + self.n_classes)

    def to_dict(self):
        d = asdict(self)
        d["conv_maps"] = list(self.conv_maps)
        return d


_versions = itertools.count(1)


@dataclass
class TwoStreamNet:
    arch: NetArch
    params: dict
    version: int = field(default_factory=lambda: next(_versions))

    @classmethod
    def initialise(cls, arch, rng, std=0.05, forget_bias=1.0, scheme="fan-in"):
        """Normal initialisation.

        ``scheme="fixed"`` draws every tensor from ``normal(0, std)``.
        ``scheme="fan-in"`` keeps biases at ``normal(0, std)`` but scales weight
        matrices by their fan-in: ``sqrt(2 / fan_in)`` in front of a ReLU and
        ``sqrt(1 / fan_in)`` for the LSTM and the linear head.
        """
        if scheme not in ("fixed", "fan-in"):
            raise ValueError(f"unknown init scheme {scheme!r}")
        params = {}
        for name, shape in arch.shapes():
            sd = std
            if scheme == "fan-in" and not name.endswith(".b"):
                fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
                gain = 2.0 if name.startswith(("conv", "fdense")) else 1.0
                sd = np.sqrt(gain / fan_in)
            params[name] = rng.normal(0.0, sd, size=shape)
        H = arch.hidden
        for i in range(arch.lstm_layers):
            params[f"lstm{i}.b"][H:2 * H] = forget_bias
        return cls(arch, params)

    @classmethod
    def zeros(cls, arch):
        return cls(arch, {name: np.zeros(shape) for name, shape in arch.shapes()})

    @property
    def dtype(self):
        return self.params["head.W"].dtype

    def astype(self, dtype):
        return TwoStreamNet(self.arch, {k: v.astype(dtype) for k, v in self.params.items()})

    def copy(self):
        return TwoStreamNet(self.arch, {k: v.copy() for k, v in self.params.items()})

    def touch(self):
        """Mark parameters as changed; outstanding caches become stale."""
        self.version = next(_versions)

    def _lstm_layers(self):
        p = self.params
        return [(p[f"lstm{i}.W"], p[f"lstm{i}.U"], p[f"lstm{i}.b"]) for i in range(self.arch.lstm_layers)]

    def forward(self, freq_in, time_in):
        """Logits for a batch: ``freq_in`` is ``(N, C, B)``, ``time_in`` is ``(N, T_seq, C)``."""
        a, p = self.arch, self.params
        xf = np.asarray(freq_in, dtype=self.dtype)
        xt = np.asarray(time_in, dtype=self.dtype)
        if xf.ndim != 3 or xf.shape[1:] != (a.n_channels, a.n_bins):
            raise ShapeError(f"frequency input must be (N, {a.n_channels}, {a.n_bins}), got {xf.shape}")
        if xt.ndim != 3 or xt.shape[2] != a.n_channels or xt.shape[0] != xf.shape[0]:
            raise ShapeError(f"time input must be (N, T_seq, {a.n_channels}), got {xt.shape}")
        h0, c0 = L.channelwise_forward(xf, p["conv0.W"], p["conv0.b"])
        h1, c1 = L.conv1d_forward(h0, p["conv1.W"], p["conv1.b"], a.stride)
        h2, c2 = L.conv1d_forward(h1, p["conv2.W"], p["conv2.b"], a.stride)
        flat = h2.reshape(len(h2), -1)
        hf, c3 = L.dense_forward(flat, p["fdense.W"], p["fdense.b"])
        layers = self._lstm_layers()
        ht, clstm = lstm.stack_forward(np.ascontiguousarray(xt.transpose(1, 0, 2)), layers)
        fused = np.concatenate([hf, ht], axis=1)
        logits, chead = L.dense_forward(fused, p["head.W"], p["head.b"], activation=False)
        cache = {"version": self.version, "net": id(self), "conv0": c0, "conv1": c1, "conv2": c2,
                 "h2_shape": h2.shape, "fdense": c3, "lstm": clstm, "head": chead}
        return logits, cache

    def backward(self, cache, dlogits):
        if cache.get("net") != id(self) or cache.get("version") != self.version:
            raise InvalidStateError("cache does not belong to the current parameters of this network")
        p, a = self.params, self.arch
        g = {}
        dfused, g["head.W"], g["head.b"] = L.dense_backward(np.asarray(dlogits, dtype=self.dtype), cache["head"],
                                                            p["head.W"])
        dhf, dht = dfused[:, :a.dense_units], dfused[:, a.dense_units:]
        dflat, g["fdense.W"], g["fdense.b"] = L.dense_backward(dhf, cache["fdense"], p["fdense.W"])
        dh2 = dflat.reshape(cache["h2_shape"])
        dh1, g["conv2.W"], g["conv2.b"] = L.conv1d_backward(dh2, cache["conv2"], p["conv2.W"])
        dh0, g["conv1.W"], g["conv1.b"] = L.conv1d_backward(dh1, cache["conv1"], p["conv1.W"])
        _, g["conv0.W"], g["conv0.b"] = L.channelwise_backward(dh0, cache["conv0"], p["conv0.W"])
        _, lgrads = lstm.stack_backward(dht, cache["lstm"], self._lstm_layers(), need_input_grad=False)
        for i, (dW, dU, db) in enumerate(lgrads):
            g[f"lstm{i}.W"], g[f"lstm{i}.U"], g[f"lstm{i}.b"] = dW, dU, db
        return {name: g[name] for name, _ in a.shapes()}

    def loss_and_grads(self, freq_in, time_in, labels):
        logits, cache = self.forward(freq_in, time_in)
        loss, dlogits = L.softmax_cross_entropy(logits, labels)
        return loss, self.backward(cache, dlogits)

    def predict(self, freq_in, time_in):
        """Class indices and softmax probabilities for a batch."""
        logits, _ = self.forward(freq_in, time_in)
        probs = L.softmax(logits)
        return np.argmax(probs, axis=1), probs

    def sgd_step(self, grads, lr):
        for name, gval in grads.items():
            self.params[name] -= lr * gval
        self.touch()
