"""Finite-difference verification of every hand-written gradient.

Each layer type is checked in isolation through the scalar probe
``sum(output * R)`` with a fixed random ``R``, and then the composed network
is checked through its cross-entropy loss. All checks run in float64 with
central differences.

The error of one entry is ``|a - n| / max(|a| + |n|, ATOL)``; ``ATOL`` keeps
entries whose true gradient is zero from turning rounding noise into a large
ratio.
"""
from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from . import lstm
from .model import NetArch, TwoStreamNet

EPS = 1e-5
TOL = 1e-4
ATOL = 1e-7
TINY_ARCH = dict(n_channels=2, n_bins=8, n_steps=10, n_kernels=8, conv_maps=(4, 4),
                 kernel_len=3, stride=2, dense_units=4, hidden=3)


def rel_error(analytic, numeric):
    a, n = np.asarray(analytic, float), np.asarray(numeric, float)
    return float(np.max(np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), ATOL))) if a.size else 0.0


def numeric_grad(f, x, eps=EPS):
    """Central differences of scalar ``f()`` with respect to array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        orig = x[i]
        x[i] = orig + eps
        fp = f()
        x[i] = orig - eps
        fm = f()
        x[i] = orig
        g[i] = (fp - fm) / (2 * eps)
    return g


@dataclass
class GradcheckReport:
    errors: dict = field(default_factory=dict)  # path -> worst error over seeds

    def add(self, path, err):
        self.errors[path] = max(err, self.errors.get(path, 0.0))

    def failures(self, tol=TOL):
        return [p for p, e in self.errors.items() if not e < tol]

    @property
    def passed(self):
        return not self.failures()


def _probe(rng, shape):
    return rng.normal(size=shape)


def _check(report, prefix, f, analytic, tensors, corrupt):
    for name, arr in tensors.items():
        path = f"{prefix}.{name}"
        a = analytic[name]
        if corrupt == path:
            a = a * 1.01 + 1e-3
        report.add(path, rel_error(a, numeric_grad(f, arr)))


def check_channelwise(report, rng, corrupt=None):
    x = rng.normal(size=(3, 4, 6))
    W, b = rng.normal(size=(8, 4)), rng.normal(size=8)
    R = _probe(rng, (3, 8, 6))
    f = lambda: np.sum(L.channelwise_forward(x, W, b)[0] * R)
    _, cache = L.channelwise_forward(x, W, b)
    dx, dW, db = L.channelwise_backward(R, cache, W)
    _check(report, "channelwise", f, {"x": dx, "W": dW, "b": db}, {"x": x, "W": W, "b": b}, corrupt)


def check_conv1d(report, rng, corrupt=None):
    x = rng.normal(size=(2, 3, 13))
    W, b = rng.normal(size=(4, 3, 5)), rng.normal(size=4)
    _, cache = L.conv1d_forward(x, W, b, 2)
    R = _probe(rng, (2, 4, L.conv_out_len(13, 5, 2)))
    f = lambda: np.sum(L.conv1d_forward(x, W, b, 2)[0] * R)
    dx, dW, db = L.conv1d_backward(R, cache, W)
    _check(report, "conv1d", f, {"x": dx, "W": dW, "b": db}, {"x": x, "W": W, "b": b}, corrupt)


def check_dense(report, rng, corrupt=None):
    for act, tag in ((True, "dense_relu"), (False, "dense_linear")):
        x = rng.normal(size=(3, 5))
        W, b = rng.normal(size=(5, 4)), rng.normal(size=4)
        R = _probe(rng, (3, 4))
        f = lambda: np.sum(L.dense_forward(x, W, b, act)[0] * R)
        _, cache = L.dense_forward(x, W, b, act)
        dx, dW, db = L.dense_backward(R, cache, W)
        _check(report, tag, f, {"x": dx, "W": dW, "b": db}, {"x": x, "W": W, "b": b}, corrupt)


def check_lstm(report, rng, corrupt=None):
    T, N, D, H = 6, 2, 3, 4
    x = rng.normal(size=(T, N, D))
    layer_params = []
    for i in range(3):
        d = D if i == 0 else H
        layer_params.append((rng.normal(0, 0.5, size=(d, 4 * H)), rng.normal(0, 0.5, size=(H, 4 * H)),
                             rng.normal(0, 0.5, size=4 * H)))
    R = _probe(rng, (N, H))
    f = lambda: np.sum(lstm.stack_forward(x, layer_params)[0] * R)
    h, caches = lstm.stack_forward(x, layer_params)
    dx, grads = lstm.stack_backward(R, caches, layer_params)
    analytic, tensors = {"x": dx}, {"x": x}
    for i, ((W, U, b), (dW, dU, db)) in enumerate(zip(layer_params, grads)):
        analytic.update({f"{i}.W": dW, f"{i}.U": dU, f"{i}.b": db})
        tensors.update({f"{i}.W": W, f"{i}.U": U, f"{i}.b": b})
    _check(report, "lstm", f, analytic, tensors, corrupt)


def check_softmax_ce(report, rng, corrupt=None):
    z = rng.normal(size=(4, 3)) * 2
    y = rng.integers(0, 3, size=4)
    f = lambda: L.softmax_cross_entropy(z, y)[0]
    _, g = L.softmax_cross_entropy(z, y)
    _check(report, "softmax_ce", f, {"logits": g}, {"logits": z}, corrupt)


def check_network(report, rng, corrupt=None):
    arch = NetArch(**TINY_ARCH)
    net = TwoStreamNet.initialise(arch, rng, std=0.5, scheme="fixed")
    xf = rng.normal(size=(3, arch.n_channels, arch.n_bins))
    xt = rng.normal(size=(3, arch.n_steps, arch.n_channels))
    y = rng.integers(0, 3, size=3)
    _, grads = net.loss_and_grads(xf, xt, y)
    f = lambda: L.softmax_cross_entropy(net.forward(xf, xt)[0], y)[0]
    _check(report, "net", f, grads, net.params, corrupt)


CHECKS = (check_channelwise, check_conv1d, check_dense, check_lstm, check_softmax_ce, check_network)


def run_gradcheck(seeds=range(10), corrupt=None):
    """Run every check for each seed; ``corrupt`` names a path whose analytic gradient is falsified."""
    report = GradcheckReport()
    for seed in seeds:
        rng = np.random.default_rng(seed)
        for check in CHECKS:
            check(report, rng, corrupt)
    if corrupt is not None and corrupt not in report.errors:
        raise ValueError(f"unknown gradient path {corrupt!r}")
    return report
