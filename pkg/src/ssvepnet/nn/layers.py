"""Feed-forward layers of the frequency branch and the classifier head.

All functions act on a batch axis first. Backward functions take the
upstream gradient and the forward cache and return input and parameter
gradients.
"""
import numpy as np

from ..errors import ShapeError


def relu(x):
    return np.maximum(x, 0.0)


def conv_out_len(in_len, kernel_len, stride):
    return (in_len - kernel_len) // stride + 1


def channelwise_forward(x, W, b):
    """Kernels spanning the whole channel axis at one frequency bin.

    ``x`` is ``(N, C, B)``, ``W`` is ``(K, C)``; the result is ``(N, K, B)``
    with ``relu(b_k + sum_c x[c, j] * W[k, c])`` at bin ``j``.
    """
    if x.ndim != 3 or x.shape[1] != W.shape[1]:
        raise ShapeError(f"channelwise conv expects (N, {W.shape[1]}, B) input, got {x.shape}")
    z = np.matmul(W, x) + b[None, :, None]
    return relu(z), (x, z)


def channelwise_backward(da, cache, W):
    x, z = cache
    dz = da * (z > 0)
    K, C = W.shape
    dW = dz.transpose(1, 0, 2).reshape(K, -1) @ x.transpose(1, 0, 2).reshape(C, -1).T
    db = dz.sum(axis=(0, 2))
    dx = np.matmul(W.T, dz)
    return dx, dW, db


def _patch_index(in_len, kernel_len, stride):
    out_len = conv_out_len(in_len, kernel_len, stride)
    if out_len < 1:
        raise ShapeError(f"conv1d kernel {kernel_len} does not fit input length {in_len}")
    return stride * np.arange(out_len)[:, None] + np.arange(kernel_len)[None, :]


def conv1d_forward(x, W, b, stride):
    """Valid 1-D convolution along the bin axis, ``(N, I, L) -> (N, O, L')``, then ReLU."""
    if x.ndim != 3 or x.shape[1] != W.shape[1]:
        raise ShapeError(f"conv1d expects (N, {W.shape[1]}, L) input, got {x.shape}")
    idx = _patch_index(x.shape[2], W.shape[2], stride)
    n, i, _ = x.shape
    o, _, k = W.shape
    # rows are (sample, output position), columns (input map, tap)
    patches = x[:, :, idx].transpose(0, 2, 1, 3).reshape(n * len(idx), i * k)
    z = (patches @ W.reshape(o, i * k).T + b).reshape(n, len(idx), o).transpose(0, 2, 1)
    return relu(z), (x.shape, patches, z, idx)


def conv1d_backward(da, cache, W):
    x_shape, patches, z, idx = cache
    dz = da * (z > 0)
    n, i, _ = x_shape
    o, _, k = W.shape
    dz_rows = dz.transpose(0, 2, 1).reshape(-1, o)
    dW = (dz_rows.T @ patches).reshape(o, i, k)
    db = dz.sum(axis=(0, 2))
    dpatch = (dz_rows @ W.reshape(o, i * k)).reshape(n, len(idx), i, k).transpose(0, 2, 3, 1)
    dx = np.zeros(x_shape, dtype=patches.dtype)
    stride = idx[1, 0] - idx[0, 0] if len(idx) > 1 else 1
    stop = stride * (len(idx) - 1) + 1
    for j in range(k):
        # tap j touched input positions j, j + stride, ...
        dx[:, :, j:j + stop:stride] += dpatch[:, :, j]
    return dx, dW, db


def dense_forward(x, W, b, activation=True):
    if x.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ShapeError(f"dense layer expects (N, {W.shape[0]}) input, got {x.shape}")
    z = x @ W + b
    return (relu(z) if activation else z), (x, z, activation)


def dense_backward(da, cache, W):
    x, z, activation = cache
    dz = da * (z > 0) if activation else da
    return dz @ W.T, x.T @ dz, dz.sum(axis=0)


def softmax(logits):
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean ``-log p[label]`` over the batch and its gradient w.r.t. the logits.

    Accepts a single logit vector with an int label, or a batch.
    """
    logits = np.asarray(logits, dtype=float)
    single = logits.ndim == 1
    z = logits[None] if single else logits
    y = np.atleast_1d(np.asarray(labels))
    if y.shape[0] != z.shape[0]:
        raise ShapeError("one label per logit row is required")
    if np.any((y < 0) | (y >= z.shape[1])) or not np.all(y == np.round(y)):
        raise ValueError(f"labels must be integers in [0, {z.shape[1]})")
    y = y.astype(int)
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted[np.arange(len(y)), y] - log_norm
    p = np.exp(shifted - log_norm[:, None])
    grad = p.copy()
    grad[np.arange(len(y)), y] -= 1.0
    grad /= len(y)
    loss = -log_p.mean()
    return (loss, grad[0]) if single else (loss, grad)
