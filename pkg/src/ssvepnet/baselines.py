"""Training-free CCA frequency recognition and a shrinkage LDA classifier."""
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeError
from .spectral import rfft

STIMULUS_HZ = (60 / 11, 60 / 7, 60 / 5)
CCA_HARMONICS = 2
RIDGE_EPS = 1e-8
LDA_FALLBACK_GAMMA = 0.1


# ---------------------------------------------------------------- CCA

@dataclass(frozen=True)
class ReferenceBank:
    freqs: tuple
    n_harmonics: int
    rate: float
    refs: tuple  # one (2 * n_harmonics, T) array per stimulus

    @property
    def n_samples(self):
        return self.refs[0].shape[1]


def build_references(freqs=STIMULUS_HZ, n_harmonics=CCA_HARMONICS, n_samples=350, rate=100.0):
    """Sine/cosine rows at ``h * f`` for ``h = 1..n_harmonics``, per stimulus."""
    if n_samples < 2:
        raise ValueError("references need at least 2 samples")
    if n_harmonics < 1:
        raise ValueError("n_harmonics must be >= 1")
    t = np.arange(n_samples) / rate
    refs = []
    for f in freqs:
        if not f > 0:
            raise ValueError(f"stimulus frequency must be positive, got {f}")
        if n_harmonics * f >= rate / 2:
            raise ValueError(f"harmonic {n_harmonics} of {f:.4g} Hz is at or above Nyquist ({rate / 2} Hz)")
        rows = []
        for h in range(1, n_harmonics + 1):
            rows += [np.sin(2 * np.pi * h * f * t), np.cos(2 * np.pi * h * f * t)]
        refs.append(np.array(rows))
    return ReferenceBank(tuple(float(f) for f in freqs), n_harmonics, float(rate), tuple(refs))


@dataclass(frozen=True)
class CcaResult:
    rho: float
    regularized: bool


def _orthonormal_rows(A):
    """Orthonormal basis of the row space of centered ``A`` as columns of a ``(T, r)`` matrix.

    Returns ``None`` when the centered rows are rank deficient.
    """
    q, r = np.linalg.qr(A.T)
    d = np.abs(np.diag(r))
    if d.size == 0 or d.min() <= 1e-10 * max(d.max(), np.finfo(float).tiny):
        return None
    return q


def _inv_sqrt(S):
    w, v = np.linalg.eigh(S)
    return (v / np.sqrt(w)) @ v.T


def _ridge_cca(X, Y):
    Sxx, Syy, Sxy = X @ X.T, Y @ Y.T, X @ Y.T
    # ridge is scaled by the mean diagonal so the result stays scale-free
    Sxx = Sxx + RIDGE_EPS * max(np.trace(Sxx) / len(Sxx), np.finfo(float).tiny) * np.eye(len(Sxx))
    Syy = Syy + RIDGE_EPS * max(np.trace(Syy) / len(Syy), np.finfo(float).tiny) * np.eye(len(Syy))
    return np.linalg.svd(_inv_sqrt(Sxx) @ Sxy @ _inv_sqrt(Syy), compute_uv=False)[0]


def canonical_correlation(X, Y):
    """Largest canonical correlation between the row spaces of ``X`` (C, T) and ``Y`` (R, T)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
        raise ShapeError(f"X and Y must be 2-D with equal sample counts, got {X.shape} and {Y.shape}")
    T = X.shape[1]
    if T <= X.shape[0] + Y.shape[0]:
        raise ValueError(f"need more samples ({T}) than rows of X plus Y ({X.shape[0] + Y.shape[0]})")
    X = X - X.mean(axis=1, keepdims=True)
    Y = Y - Y.mean(axis=1, keepdims=True)
    qx, qy = _orthonormal_rows(X), _orthonormal_rows(Y)
    if qx is None or qy is None:
        rho, flag = _ridge_cca(X, Y), True
    else:
        rho, flag = np.linalg.svd(qx.T @ qy, compute_uv=False)[0], False
    return CcaResult(float(min(max(rho, 0.0), 1.0)), flag)


def max_canonical_correlation(X, Y):
    return canonical_correlation(X, Y).rho


def cca_classify(data, bank):
    """Class with the highest canonical correlation against each reference set.

    ``data`` is a ``(C, T)`` epoch. Ties go to the lowest class index
    (``np.argmax`` order). Returns ``(class, rho vector)``.
    """
    data = getattr(data, "data", data)
    if data.shape[-1] != bank.n_samples:
        raise ValueError(f"epoch has {data.shape[-1]} samples but references have {bank.n_samples}")
    rhos = np.array([max_canonical_correlation(data, Y) for Y in bank.refs])
    return int(np.argmax(rhos)), rhos


# ---------------------------------------------------------------- LDA

def lda_features(data, rate, freqs=STIMULUS_HZ, half_width=0.5, harmonics=(1, 2)):
    """Mean spectral magnitude within ``f * h +- half_width`` Hz, per band per channel.

    ``data`` is ``(..., C, T)``; the result is ``(..., n_bands * C)`` ordered
    band-major (all channels of band 0 first).
    """
    data = np.asarray(data, dtype=float)
    n = data.shape[-1]
    mags = np.abs(rfft(data))
    bin_hz = np.arange(n // 2 + 1) * rate / n
    cols = []
    for f in freqs:
        for h in harmonics:
            sel = np.abs(bin_hz - h * f) <= half_width + 1e-9
            if not sel.any():
                raise ValueError(f"no DFT bin within {half_width} Hz of {h * f:.4g} Hz")
            cols.append(mags[..., sel].mean(axis=-1))
    return np.concatenate(cols, axis=-1)


@dataclass(frozen=True)
class LdaModel:
    means: np.ndarray  # (K, D) class means in standardized space
    covariance: np.ndarray  # shrunk pooled covariance
    weights: np.ndarray  # (D, K)
    biases: np.ndarray  # (K,)
    gamma: float
    feat_mean: np.ndarray
    feat_std: np.ndarray

    @property
    def n_features(self):
        return len(self.feat_mean)

    def scores(self, features):
        x = np.asarray(features, dtype=float)
        if x.shape[-1] != self.n_features:
            raise ShapeError(f"model expects {self.n_features} features, got {x.shape[-1]}")
        return ((x - self.feat_mean) / self.feat_std) @ self.weights + self.biases


def ledoit_wolf_gamma(Z):
    """Analytic shrinkage intensity towards a scaled identity for centered rows ``Z``."""
    n, d = Z.shape
    S = Z.T @ Z / n
    mu = np.trace(S) / d
    delta2 = np.sum((S - mu * np.eye(d)) ** 2)
    if not delta2 > 0:
        return LDA_FALLBACK_GAMMA
    # sum_i ||z_i z_i^T - S||_F^2 = sum_i ||z_i||^4 - n ||S||_F^2
    beta2 = (np.sum(np.sum(Z * Z, axis=1) ** 2) - n * np.sum(S * S)) / n ** 2
    gamma = min(beta2, delta2) / delta2
    return float(gamma) if np.isfinite(gamma) else LDA_FALLBACK_GAMMA


def lda_fit(features, labels, gamma=None, n_classes=3):
    """Shrinkage LDA on z-scored features.

    ``gamma=None`` picks the Ledoit-Wolf intensity (0.1 if it is undefined).
    The pooled covariance divides by N, so duplicating the training set leaves
    the model unchanged.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[1] < 1 or len(y) != len(X):
        raise ShapeError(f"features must be (N, D) with one label per row, got {X.shape} and {y.shape}")
    missing = [c for c in range(n_classes) if not np.any(y == c)]
    if missing:
        raise ValueError(f"classes {missing} are absent from the training labels")
    if len(X) < 3 * n_classes:
        raise ValueError(f"need at least {3 * n_classes} training rows, got {len(X)}")
    feat_mean = X.mean(axis=0)
    feat_std = X.std(axis=0)
    feat_std = np.where(feat_std > 0, feat_std, 1.0)
    Z = (X - feat_mean) / feat_std
    D = Z.shape[1]
    means = np.array([Z[y == c].mean(axis=0) for c in range(n_classes)])
    resid = Z - means[y]
    pooled = resid.T @ resid / len(Z)
    if gamma is None:
        gamma = ledoit_wolf_gamma(resid)
    if not 0 <= gamma <= 1:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    target = np.trace(pooled) / D
    cov = (1 - gamma) * pooled + gamma * target * np.eye(D)
    w = np.linalg.eigvalsh(cov)
    if w[0] <= 1e-12 * max(w[-1], np.finfo(float).tiny):
        raise NumericalError("pooled covariance is singular; use a shrinkage gamma > 0")
    prec_means = np.linalg.solve(cov, means.T)  # (D, K)
    priors = np.array([np.mean(y == c) for c in range(n_classes)])
    biases = -0.5 * np.sum(means.T * prec_means, axis=0) + np.log(priors)
    return LdaModel(means, cov, prec_means, biases, float(gamma), feat_mean, feat_std)


def lda_predict(model, features):
    """Class index (or array of indices for a 2-D input); ties go to the lowest index."""
    s = model.scores(features)
    return np.argmax(s, axis=-1) if s.ndim > 1 else int(np.argmax(s))
