"""Binary model container shared by the network and LDA.

Layout, all integers little-endian::

    8 bytes   magic b"SSVEPMDL"
    u32       format version
    u16 + n   architecture tag (utf-8), e.g. "two-stream-net" or "lda"
    u32 + n   JSON descriptor (utf-8, sorted keys); its "tensors" entry lists
              [name, shape] in storage order
    ...       every tensor as float64 little-endian, row-major, in that order

Tensors stored from float32 are widened to float64 exactly and narrowed back
on load, so a round trip is bit-exact.
"""
import json
import struct

import numpy as np

from .baselines import LdaModel
from .nn import NetArch, TwoStreamNet

MAGIC = b"SSVEPMDL"
VERSION = 1
NET_TAG = "two-stream-net"
LDA_TAG = "lda"


def save_container(path, tag, descriptor, tensors):
    """Write ``tensors`` (a list of ``(name, array)``) with a JSON ``descriptor``."""
    desc = dict(descriptor)
    desc["tensors"] = [[name, list(np.shape(a))] for name, a in tensors]
    meta = json.dumps(desc, sort_keys=True).encode("utf-8")
    tag_b = tag.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<H", len(tag_b)) + tag_b)
        fh.write(struct.pack("<I", len(meta)) + meta)
        for _, a in tensors:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_container(path):
    """``(tag, descriptor, {name: float64 array})`` in storage order."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path} is not a model file (bad magic)")
    pos = 8
    (version,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    if version != VERSION:
        raise ValueError(f"unsupported model format version {version}")
    (n,) = struct.unpack_from("<H", blob, pos)
    tag = blob[pos + 2:pos + 2 + n].decode("utf-8")
    pos += 2 + n
    (n,) = struct.unpack_from("<I", blob, pos)
    desc = json.loads(blob[pos + 4:pos + 4 + n].decode("utf-8"))
    pos += 4 + n
    tensors = {}
    for name, shape in desc["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        end = pos + 8 * count
        if end > len(blob):
            raise ValueError(f"model file is truncated inside tensor {name!r}")
        tensors[name] = np.frombuffer(blob[pos:end], dtype="<f8").reshape(shape).astype(np.float64)
        pos = end
    if pos != len(blob):
        raise ValueError("model file has trailing bytes")
    return tag, desc, tensors


# ------------------------------------------------------------ network

def save_net(path, net, extra_tensors=(), extra_meta=None):
    tensors = [(name, net.params[name]) for name, _ in net.arch.shapes()] + list(extra_tensors)
    desc = {"arch": net.arch.to_dict(), "dtype": np.dtype(net.dtype).name, **(extra_meta or {})}
    save_container(path, NET_TAG, desc, tensors)


def load_net(path):
    """``(net, descriptor, extra tensors)``; the net gets its saved dtype back."""
    tag, desc, tensors = load_container(path)
    if tag != NET_TAG:
        raise ValueError(f"expected a {NET_TAG} model, found {tag!r}")
    arch_d = dict(desc["arch"])
    arch_d["conv_maps"] = tuple(arch_d["conv_maps"])
    arch = NetArch(**arch_d)
    dtype = np.dtype(desc["dtype"])
    names = [n for n, _ in arch.shapes()]
    params = {n: tensors[n].astype(dtype) for n in names}
    extra = {k: v for k, v in tensors.items() if k not in params}
    return TwoStreamNet(arch, params), desc, extra


def save_proposed(path, method):
    """A fitted ``ProposedMethod``: network, input standardizer and front-end settings."""
    sc = method.scaler
    extra = [("scaler.freq_mean", sc.freq_mean), ("scaler.freq_std", sc.freq_std),
             ("scaler.time_mean", sc.time_mean), ("scaler.time_std", sc.time_std)]
    meta = {"method": "Proposed", "rate": method.rate, "band": list(method.band), "seed": method.seed}
    save_net(path, method.net, extra, meta)


def load_proposed(path):
    from .methods import ProposedMethod, Standardizer

    net, desc, extra = load_net(path)
    m = ProposedMethod(desc["rate"], seed=desc.get("seed", 0), dtype=net.dtype, band=tuple(desc["band"]))
    m.net = net
    m.scaler = Standardizer(extra["scaler.freq_mean"], extra["scaler.freq_std"],
                            extra["scaler.time_mean"], extra["scaler.time_std"])
    return m


# ------------------------------------------------------------ LDA

_LDA_FIELDS = ("means", "covariance", "weights", "biases", "feat_mean", "feat_std")


def save_lda(path, model, extra_meta=None):
    desc = {"gamma": model.gamma, "n_features": model.n_features, **(extra_meta or {})}
    save_container(path, LDA_TAG, desc, [(f, getattr(model, f)) for f in _LDA_FIELDS])


def load_lda(path):
    tag, desc, tensors = load_container(path)
    if tag != LDA_TAG:
        raise ValueError(f"expected an {LDA_TAG} model, found {tag!r}")
    return LdaModel(gamma=desc["gamma"], **{f: tensors[f] for f in _LDA_FIELDS}), desc
