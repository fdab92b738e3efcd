"""MLP parameters, initialization, weight averaging and checkpoint files."""

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"DBAT"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    """Base class for unreadable checkpoint files."""


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


@dataclass
class MlpParams:
    """Weights are stored as (d_in x d_out) so that a forward pass is ``x @ W + b``."""

    layers: list

    def __post_init__(self):
        if not self.layers:
            raise ValueError("an MLP needs at least one layer")
        fixed = []
        for i, (w, b) in enumerate(self.layers):
            w = np.array(w, dtype=np.float64, ndmin=2)
            b = np.array(b, dtype=np.float64).reshape(-1)
            if b.shape[0] != w.shape[1]:
                raise ValueError(f"layer {i}: bias length {b.shape[0]} != weight columns {w.shape[1]}")
            if fixed and fixed[-1][0].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: input dim {w.shape[0]} does not chain")
            fixed.append((w, b))
        self.layers = fixed

    @property
    def in_dim(self):
        return self.layers[0][0].shape[0]

    @property
    def out_dim(self):
        return self.layers[-1][0].shape[1]

    @property
    def dims(self):
        return (self.in_dim,) + tuple(w.shape[1] for w, _ in self.layers)

    def copy(self):
        return MlpParams([(w.copy(), b.copy()) for w, b in self.layers])

    def zeros_like(self):
        return MlpParams([(np.zeros_like(w), np.zeros_like(b)) for w, b in self.layers])

    def same_shape(self, other):
        return self.dims == other.dims

    def flat(self):
        """All parameters as one vector (weights then bias, layer by layer)."""
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in self.layers])

    def equal(self, other):
        """Bit-exact equality."""
        if not self.same_shape(other):
            return False
        return all(
            np.array_equal(w1, w2) and np.array_equal(b1, b2)
            for (w1, b1), (w2, b2) in zip(self.layers, other.layers)
        )


def init_params(dims, seed):
    """He-normal weights (std sqrt(2/d_in)), zero biases."""
    dims = [int(d) for d in dims]
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ValueError(f"dims must have >= 2 positive entries, got {dims}")
    rng = np.random.default_rng(seed)
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        w = rng.standard_normal((d_in, d_out)) * np.sqrt(2.0 / d_in)
        layers.append((w, np.zeros(d_out)))
    return MlpParams(layers)


@dataclass
class SwaState:
    averaged: MlpParams
    k: int = 0

    @classmethod
    def for_model(cls, model):
        return cls(model.zeros_like(), 0)


def swa_update(state, current):
    """theta' <- (theta' * k + theta) / (k + 1); k <- k + 1. Updates ``state`` in place."""
    if not state.averaged.same_shape(current):
        raise ValueError(f"SWA shape {state.averaged.dims} != model shape {current.dims}")
    k = state.k
    for (aw, ab), (w, b) in zip(state.averaged.layers, current.layers):
        aw *= k
        aw += w
        aw /= k + 1
        ab *= k
        ab += b
        ab /= k + 1
    state.k = k + 1
    return state


def _pack_layers(params):
    parts = [struct.pack("<H", len(params.layers))]
    for w, b in params.layers:
        parts.append(struct.pack("<II", w.shape[0], w.shape[1]))
        parts.append(w.astype("<f8").tobytes())
        parts.append(b.astype("<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(model, swa, path):
    """Write ``model`` and optional ``swa`` state in the little-endian DBAT layout."""
    blob = [MAGIC, struct.pack("<H", FORMAT_VERSION), _pack_layers(model)]
    if swa is None:
        blob.append(struct.pack("<B", 0))
    else:
        blob.append(struct.pack("<BQ", 1, swa.k))
        blob.append(_pack_layers(swa.averaged))
    with open(path, "wb") as fh:
        fh.write(b"".join(blob))


@dataclass
class _Reader:
    buf: bytes
    pos: int = field(default=0)

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise TruncatedCheckpointError(f"file ends inside {what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def floats(self, count, what):
        return np.frombuffer(self.take(8 * count, what), dtype="<f8").astype(np.float64)


def _read_layers(r):
    (n_layers,) = r.unpack("<H", "layer count")
    layers = []
    for i in range(n_layers):
        d_in, d_out = r.unpack("<II", f"layer {i} header")
        w = r.floats(d_in * d_out, f"layer {i} weights").reshape(d_in, d_out)
        b = r.floats(d_out, f"layer {i} bias")
        layers.append((w, b))
    return MlpParams(layers)


def load_checkpoint(path):
    """Return ``(model, swa_or_None)``. Raises a CheckpointError subclass on malformed files."""
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise BadMagicError(f"{path}: not a DBAT checkpoint")
    (version,) = r.unpack("<H", "version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    model = _read_layers(r)
    (has_swa,) = r.unpack("<B", "SWA flag")
    swa = None
    if has_swa:
        (k,) = r.unpack("<Q", "SWA count")
        swa = SwaState(_read_layers(r), k)
        if not swa.averaged.same_shape(model):
            raise CheckpointError(f"{path}: SWA shape does not match model")
    if r.pos != len(r.buf):
        raise CheckpointError(f"{path}: {len(r.buf) - r.pos} trailing bytes")
    return model, swa
