"""File formats: 16-bit PCM WAV, FEAT1 feature files, label files, ESNM1 models.

FEAT1 layout (little-endian)::

    b"FEAT" | u8 version=1 | u32 T | u32 n_features | f32[T * n_features] row-major

ESNM1 layout (little-endian)::

    b"ESNM" | u8 version=1 | u8 variant | u32 n_layers | u32 n_in
    per layer:
        u32 size | f64 spectral_radius | f64 leak_rate | f64 input_scale
        | f64 bias_scale | f64 connectivity | u32 delay | u64 seed | u8 leak_on_activation
        u32 nnz | u32 rows[nnz] | u32 cols[nnz] | f64 vals[nnz]      (W as COO)
        u32 rows | u32 cols | f64[rows * cols]                         (W_in)
        u32 n | f64[n]                                                 (theta)
    u32 n_groups | u32 sizes[n_groups] | u32 delays[n_groups]          (0 groups: no partition)
    u32 context_width | u32 context_center | u32 washout
    u32 n_classes | u32 z_dim | f64[n_classes * z_dim]                 (0 classes: untrained)
"""

from __future__ import annotations

import struct
import wave
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import FormatError
from .features import AudioSignal
from .readout import ReadoutWeights
from .reservoir import (
    VARIANTS,
    Layer,
    LayerConfig,
    LayerWeights,
    ReservoirModel,
    SubGroupPartition,
)

FEAT_MAGIC = b"FEAT"
MODEL_MAGIC = b"ESNM"
VERSION = 1


# -- audio ---------------------------------------------------------------------

def read_wav(path) -> AudioSignal:
    """Mono 16-bit PCM WAV scaled to [-1, 1)."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getnchannels() != 1:
                raise FormatError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
            if wf.getsampwidth() != 2:
                raise FormatError(f"{path}: expected 16-bit samples, got {8 * wf.getsampwidth()}-bit")
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: unreadable WAV ({exc})") from exc
    if len(raw) % 2:
        raise FormatError(f"{path}: truncated sample data")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioSignal(samples, rate)


def write_wav(path, signal: AudioSignal) -> None:
    pcm = np.clip(np.round(signal.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(signal.sample_rate))
        wf.writeframes(pcm.tobytes())


# -- features and labels ---------------------------------------------------------

def write_features(path, features) -> None:
    X = np.asarray(features, dtype="<f4")
    if X.ndim != 2:
        raise FormatError(f"features must be 2-D, got shape {X.shape}")
    with open(path, "wb") as fh:
        fh.write(FEAT_MAGIC + struct.pack("<BII", VERSION, *X.shape))
        fh.write(np.ascontiguousarray(X).tobytes())


def read_features(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 13 or data[:4] != FEAT_MAGIC:
        raise FormatError(f"{path}: not a FEAT1 file")
    version, T, n = struct.unpack_from("<BII", data, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported FEAT version {version}")
    if len(data) != 13 + 4 * T * n:
        raise FormatError(f"{path}: expected {T}x{n} floats, file size {len(data)} disagrees")
    return np.frombuffer(data, dtype="<f4", offset=13).reshape(T, n).astype(np.float64)


def read_labels(path) -> np.ndarray:
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: label {line!r} is not an integer") from None
    return np.array(labels, dtype=np.int64)


def write_labels(path, labels) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


# -- models ------------------------------------------------------------------------

class _Reader:
    def __init__(self, data: bytes, name):
        self.data, self.pos, self.name = data, 0, name

    def unpack(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise FormatError(f"{self.name}: truncated model file")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def array(self, dtype, count):
        dt = np.dtype(dtype)
        end = self.pos + dt.itemsize * count
        if end > len(self.data):
            raise FormatError(f"{self.name}: truncated model file")
        out = np.frombuffer(self.data, dtype=dt, count=count, offset=self.pos)
        self.pos = end
        return out


_LAYER_FMT = "<IdddddIQB"


def _layer_bytes(layer: Layer) -> bytes:
    c, w = layer.config, layer.weights
    parts = [struct.pack(_LAYER_FMT, c.size, c.spectral_radius, c.leak_rate, c.input_scale,
                         c.bias_scale, c.connectivity, c.delay, c.seed, int(c.leak_on_activation))]
    coo = w.W.tocoo()
    parts.append(struct.pack("<I", coo.nnz))
    parts += [coo.row.astype("<u4").tobytes(), coo.col.astype("<u4").tobytes(),
              coo.data.astype("<f8").tobytes()]
    parts.append(struct.pack("<II", *w.W_in.shape))
    parts.append(np.ascontiguousarray(w.W_in, dtype="<f8").tobytes())
    parts.append(struct.pack("<I", w.theta.size))
    parts.append(w.theta.astype("<f8").tobytes())
    return b"".join(parts)


def reservoir_bytes(model: ReservoirModel) -> bytes:
    """Canonical serialisation of the reservoir part only (no readout, no metadata)."""
    parts = [MODEL_MAGIC, struct.pack("<BBII", VERSION, VARIANTS.index(model.variant),
                                      len(model.layers), model.n_in)]
    parts += [_layer_bytes(layer) for layer in model.layers]
    p = model.partition
    if p is None:
        parts.append(struct.pack("<I", 0))
    else:
        k = len(p.group_sizes)
        parts.append(struct.pack(f"<I{k}I{k}I", k, *p.group_sizes, *p.group_delays))
    return b"".join(parts)


def model_bytes(model: ReservoirModel, readout: ReadoutWeights | None = None,
                context_width: int = 1, context_center: int = 0, washout: int = 0) -> bytes:
    parts = [reservoir_bytes(model), struct.pack("<III", context_width, context_center, washout)]
    if readout is None:
        parts.append(struct.pack("<II", 0, 0))
    else:
        parts.append(struct.pack("<II", *readout.W_out.shape))
        parts.append(np.ascontiguousarray(readout.W_out, dtype="<f8").tobytes())
    return b"".join(parts)


def save_model(path, model: ReservoirModel, readout: ReadoutWeights | None = None, **meta) -> None:
    Path(path).write_bytes(model_bytes(model, readout, **meta))


def parse_model(data: bytes, name="<bytes>"):
    """Inverse of ``model_bytes``: ``(model, readout_or_None, meta_dict)``."""
    r = _Reader(data, name)
    if r.unpack("<4s")[0] != MODEL_MAGIC:
        raise FormatError(f"{name}: not an ESNM model file")
    version, variant, n_layers, n_in = r.unpack("<BBII")
    if version != VERSION:
        raise FormatError(f"{name}: unsupported ESNM version {version}")
    if variant >= len(VARIANTS):
        raise FormatError(f"{name}: unknown variant code {variant}")
    layers = []
    for _ in range(n_layers):
        size, rho, leak, in_s, b_s, conn, delay, seed, loa = r.unpack(_LAYER_FMT)
        cfg = LayerConfig(size, rho, leak, in_s, b_s, conn, delay, seed, bool(loa))
        (nnz,) = r.unpack("<I")
        rows = r.array("<u4", nnz)
        cols = r.array("<u4", nnz)
        vals = r.array("<f8", nnz)
        W = sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))
        nr, nc = r.unpack("<II")
        W_in = r.array("<f8", nr * nc).reshape(nr, nc)
        (nt,) = r.unpack("<I")
        theta = r.array("<f8", nt)
        layers.append(Layer(cfg, LayerWeights(W, W_in, theta)))
    (k,) = r.unpack("<I")
    partition = None
    if k:
        vals = r.unpack(f"<{2 * k}I")
        partition = SubGroupPartition(vals[:k], vals[k:])
    model = ReservoirModel(VARIANTS[variant], tuple(layers), partition)
    if model.n_in != n_in:
        raise FormatError(f"{name}: header n_in {n_in} disagrees with layer 1 ({model.n_in})")
    width, center, washout = r.unpack("<III")
    n_classes, z_dim = r.unpack("<II")
    readout = None
    if n_classes:
        readout = ReadoutWeights(r.array("<f8", n_classes * z_dim).reshape(n_classes, z_dim))
    if r.pos != len(data):
        raise FormatError(f"{name}: {len(data) - r.pos} trailing bytes")
    return model, readout, {"context_width": width, "context_center": center, "washout": washout}


def load_model(path):
    return parse_model(Path(path).read_bytes(), str(path))
