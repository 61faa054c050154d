"""Binary file formats: channel datasets and model checkpoints.

Both formats are little-endian with fixed magic/version headers.  Datasets
store complex64 entries (generation noise floor); checkpoints store every
parameter and batch-norm running buffer as float64 so that a reload
reproduces forward passes bit-exactly, plus the preprocessing constants
and optionally the Adam state for resuming training.
"""

from __future__ import annotations

import struct

import numpy as np

from .channel import PreprocState
from .network import BLOCK_STYLES, Autoencoder, ModelConfig
from .training import Adam

DATASET_MAGIC = b"CSID"
CHECKPOINT_MAGIC = b"CSIW"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIIII")


def write_dataset(path, samples: np.ndarray) -> None:
    """Write a (count, nc, nt) complex array as a dataset file."""
    samples = np.asarray(samples)
    if samples.ndim != 3:
        raise ValueError("write_dataset: expected a (count, nc, nt) array")
    count, nc, nt = samples.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DATASET_MAGIC, FORMAT_VERSION, count, nc, nt))
        fh.write(np.ascontiguousarray(samples, dtype="<c8").tobytes())


def read_dataset(path) -> np.ndarray:
    """Read a dataset file back as (count, nc, nt) complex128."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError("read_dataset: file shorter than header")
    magic, version, count, nc, nt = _HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise ValueError(f"read_dataset: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"read_dataset: unsupported version {version}")
    expected = _HEADER.size + count * nc * nt * 8
    if len(raw) != expected:
        raise ValueError(f"read_dataset: length {len(raw)} contradicts header ({expected})")
    body = np.frombuffer(raw, dtype="<c8", offset=_HEADER.size)
    return body.reshape(count, nc, nt).astype(np.complex128)


def _write_record(fh, name: str, arr: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    arr = np.asarray(arr, dtype=np.float64)
    fh.write(struct.pack("<B", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, fmt: str):
        s = struct.Struct("<" + fmt)
        if self.pos + s.size > len(self.raw):
            raise ValueError("read_checkpoint: truncated file")
        vals = s.unpack_from(self.raw, self.pos)
        self.pos += s.size
        return vals

    def take_bytes(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise ValueError("read_checkpoint: truncated file")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def record(self):
        (name_len,) = self.take("H")
        name = self.take_bytes(name_len).decode("utf-8")
        (rank,) = self.take("B")
        dims = self.take(f"{rank}I") if rank else ()
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        values = np.frombuffer(self.take_bytes(count * 8), dtype="<f8").reshape(dims)
        return name, values.astype(np.float64)


def write_checkpoint(path, model: Autoencoder, preproc: PreprocState,
                     optimizer: Adam | None = None) -> None:
    """Serialize config, preprocessing constants, parameters, and Adam state."""
    cfg = model.cfg
    params = model.params()
    state = model.state()
    names = [n for n, _ in params] + [n for n, _ in state]
    if len(set(names)) != len(names):
        raise ValueError("write_checkpoint: duplicate record names")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<8I", cfg.nc_crop, cfg.nt, cfg.M, cfg.B,
                             BLOCK_STYLES.index(cfg.block_style), int(cfg.quant_aware),
                             cfg.encoder_resnets, cfg.decoder_resnets))
        fh.write(struct.pack("<ddI", preproc.a, preproc.b, preproc.shift))
        fh.write(struct.pack("<I", len(params) + len(state)))
        for name, tensor in params:
            _write_record(fh, name, tensor.data)
        for name, arr in state:
            _write_record(fh, name, arr)
        if optimizer is None:
            fh.write(struct.pack("<B", 0))
        else:
            fh.write(struct.pack("<B", 1))
            fh.write(struct.pack("<Q", optimizer.t))
            fh.write(struct.pack("<I", 2 * len(optimizer.params)))
            for name, _ in optimizer.params:
                _write_record(fh, "adam.m." + name, optimizer.m[name])
                _write_record(fh, "adam.v." + name, optimizer.v[name])


def read_checkpoint(path):
    """Rebuild (model, preproc_state, adam_state_or_None) from a file.

    adam_state is (t, {param_name: (m, v)}) for Adam.load_state.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    r = _Reader(raw)
    magic = r.take_bytes(4)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"read_checkpoint: bad magic {magic!r}")
    (version,) = r.take("I")
    if version != FORMAT_VERSION:
        raise ValueError(f"read_checkpoint: unsupported version {version}")
    nc_crop, nt, m_dim, bits, style_code, aware, enc_n, dec_n = r.take("8I")
    if style_code >= len(BLOCK_STYLES):
        raise ValueError(f"read_checkpoint: unknown block style code {style_code}")
    cfg = ModelConfig(nc_crop=nc_crop, nt=nt, M=m_dim, B=bits,
                      block_style=BLOCK_STYLES[style_code], quant_aware=bool(aware),
                      encoder_resnets=enc_n, decoder_resnets=dec_n)
    a, b, shift = r.take("ddI")
    preproc = PreprocState(a=a, b=b, shift=shift)
    (n_records,) = r.take("I")
    records = {}
    for _ in range(n_records):
        name, values = r.record()
        if name in records:
            raise ValueError(f"read_checkpoint: duplicate record {name!r}")
        records[name] = values

    model = Autoencoder(cfg, rng=0)
    expected = dict(model.params())
    expected.update(model.state())
    if set(records) != set(expected):
        missing = set(expected) - set(records)
        extra = set(records) - set(expected)
        raise ValueError(f"read_checkpoint: record mismatch (missing {sorted(missing)}, "
                         f"extra {sorted(extra)})")
    for name, tensor in model.params():
        if records[name].shape != tensor.data.shape:
            raise ValueError(f"read_checkpoint: shape mismatch for {name}")
        tensor.data[...] = records[name]
    for name, arr in model.state():
        if records[name].shape != arr.shape:
            raise ValueError(f"read_checkpoint: shape mismatch for {name}")
        arr[...] = records[name]

    (adam_flag,) = r.take("B")
    adam_state = None
    if adam_flag:
        (t,) = r.take("Q")
        (n_adam,) = r.take("I")
        moments: dict = {}
        for _ in range(n_adam):
            name, values = r.record()
            if name.startswith("adam.m."):
                moments.setdefault(name[7:], [None, None])[0] = values
            elif name.startswith("adam.v."):
                moments.setdefault(name[7:], [None, None])[1] = values
            else:
                raise ValueError(f"read_checkpoint: unexpected optimizer record {name!r}")
        for pname, (m, v) in moments.items():
            if m is None or v is None:
                raise ValueError(f"read_checkpoint: incomplete moments for {pname!r}")
        adam_state = (t, {k: (m, v) for k, (m, v) in moments.items()})
    if r.pos != len(raw):
        raise ValueError("read_checkpoint: trailing bytes")
    return model, preproc, adam_state
