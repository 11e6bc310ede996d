"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"FFNT"  u32 version (=1)  u64 iteration  32-byte spec fingerprint
    u32 record count
    per record: u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
                float32 payload (row-major)

Records are the parameters in store order, then their momentum buffers
named ``<param>.m``, then ``rng.seed``: the 64-bit training seed split into
four 16-bit words (each exact in float32), least significant first.  The
per-iteration random streams are derived from ``(seed, iteration)``, so
these two values are the complete generator state.
"""
from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, IncompatibleSpecError
from .graph import NetworkSpec, ParamStore

MAGIC = b"FFNT"
VERSION = 1
MOMENTUM_SUFFIX = ".m"
SEED_RECORD = "rng.seed"


@dataclass
class Checkpoint:
    iteration: int
    fingerprint: bytes
    params: ParamStore
    seed: int


def _write_tensor(f, name: str, t: np.ndarray) -> None:
    raw = name.encode("utf-8")
    f.write(struct.pack("<H", len(raw)))
    f.write(raw)
    f.write(struct.pack("<B", t.ndim))
    f.write(struct.pack(f"<{t.ndim}I", *t.shape))
    f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def _seed_words(seed: int) -> np.ndarray:
    return np.array([(seed >> (16 * i)) & 0xFFFF for i in range(4)], dtype=np.float32)


def save_checkpoint(path, spec: NetworkSpec, params: ParamStore, iteration: int = 0, seed: int = 0) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IQ", VERSION, iteration))
    buf.write(spec.fingerprint())
    buf.write(struct.pack("<I", 2 * len(params.values) + 1))
    for name, t in params.values.items():
        _write_tensor(buf, name, t)
    for name, t in params.momentum.items():
        _write_tensor(buf, name + MOMENTUM_SUFFIX, t)
    _write_tensor(buf, SEED_RECORD, _seed_words(seed))
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(buf.getvalue())
    os.replace(tmp, path)


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw, self.pos, self.path = raw, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise OSError(f"{self.path}: truncated checkpoint (wanted {n} bytes at offset {self.pos})")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path, spec: NetworkSpec | None = None) -> Checkpoint:
    """Read a checkpoint; when ``spec`` is given its fingerprint must match."""
    with open(path, "rb") as f:
        r = _Reader(f.read(), path)
    if r.take(4) != MAGIC:
        raise FormatError(f"{path}: bad magic, not a checkpoint")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    (iteration,) = r.unpack("<Q")
    fingerprint = r.take(32)
    if spec is not None and fingerprint != spec.fingerprint():
        raise IncompatibleSpecError(f"{path}: checkpoint was written for a different network")
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}I")
        size = int(np.prod(dims)) if rank else 1
        tensors[name] = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(dims).astype(np.float32)
    if r.pos != len(r.raw):
        raise FormatError(f"{path}: {len(r.raw) - r.pos} trailing bytes")
    words = tensors.pop(SEED_RECORD, None)
    if words is None:
        raise FormatError(f"{path}: missing {SEED_RECORD} record")
    seed = sum(int(wd) << (16 * i) for i, wd in enumerate(words))
    values = {k: v for k, v in tensors.items() if not k.endswith(MOMENTUM_SUFFIX)}
    momentum = {k[:-len(MOMENTUM_SUFFIX)]: v for k, v in tensors.items() if k.endswith(MOMENTUM_SUFFIX)}
    if momentum.keys() != values.keys():
        raise FormatError(f"{path}: momentum records do not match parameters")
    return Checkpoint(iteration, fingerprint, ParamStore(values, momentum=momentum), seed)
