"""Checkpoint container and its binary file format.

Layout (all integers little-endian)::

    b"ARNK"                      magic
    u32 version                  currently 1
    u32 len, bytes               config block: canonical JSON (sorted keys)
    u32 n_tensors
    n_tensors x { u32 rank, rank x u32 dims, prod(dims) x f32 }
    u32 n_normalizers, n x f64   per-selection normalizers
    u64 checksum                 blake2b-64 of every preceding byte

The config block holds the architecture, the erasing operator names, the
parameter names (in tensor-record order) and free-form run metadata.
"""
import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import ArchConfig, param_shapes

MAGIC = b"ARNK"
VERSION = 1


@dataclass
class Checkpoint:
    arch: ArchConfig
    erasing: list
    params: dict
    normalizers: np.ndarray = None
    meta: dict = field(default_factory=dict)
    version: int = VERSION

    def config_block(self):
        block = {
            "arch": self.arch.to_dict(),
            "erasing": list(self.erasing),
            "param_names": list(self.params),
            "meta": self.meta,
        }
        return canonical_json(block)


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _checksum(data):
    return hashlib.blake2b(data, digest_size=8).digest()


def to_bytes(ckpt):
    parts = [MAGIC, struct.pack("<I", ckpt.version)]
    cfg = ckpt.config_block().encode("utf-8")
    parts += [struct.pack("<I", len(cfg)), cfg, struct.pack("<I", len(ckpt.params))]
    for arr in ckpt.params.values():
        arr = np.asarray(arr)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    norms = np.zeros(0) if ckpt.normalizers is None else np.asarray(ckpt.normalizers)
    parts.append(struct.pack("<I", len(norms)))
    parts.append(np.ascontiguousarray(norms, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + _checksum(body)


def atomic_write(path, data):
    """Write ``data`` via a temp file in the same directory and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data if isinstance(data, bytes) else data.encode("utf-8"))
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def save(ckpt, path):
    atomic_write(path, to_bytes(ckpt))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint while reading {what} at byte {self.pos}",
                                  field=what)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def from_bytes(buf):
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError("not an ARNet checkpoint (bad magic)", field="magic")
    version = r.u32("version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})",
                              field="version")
    try:
        block = json.loads(r.take(r.u32("config length"), "config").decode("utf-8"))
        arch = ArchConfig.from_dict(block["arch"])
        names = block["param_names"]
        erasing = block["erasing"]
        meta = block.get("meta", {})
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"corrupt config block: {exc}", field="config") from exc
    n_tensors = r.u32("tensor count")
    if n_tensors != len(names):
        raise CheckpointError(f"{n_tensors} tensor records but {len(names)} parameter names",
                              field="tensor count")
    expected = param_shapes(arch)
    params = {}
    for name in names:
        rank = r.u32(f"{name} rank")
        if rank > 8:
            raise CheckpointError(f"implausible rank {rank} for {name}", field=f"{name} rank")
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank, f"{name} dims"))
        if expected.get(name) != dims:
            raise CheckpointError(f"{name}: stored shape {dims} does not match architecture "
                                  f"{expected.get(name)}", field=f"{name} dims")
        count = int(np.prod(dims))
        raw = r.take(4 * count, f"{name} payload")
        params[name] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(dims)
    if set(params) != set(expected):
        raise CheckpointError("parameter set does not match architecture", field="param_names")
    n_norm = r.u32("normalizer count")
    norms = np.frombuffer(r.take(8 * n_norm, "normalizers"), dtype="<f8").astype(np.float64)
    body_end = r.pos
    digest = r.take(8, "checksum")
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes after checksum",
                              field="checksum")
    if digest != _checksum(buf[:body_end]):
        raise CheckpointError("checksum mismatch (file corrupted)", field="checksum")
    return Checkpoint(arch, list(erasing), params, norms if n_norm else None, meta, version)


def load(path):
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}", field="path") from exc
    return from_bytes(buf)
