"""Single-file model checkpoints.

Layout::

    b"PANAPCK1"
    u32 header length, then UTF-8 JSON header (sorted keys)
    u32 tensor count
    per tensor: u32 name length, name bytes, u32 ndim, u64 dims...,
                u8 decay flag, then value / first moment / second moment
                as little-endian float64

Nothing time- or host-dependent is written, so equal inputs give equal bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import ParameterStore
from .errors import DataError, DataIOError
from .model import ModelConfig, PanapModel, TrainConfig, Vocab

MAGIC = b"PANAPCK1"
_F64 = np.dtype("<f8")


@dataclass
class Checkpoint:
    model_config: ModelConfig
    train_config: TrainConfig
    vocabs: dict[str, Vocab]
    store: ParameterStore
    history: list[float] = field(default_factory=list)
    fingerprint: dict = field(default_factory=dict)

    def model(self, catalog, seekers, text_vectors) -> PanapModel:
        """Rebuild a ready-to-score model over the given catalog."""
        m = PanapModel(self.model_config, self.vocabs, self.store)
        m.attach(catalog, seekers, text_vectors)
        return m


def _u32(n: int) -> bytes:
    return struct.pack("<I", n)


def encode_checkpoint(
    model: PanapModel,
    train_config: TrainConfig,
    history=(),
    fingerprint: dict | None = None,
) -> bytes:
    header = {
        "format": 1,
        "model_config": model.config.to_dict(),
        "train_config": train_config.to_dict(),
        "vocabs": {k: v.items for k, v in sorted(model.vocabs.items())},
        "history": [float(x) for x in history],
        "fingerprint": {"strategy": train_config.sampling_strategy, "seed": train_config.seed, **(fingerprint or {})},
        "adam_step": model.store.step,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, _u32(len(blob)), blob]
    store = model.store
    names = sorted(store.names())
    parts.append(_u32(len(names)))
    for name in names:
        arr = store[name]
        raw = name.encode()
        parts += [_u32(len(raw)), raw, _u32(arr.ndim)]
        parts += [struct.pack("<Q", d) for d in arr.shape]
        parts.append(bytes([1 if store.decay[name] else 0]))
        for a in (arr, store.m[name], store.v[name]):
            parts.append(np.ascontiguousarray(a, dtype=_F64).tobytes())
    return b"".join(parts)


def save_checkpoint(path, model, train_config, history=(), fingerprint=None) -> None:
    data = encode_checkpoint(model, train_config, history, fingerprint)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise DataIOError(f"cannot write checkpoint {path}: {exc}") from exc


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DataError("checkpoint is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def decode_checkpoint(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise DataError("not a checkpoint file (bad magic)")
    try:
        header = json.loads(r.take(r.u32()).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"corrupt checkpoint header: {exc}") from exc
    store = ParameterStore()
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode()
        shape = tuple(r.u64() for _ in range(r.u32()))
        decay = r.take(1) == b"\x01"
        size = int(np.prod(shape, dtype=np.int64)) * 8
        value, m, v = (np.frombuffer(r.take(size), dtype=_F64).reshape(shape).astype(np.float64) for _ in range(3))
        store.add(name, value, decay)
        store.m[name], store.v[name] = m, v
    if r.pos != len(data):
        raise DataError("trailing bytes after checkpoint tensors")
    store.step = int(header["adam_step"])
    return Checkpoint(
        ModelConfig(**header["model_config"]),
        TrainConfig(**header["train_config"]),
        {k: Vocab.from_items(v) for k, v in header["vocabs"].items()},
        store,
        list(header["history"]),
        dict(header["fingerprint"]),
    )


def load_checkpoint(path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataIOError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_checkpoint(data)
