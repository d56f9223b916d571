"""Fixed-length text vectors for jobs.

The built-in encoder is a signed hashed bag of words: each token is hashed with
seeded 64-bit FNV-1a (seed as 8 little-endian bytes, then the UTF-8 token).
The bucket is ``hash % d`` and the sign is ``-1`` when bit 63 is set. The
summed vector is L2-normalized. Externally produced vectors can be loaded
instead, with hashed encoding as the per-job fallback.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import kernels
from .errors import DataIOError, SchemaError, UsageError

HASHED_BOW = "hashed_bow"
EXTERNAL_FILE = "external_file"


@dataclass
class EncoderSpec:
    kind: str = HASHED_BOW
    d: int = 300
    hash_seed: int = 0
    idf_table: dict[str, float] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.d < 1:
            raise UsageError(f"text dimension must be >= 1, got {self.d}")
        if self.kind not in (HASHED_BOW, EXTERNAL_FILE):
            raise UsageError(f"unknown encoder kind {self.kind!r}")


def hashed_counts(tokens: Iterable[str], spec: EncoderSpec) -> np.ndarray:
    """The un-normalized signed bucket sums."""
    tokens = list(tokens)
    out = np.zeros(spec.d)
    if not tokens:
        return out
    h = kernels.hash_tokens(tokens, spec.hash_seed)
    idx = (h % np.uint64(spec.d)).astype(np.intp)
    sign = np.where(h >> np.uint64(63), -1.0, 1.0)
    if spec.idf_table is not None:
        sign = sign * np.array([spec.idf_table.get(t, 1.0) for t in tokens])
    np.add.at(out, idx, sign)
    return out


def encode_hashed_bow(tokens: Iterable[str], spec: EncoderSpec) -> np.ndarray:
    v = hashed_counts(tokens, spec)
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def build_idf(documents: Iterable[Iterable[str]]) -> dict[str, float]:
    """Smoothed inverse document frequency, ``ln((1+N)/(1+df)) + 1``."""
    df: Counter = Counter()
    n = 0
    for doc in documents:
        n += 1
        df.update(set(doc))
    return {t: math.log((1 + n) / (1 + c)) + 1.0 for t, c in df.items()}


def load_external_vectors(path, d: int) -> dict[str, np.ndarray]:
    """Read ``job_id f1 ... fd`` lines (space separated)."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    out = {}
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != d + 1:
            raise SchemaError(
                f"{path}:{lineno}: expected job id and {d} floats, got {len(parts) - 1} values"
            )
        try:
            vec = np.array([float(x) for x in parts[1:]])
        except ValueError as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from exc
        if not np.isfinite(vec).all():
            raise SchemaError(f"{path}:{lineno}: non-finite value")
        out[parts[0]] = vec
    return out


def encode_catalog(catalog, spec: EncoderSpec, external: dict | None = None):
    """Text vectors for every job. Returns ``(vectors, fallback_count)``."""
    vectors = {}
    fallback = 0
    for job_id, job in catalog.items():
        if external is not None and job_id in external:
            vectors[job_id] = external[job_id]
        else:
            if external is not None:
                fallback += 1
            vectors[job_id] = encode_hashed_bow(job.tokens, spec)
    return vectors, fallback
