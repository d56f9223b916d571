"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``.

Both implementations must agree bit for bit; the test suite checks this.
"""

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes, seed: int = 0) -> int:
    """64-bit FNV-1a over the 8-byte little-endian seed followed by ``data``."""
    h = FNV_OFFSET
    for b in (seed & MASK64).to_bytes(8, "little"):
        h = ((h ^ b) * FNV_PRIME) & MASK64
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & MASK64
    return h


def hash_tokens(tokens, seed: int = 0) -> np.ndarray:
    return np.array([fnv1a64(t.encode("utf-8"), seed) for t in tokens], dtype=np.uint64)


def session_overlap(items, weights, indptr, indices, n_sessions: int) -> np.ndarray:
    """``out[s] = sum of weights[i] over prefix items i contained in session s``.

    ``indptr``/``indices`` are the CSR postings item -> sessions. Accumulation
    runs in prefix order, one posting at a time.
    """
    out = np.zeros(n_sessions)
    for item, w in zip(items, weights):
        postings = indices[indptr[item] : indptr[item + 1]]
        np.add.at(out, postings, w)
    return out


def posting_sums(items, indptr, indices, values) -> np.ndarray:
    """``out[k] = sum(values[s] for s in postings of items[k])``, summed in order."""
    out = np.zeros(len(items))
    for k, item in enumerate(items):
        vals = values[indices[indptr[item] : indptr[item + 1]]]
        if len(vals):
            out[k] = np.cumsum(vals)[-1]
    return out
