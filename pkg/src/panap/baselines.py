"""Non-neural session-based baselines: POP, AR, CS, IkNN, SkNN and V-SkNN.

Each baseline is fit on training sessions and scores an arbitrary candidate
list for a session prefix. Nothing here is random.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .data import Session


class CooccurrenceIndex:
    """Per-session co-occurrence counts and per-job session support.

    Each unordered pair of distinct jobs counts once per session that
    contains both, whatever the order or multiplicity.
    """

    def __init__(self, sessions: Sequence[Session]):
        self.co: dict[str, Counter] = defaultdict(Counter)
        self.support: Counter = Counter()
        for s in sessions:
            items = sorted(set(s.job_ids))
            self.support.update(items)
            for i, a in enumerate(items):
                for b in items[i + 1 :]:
                    self.co[a][b] += 1
                    self.co[b][a] += 1

    def count(self, a: str, b: str) -> int:
        row = self.co.get(a)
        return row.get(b, 0) if row else 0


class SessionIndex:
    """Binary session-item incidence stored as CSR postings item -> sessions."""

    def __init__(self, sessions: Sequence[Session]):
        self.item_ids: dict[str, int] = {}
        sets = []
        for s in sessions:
            items = sorted(set(s.job_ids))
            for j in items:
                self.item_ids.setdefault(j, len(self.item_ids))
            sets.append([self.item_ids[j] for j in items])
        self.n_sessions = len(sets)
        self.session_size = np.array([len(x) for x in sets], dtype=np.float64)
        postings: list[list[int]] = [[] for _ in self.item_ids]
        for sid, items in enumerate(sets):
            for it in items:
                postings[it].append(sid)
        self.indptr = np.zeros(len(postings) + 1, dtype=np.int64)
        self.indptr[1:] = np.cumsum([len(p) for p in postings])
        self.indices = np.array([s for p in postings for s in p], dtype=np.int64)

    def items(self, job_ids: Sequence[str]) -> np.ndarray:
        """Internal ids; jobs never seen in training map to -1."""
        return np.array([self.item_ids.get(j, -1) for j in job_ids], dtype=np.int64)


def pop_score(prefix: Sequence[str], candidates: Sequence[str], counts: Mapping[str, int]) -> np.ndarray:
    return np.array([float(counts.get(c, 0)) for c in candidates])


def ar_score(prefix: Sequence[str], candidates: Sequence[str], index: CooccurrenceIndex) -> np.ndarray:
    last = prefix[-1]
    return np.array([float(index.count(last, c)) for c in candidates])


def _cos(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        return 0.0
    return float(a @ b / (na * nb))


def cs_score(
    prefix: Sequence[str], candidates: Sequence[str], text_vectors: Mapping[str, np.ndarray]
) -> np.ndarray:
    """Cosine between each candidate's text vector and the mean prefix text vector."""
    mean = np.mean([text_vectors[j] for j in prefix], axis=0)
    return np.array([_cos(mean, text_vectors[c]) for c in candidates])


def iknn_score(
    prefix: Sequence[str],
    candidates: Sequence[str],
    index: CooccurrenceIndex,
    lambda_reg: float = 20.0,
) -> np.ndarray:
    last = prefix[-1]
    sup_last = index.support.get(last, 0)
    out = np.zeros(len(candidates))
    for i, c in enumerate(candidates):
        co = index.count(last, c)
        if co:
            out[i] = co / (np.sqrt(sup_last + lambda_reg) * np.sqrt(index.support[c] + lambda_reg))
    return out


def _neighbor_scores(
    weights: Mapping[str, float],
    candidates: Sequence[str],
    index: SessionIndex,
    k_neighbors: int,
) -> np.ndarray:
    """Sum of neighbor-session similarities over neighbors containing each candidate."""
    norm = np.sqrt(sum(w * w for w in weights.values()))
    known = [(index.item_ids[j], w) for j, w in weights.items() if j in index.item_ids]
    if not known or norm == 0.0:
        return np.zeros(len(candidates))
    items = np.array([i for i, _ in known], dtype=np.int64)
    w = np.array([x for _, x in known])
    dot = kernels.session_overlap(items, w, index.indptr, index.indices, index.n_sessions)
    touched = np.flatnonzero(dot)
    sims = dot[touched] / (norm * np.sqrt(index.session_size[touched]))
    # Top-k by similarity, ties by ascending session id.
    order = np.lexsort((touched, -sims))[:k_neighbors]
    dense = np.zeros(index.n_sessions)
    dense[touched[order]] = sims[order]
    cand = index.items(candidates)
    out = np.zeros(len(candidates))
    ok = cand >= 0
    if ok.any():
        out[ok] = kernels.posting_sums(cand[ok], index.indptr, index.indices, dense)
    return out


def sknn_score(
    prefix: Sequence[str], candidates: Sequence[str], index: SessionIndex, k_neighbors: int = 500
) -> np.ndarray:
    """Binary-cosine session neighbors of the whole prefix."""
    weights = {j: 1.0 for j in prefix}
    return _neighbor_scores(weights, candidates, index, k_neighbors)


def linear_decay_weights(prefix: Sequence[str]) -> dict[str, float]:
    """The i-th most recent of n items weighs (n-i+1)/n; repeats keep their latest weight."""
    n = len(prefix)
    weights: dict[str, float] = {}
    for pos, j in enumerate(prefix):
        weights[j] = (pos + 1) / n
    return weights


def vsknn_score(
    prefix: Sequence[str], candidates: Sequence[str], index: SessionIndex, k_neighbors: int = 500
) -> np.ndarray:
    return _neighbor_scores(linear_decay_weights(prefix), candidates, index, k_neighbors)


class Baseline:
    name = "baseline"

    def fit(self, sessions: Sequence[Session]) -> "Baseline":
        return self

    def score(self, prefix: Sequence[str], candidates: Sequence[str]) -> np.ndarray:
        raise NotImplementedError

    def score_batch(self, instances, candidate_lists) -> list[np.ndarray]:
        return [self.score(inst.prefix, c) for inst, c in zip(instances, candidate_lists)]


class Pop(Baseline):
    name = "pop"

    def fit(self, sessions):
        self.counts = Counter(j for s in sessions for j in s.job_ids)
        return self

    def score(self, prefix, candidates):
        return pop_score(prefix, candidates, self.counts)


class AssociationRules(Baseline):
    name = "ar"

    def fit(self, sessions):
        self.index = CooccurrenceIndex(sessions)
        return self

    def score(self, prefix, candidates):
        return ar_score(prefix, candidates, self.index)


class ContentSimilarity(Baseline):
    """Text-vector cosine to the prefix mean.

    When recommending from scratch the pool is the recent-jobs buffer; under
    the shared evaluation protocol it scores whatever candidates it is given.
    """

    name = "cs"

    def __init__(self, text_vectors: Mapping[str, np.ndarray], buffer_items: Sequence[str] = ()):
        self.text_vectors = text_vectors
        self.buffer_items = list(dict.fromkeys(buffer_items))

    def score(self, prefix, candidates):
        return cs_score(prefix, candidates, self.text_vectors)

    def recommend(self, prefix, k: int) -> list[tuple[str, float]]:
        seen = set(prefix)
        pool = [j for j in self.buffer_items if j not in seen]
        scores = self.score(prefix, pool)
        order = sorted(range(len(pool)), key=lambda i: (-scores[i], pool[i]))[:k]
        return [(pool[i], float(scores[i])) for i in order]


class ItemKNN(Baseline):
    name = "iknn"

    def __init__(self, lambda_reg: float = 20.0):
        self.lambda_reg = lambda_reg

    def fit(self, sessions):
        self.index = CooccurrenceIndex(sessions)
        return self

    def score(self, prefix, candidates):
        return iknn_score(prefix, candidates, self.index, self.lambda_reg)


class SessionKNN(Baseline):
    name = "sknn"

    def __init__(self, k_neighbors: int = 500):
        self.k_neighbors = k_neighbors

    def fit(self, sessions):
        self.index = SessionIndex(sessions)
        return self

    def score(self, prefix, candidates):
        return sknn_score(prefix, candidates, self.index, self.k_neighbors)


class VSessionKNN(SessionKNN):
    name = "vsknn"

    def score(self, prefix, candidates):
        return vsknn_score(prefix, candidates, self.index, self.k_neighbors)


BASELINES = {
    "pop": Pop,
    "ar": AssociationRules,
    "cs": ContentSimilarity,
    "iknn": ItemKNN,
    "sknn": SessionKNN,
    "vsknn": VSessionKNN,
}
