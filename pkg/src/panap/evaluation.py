"""Sampled-candidate ranking evaluation and the representation purity diagnostic."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, Instance, Session, expand_instances
from .errors import ArgumentError, DataIOError, UsageError
from .model import JobVectorCache, PanapModel, make_sampler, score_candidates, training_stream
from .sampling import UNIFORM, RecentBuffer

TIE_RULE = "descending score; ties broken by ascending job id (positive loses ties to smaller ids)"


def metric_hr(ranks: Sequence[int], k: int) -> float:
    r = np.asarray(ranks)
    return float(np.mean(r <= k)) if len(r) else 0.0


def metric_mrr(ranks: Sequence[int], k: int) -> float:
    r = np.asarray(ranks, dtype=np.float64)
    return float(np.mean(np.where(r <= k, 1.0 / r, 0.0))) if len(r) else 0.0


def metric_ndcg(ranks: Sequence[int], k: int) -> float:
    """Single relevant item, so the ideal DCG is 1."""
    r = np.asarray(ranks, dtype=np.float64)
    return float(np.mean(np.where(r <= k, 1.0 / np.log2(r + 1.0), 0.0))) if len(r) else 0.0


def rank_of_positive(positive: str, candidates: Sequence[str], scores: np.ndarray) -> int:
    """1-based rank of ``positive`` under the global tie rule."""
    pos = candidates.index(positive)
    s = scores[pos]
    better = 0
    for c, x in zip(candidates, scores):
        if x > s or (x == s and c < positive):
            better += 1
    return better + 1


@dataclass
class EvalReport:
    method: str
    ks: list[int]
    metrics: dict[int, dict[str, float]]
    n_instances: int
    fingerprint: dict = field(default_factory=dict)
    ranks: list[int] = field(default_factory=list)
    instances: list[Instance] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "instances": self.n_instances,
            "metrics": {
                f"@{k}": {m: round(v, 12) for m, v in self.metrics[k].items()} for k in self.ks
            },
            "tie_rule": TIE_RULE,
            "config": self.fingerprint,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, path, dump_ranks: bool = True) -> None:
        path = Path(path)
        path.write_text(self.to_json())
        if dump_ranks:
            rows = ["user_id\tsession_id\tprefix_length\tpositive\trank\tmethod"]
            for inst, r in zip(self.instances, self.ranks):
                rows.append(
                    f"{inst.user_id}\t{inst.session_id}\t{len(inst.prefix)}\t{inst.positive}\t{r}\t{self.method}"
                )
            path.with_suffix(".ranks.tsv").write_text("\n".join(rows) + "\n")

    def line(self, k: int) -> str:
        m = self.metrics[k]
        return f"{self.method}\tHR@{k}={m['hr']:.4f}\tMRR@{k}={m['mrr']:.4f}\tNDCG@{k}={m['ndcg']:.4f}"


def report_from_ranks(method, ranks, ks, instances=(), fingerprint=None) -> EvalReport:
    metrics = {
        k: {"hr": metric_hr(ranks, k), "mrr": metric_mrr(ranks, k), "ndcg": metric_ndcg(ranks, k)}
        for k in ks
    }
    return EvalReport(method, list(ks), metrics, len(ranks), dict(fingerprint or {}), list(ranks), list(instances))


def evaluation_instances(test_sessions: Sequence[Session]) -> list[Instance]:
    ordered = sorted(test_sessions, key=lambda s: (s.start, s.session_id))
    return expand_instances(ordered)


def evaluation_negatives(
    dataset: Dataset,
    instances: Sequence[Instance],
    n: int = 50,
    strategy: str = "S2",
    seed: int = 0,
    batch_size: int = 256,
    buffer_size: int = 5000,
) -> list[list[str]]:
    """Negatives for every instance, drawn over evaluation mini-batches.

    The buffer holds the last ``buffer_size`` training applications. Under
    ``uniform`` the pool is every job seen in training.
    """
    if not instances:
        raise UsageError("no evaluation instances (empty test set)")
    buffer = RecentBuffer(buffer_size, training_stream(dataset.train_sessions))
    pool = sorted(dataset.train_job_ids()) if strategy == UNIFORM else None
    sampler = make_sampler(dataset, strategy, n, buffer, pool)
    out: list[list[str]] = []
    for b, start in enumerate(range(0, len(instances), batch_size)):
        rng = np.random.default_rng([seed, b])
        out.extend(sampler.sample_batch(instances[start : start + batch_size], rng))
    return out


class PanapScorer:
    """Adapter giving a trained model the baselines' ``score_batch`` interface."""

    def __init__(self, model: PanapModel, cache: JobVectorCache | None = None, name: str = "panap"):
        self.model = model
        self.cache = cache or model.build_cache()
        self.name = name

    def score_batch(self, instances, candidate_lists) -> list[np.ndarray]:
        users = [i.user_id for i in instances]
        U = self.model.encode_sessions(users, [i.prefix for i in instances], self.cache)
        out = []
        for u, cands in zip(U, candidate_lists):
            mat = self.cache.matrix[[self.cache.row(c) for c in cands]]
            out.append(score_candidates(u, mat, self.model.config.temperature))
        return out


class OracleScorer:
    """Scores the true positive highest; a sanity check for the harness."""

    name = "oracle"

    def score_batch(self, instances, candidate_lists):
        return [np.array([1.0 if c == i.positive else 0.0 for c in cands]) for i, cands in zip(instances, candidate_lists)]


class RandomScorer:
    name = "random"

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def score_batch(self, instances, candidate_lists):
        return [self.rng.random(len(c)) for c in candidate_lists]


def rank_instances(method, instances, negatives, batch_size: int = 256, workers: int = 1) -> list[int]:
    """Rank each positive among itself plus its negatives."""
    cand_lists = [[inst.positive, *negs] for inst, negs in zip(instances, negatives)]
    chunks = [
        (instances[s : s + batch_size], cand_lists[s : s + batch_size])
        for s in range(0, len(instances), batch_size)
    ]

    def run(chunk):
        insts, cands = chunk
        scores = method.score_batch(insts, cands)
        return [rank_of_positive(i.positive, c, np.asarray(sc)) for i, c, sc in zip(insts, cands, scores)]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return [r for part in parts for r in part]


def evaluate(
    method,
    test_sessions: Sequence[Session],
    dataset: Dataset,
    ks: Sequence[int] = (5,),
    n_negatives: int = 50,
    strategy: str = "S2",
    seed: int = 0,
    batch_size: int = 256,
    buffer_size: int = 5000,
    workers: int = 1,
    fingerprint: dict | None = None,
) -> EvalReport:
    instances = evaluation_instances(test_sessions)
    if not instances:
        raise UsageError("empty test set: nothing to evaluate")
    negatives = evaluation_negatives(dataset, instances, n_negatives, strategy, seed, batch_size, buffer_size)
    ranks = rank_instances(method, instances, negatives, batch_size, workers)
    fp = {"seed": seed, "strategy": strategy, "n_negatives": n_negatives, **(fingerprint or {})}
    return report_from_ranks(getattr(method, "name", "method"), ranks, ks, instances, fp)


# ---------------------------------------------------------------------------
# k-NN label purity


@dataclass
class PurityReport:
    label_field: str
    k: int
    agreement: float
    n_points: int
    per_label: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "label": self.label_field,
                "k": self.k,
                "agreement": round(self.agreement, 12),
                "points": self.n_points,
                "per_label": {k: round(v, 12) for k, v in sorted(self.per_label.items())},
            },
            indent=2,
            sort_keys=True,
        ) + "\n"


def knn_label_purity(
    embeddings: Mapping[str, np.ndarray],
    labels: Mapping[str, str],
    k: int = 10,
    label_field: str = "label",
) -> PurityReport:
    """Mean fraction of each point's k cosine-nearest neighbors sharing its label.

    A point is never its own neighbor; equal similarities are broken by
    insertion order of ``embeddings``.
    """
    ids = [i for i in embeddings if i in labels]
    if k < 1 or len(ids) < k + 1:
        raise ArgumentError(f"need at least k+1={k + 1} labelled points, got {len(ids)}")
    X = np.vstack([np.asarray(embeddings[i], dtype=np.float64) for i in ids])
    norms = np.linalg.norm(X, axis=1)
    X = X / np.where(norms < 1e-12, 1.0, norms)[:, None]
    X[norms < 1e-12] = 0.0
    lab = np.array([labels[i] for i in ids])
    agree = np.empty(len(ids))
    for start in range(0, len(ids), 512):
        S = X[start : start + 512] @ X.T
        rows = np.arange(S.shape[0])
        S[rows, start + rows] = -np.inf
        nn = np.argsort(-S, axis=1, kind="stable")[:, :k]
        agree[start : start + S.shape[0]] = (lab[nn] == lab[start : start + S.shape[0], None]).mean(axis=1)
    per_label = {str(l): float(agree[lab == l].mean()) for l in np.unique(lab)}
    return PurityReport(label_field, k, float(agree.mean()), len(ids), per_label)


def session_embeddings(model: PanapModel, sessions: Sequence[Session], cache: JobVectorCache | None = None, batch: int = 512):
    """Seeker vectors of whole sessions, keyed by session id."""
    cache = cache or model.build_cache()
    out = {}
    for s in range(0, len(sessions), batch):
        chunk = sessions[s : s + batch]
        U = model.encode_sessions([x.user_id for x in chunk], [x.job_ids for x in chunk], cache)
        for x, u in zip(chunk, U):
            out[x.session_id] = u
    return out
