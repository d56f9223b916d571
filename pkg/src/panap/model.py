"""The PANAP network.

Job side: text vector and metadata embeddings are concatenated and fused by two
dense layers (leaky ReLU, then tanh) into a job vector. Seeker side: the
session's job vectors are pooled with attention whose query comes from the
seeker's identifier embedding, the pooled vector is concatenated with the
seeker's metadata and fused the same way. Candidates are scored by cosine
similarity (times a temperature) and trained with a softmax over the positive
and its sampled negatives.

Everything is computed on row-stacked batches: a mini-batch's distinct jobs
are encoded once, and session prefixes are handled as flat segments.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tape, Tensor
from .data import UNKNOWN, Dataset, Instance, Job, JobSeeker, expand_instances
from .errors import ArgumentError, DataError, NumericError, SamplingError, SchemaError, UsageError
from .sampling import S1, S2, NegativeSampler, RecentBuffer
from .text import EncoderSpec, encode_hashed_bow

log = logging.getLogger(__name__)

PERSONALIZED = "personalized"
VANILLA = "vanilla"
AVERAGE = "average"
ATTENTION_MODES = (PERSONALIZED, VANILLA, AVERAGE)

JOB_META_FIELDS = ("city", "state", "country")
SEEKER_META_FIELDS = ("city", "state", "country", "degree", "major")
EMBED_SCALE = 0.05


@dataclass
class ModelConfig:
    d: int = 300
    d_j: int = 300
    d_s: int = 100
    d_q: int = 100
    meta_embed_dim: int = 32
    onehot_cardinality_cap: int = 10
    attention: str = PERSONALIZED
    use_job_meta: bool = True
    use_seeker_meta: bool = True
    use_content: bool = True
    use_job_id_embedding: bool = False
    dropout: float = 0.2
    l2: float = 1e-4
    temperature: float = 1.0
    fc_hidden: int | None = None
    leaky_slope: float = 0.01
    hash_seed: int = 0
    use_idf: bool = False

    @property
    def d_u(self) -> int:
        return self.d_j

    @property
    def hidden(self) -> int:
        return self.fc_hidden or self.d_j

    def validate(self) -> None:
        for name in ("d", "d_j", "d_s", "d_q", "meta_embed_dim"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be >= 1")
        if self.attention not in ATTENTION_MODES:
            raise UsageError(f"unknown attention mode {self.attention!r}")
        if not (self.use_content or self.use_job_meta or self.use_job_id_embedding):
            raise UsageError("job encoder has no inputs: enable content, job metadata or job id")
        if not 0.0 <= self.dropout < 1.0:
            raise UsageError(f"dropout must be in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainConfig:
    batch_size: int = 256
    k_train_negatives: int = 15
    n_eval_negatives: int = 50
    epochs: int = 10
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    sampling_strategy: str = S2
    buffer_size: int = 5000

    def validate(self) -> None:
        if self.k_train_negatives < 1 or self.n_eval_negatives < 1:
            raise UsageError("negative counts must be >= 1")
        if self.batch_size < 1 or self.epochs < 0:
            raise UsageError("batch_size must be >= 1 and epochs >= 0")
        if self.sampling_strategy not in (S1, S2):
            raise UsageError(f"training strategy must be S1 or S2, got {self.sampling_strategy!r}")

    def to_dict(self) -> dict:
        return asdict(self)


class Vocab:
    """Value -> row index. Row 0 is the shared UNKNOWN row."""

    def __init__(self, values=()):
        self.items = [UNKNOWN] + sorted({v for v in values if v != UNKNOWN})
        self.index = {v: i for i, v in enumerate(self.items)}

    @classmethod
    def from_items(cls, items: Sequence[str]) -> "Vocab":
        v = cls()
        v.items = list(items)
        v.index = {x: i for i, x in enumerate(v.items)}
        return v

    def get(self, value: str) -> int:
        return self.index.get(value, 0)

    @property
    def cardinality(self) -> int:
        return len(self.items) - 1

    def __len__(self) -> int:
        return len(self.items)


def build_vocabs(catalog: Mapping[str, Job], seekers: Mapping[str, JobSeeker], train_sessions) -> dict[str, Vocab]:
    jobs = sorted({e.job_id for s in train_sessions for e in s.events})
    users = sorted({s.user_id for s in train_sessions})
    vocabs = {"user": Vocab(users), "job": Vocab(jobs)}
    for f in JOB_META_FIELDS:
        vocabs[f"job.{f}"] = Vocab(getattr(catalog[j], f) for j in jobs if j in catalog)
    for f in SEEKER_META_FIELDS:
        vocabs[f"seeker.{f}"] = Vocab(getattr(seekers[u], f) for u in users if u in seekers)
    return vocabs


def _uniform(rng, shape, bound):
    return rng.uniform(-bound, bound, size=shape)


class PanapModel:
    """Parameters and vocabularies, plus feature tables attached from a catalog."""

    def __init__(self, config: ModelConfig, vocabs: dict[str, Vocab], store: ParameterStore):
        config.validate()
        self.config = config
        self.vocabs = vocabs
        self.store = store
        self.job_ids: list[str] = []
        self.job_row: dict[str, int] = {}
        self.seekers: dict[str, JobSeeker] = {}

    # -- construction -----------------------------------------------------

    @classmethod
    def initialize(cls, config: ModelConfig, vocabs: dict[str, Vocab], seed: int) -> "PanapModel":
        config.validate()
        store = ParameterStore()
        model = cls(config, vocabs, store)

        def rng_for(name):
            return np.random.default_rng([seed, zlib.crc32(name.encode())])

        def dense(prefix, fan_in, fan_out):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            store.add(f"{prefix}.W", _uniform(rng_for(prefix + ".W"), (fan_out, fan_in), bound))
            store.add(f"{prefix}.b", np.zeros(fan_out), decay=False)

        def embedding(name, rows, dim):
            store.add(name, _uniform(rng_for(name), (rows, dim), EMBED_SCALE))

        c = config
        for side, fields, on in (
            ("job", JOB_META_FIELDS, c.use_job_meta),
            ("seeker", SEEKER_META_FIELDS, c.use_seeker_meta),
        ):
            if not on:
                continue
            for f in fields:
                if not model._onehot(f"{side}.{f}"):
                    embedding(f"{side}.meta.{f}", len(vocabs[f"{side}.{f}"]), c.meta_embed_dim)
        if c.use_job_id_embedding:
            embedding("job.id", len(vocabs["job"]), c.meta_embed_dim)
        dense("job.fc1", model.job_input_dim, c.hidden)
        dense("job.fc2", c.hidden, c.d_j)
        dense("seeker.fc1", c.d_j + model.meta_dim("seeker"), c.hidden)
        dense("seeker.fc2", c.hidden, c.d_u)
        if c.attention == PERSONALIZED:
            embedding("user.id", len(vocabs["user"]), c.d_s)
            dense("query", c.d_s, c.d_q)
            dense("attn", c.d_q, c.d_j)
        elif c.attention == VANILLA:
            store.add("attn.query", _uniform(rng_for("attn.query"), (c.d_j,), EMBED_SCALE), decay=False)
        return model

    def _onehot(self, vocab_name: str) -> bool:
        return self.vocabs[vocab_name].cardinality <= self.config.onehot_cardinality_cap

    def field_width(self, side: str, f: str) -> int:
        name = f"{side}.{f}"
        return len(self.vocabs[name]) if self._onehot(name) else self.config.meta_embed_dim

    def meta_dim(self, side: str) -> int:
        on = self.config.use_job_meta if side == "job" else self.config.use_seeker_meta
        if not on:
            return 0
        fields = JOB_META_FIELDS if side == "job" else SEEKER_META_FIELDS
        return sum(self.field_width(side, f) for f in fields)

    @property
    def job_input_dim(self) -> int:
        c = self.config
        return (
            (c.d if c.use_content else 0)
            + self.meta_dim("job")
            + (c.meta_embed_dim if c.use_job_id_embedding else 0)
        )

    def encoder_spec(self, idf_table=None) -> EncoderSpec:
        return EncoderSpec(d=self.config.d, hash_seed=self.config.hash_seed, idf_table=idf_table)

    def attach(self, catalog: Mapping[str, Job], seekers: Mapping[str, JobSeeker], text_vectors) -> None:
        """Build the per-job feature tables the forward pass indexes into."""
        self.catalog = dict(catalog)
        self.job_ids = list(catalog)
        self.job_row = {j: i for i, j in enumerate(self.job_ids)}
        d = self.config.d
        self.text = np.zeros((len(self.job_ids), d))
        for i, j in enumerate(self.job_ids):
            v = np.asarray(text_vectors[j], dtype=np.float64)
            if v.shape != (d,):
                raise DataError(f"text vector for {j!r} has shape {v.shape}, expected ({d},)")
            self.text[i] = v
        self.job_meta_idx = {
            f: np.array([self.vocabs[f"job.{f}"].get(getattr(catalog[j], f)) for j in self.job_ids], dtype=np.intp)
            for f in JOB_META_FIELDS
        }
        self.job_id_idx = np.array([self.vocabs["job"].get(j) for j in self.job_ids], dtype=np.intp)
        self.seekers = dict(seekers)

    # -- building blocks ----------------------------------------------------

    def _meta_block(self, side: str, f: str, idx) -> Tensor:
        name = f"{side}.{f}"
        if self._onehot(name):
            return ad.constant(np.eye(len(self.vocabs[name]))[idx])
        return ad.gather_rows(self.store.leaf(f"{side}.meta.{f}"), idx)

    def embed_metadata(self, side: str, attrs: Sequence[tuple[str, str]]) -> np.ndarray:
        """Concatenated metadata vector for one entity, fields in the given order."""
        allowed = JOB_META_FIELDS if side == "job" else SEEKER_META_FIELDS
        parts = []
        for f, value in attrs:
            if f not in allowed:
                raise SchemaError(f"unknown {side} metadata field {f!r}")
            idx = np.array([self.vocabs[f"{side}.{f}"].get(value)])
            parts.append(self._meta_block(side, f, idx).value[0])
        return np.concatenate(parts) if parts else np.zeros(0)

    def _dropout(self, x: Tensor, rng) -> Tensor:
        if rng is None or self.config.dropout == 0.0:
            return x
        return ad.mul_const(x, ad.dropout_mask(x.shape, self.config.dropout, rng))

    def _fuse(self, prefix: str, x: Tensor, rng) -> Tensor:
        s = self.store
        h = ad.dense_forward(
            self._dropout(x, rng), s.leaf(f"{prefix}.fc1.W"), s.leaf(f"{prefix}.fc1.b"),
            "leaky_relu", self.config.leaky_slope,
        )
        return ad.dense_forward(
            self._dropout(h, rng), s.leaf(f"{prefix}.fc2.W"), s.leaf(f"{prefix}.fc2.b"), "tanh"
        )

    def _job_input(self, text: np.ndarray, meta_idx: Mapping[str, np.ndarray], id_idx: np.ndarray) -> Tensor:
        c = self.config
        parts = []
        if c.use_content:
            parts.append(ad.constant(text))
        if c.use_job_meta:
            parts.extend(self._meta_block("job", f, meta_idx[f]) for f in JOB_META_FIELDS)
        if c.use_job_id_embedding:
            parts.append(ad.gather_rows(self.store.leaf("job.id"), id_idx))
        return ad.concat(parts)

    def job_vectors(self, rows, rng=None) -> Tensor:
        """Job vectors for rows of the attached job table (dropout only when ``rng``)."""
        rows = np.asarray(rows, dtype=np.intp)
        x = self._job_input(
            self.text[rows], {f: a[rows] for f, a in self.job_meta_idx.items()}, self.job_id_idx[rows]
        )
        return self._fuse("job", x, rng)

    def job_content_vector(self, job: Job, text_vector: np.ndarray | None = None) -> np.ndarray:
        """Inference-mode vector for any job, including ones outside the attached table."""
        if text_vector is None:
            text_vector = encode_hashed_bow(job.tokens, self.encoder_spec())
        meta = {f: np.array([self.vocabs[f"job.{f}"].get(getattr(job, f))]) for f in JOB_META_FIELDS}
        x = self._job_input(
            np.asarray(text_vector, dtype=np.float64)[None, :], meta, np.array([self.vocabs["job"].get(job.job_id)])
        )
        return self._fuse("job", x, None).value[0]

    def _user_rows(self, user_ids: Sequence[str]) -> np.ndarray:
        return np.array([self.vocabs["user"].get(u) for u in user_ids], dtype=np.intp)

    def preference_query(self, user_ids: Sequence[str]) -> Tensor:
        """Personalized query vectors ``tanh(Wa relu(Wq e_u + bq) + ba)``, one row per user."""
        s = self.store
        e = ad.gather_rows(s.leaf("user.id"), self._user_rows(user_ids))
        q = ad.dense_forward(e, s.leaf("query.W"), s.leaf("query.b"), "relu")
        return ad.dense_forward(q, s.leaf("attn.W"), s.leaf("attn.b"), "tanh")

    def _seeker_meta(self, user_ids: Sequence[str]) -> Tensor | None:
        if not self.config.use_seeker_meta:
            return None
        parts = []
        for f in SEEKER_META_FIELDS:
            vocab = self.vocabs[f"seeker.{f}"]
            idx = np.array(
                [vocab.get(getattr(self.seekers.get(u) or JobSeeker(u), f)) for u in user_ids],
                dtype=np.intp,
            )
            parts.append(self._meta_block("seeker", f, idx))
        return ad.concat(parts)

    def attention(self, rows: Tensor, seg: np.ndarray, n: int, user_ids: Sequence[str]) -> Tensor:
        """Per-entry attention weights for flat session entries grouped by ``seg``."""
        mode = self.config.attention
        if mode == AVERAGE:
            counts = np.bincount(seg, minlength=n)
            return ad.constant(1.0 / counts[seg])
        if mode == PERSONALIZED:
            p = self.preference_query(user_ids)
            logits = ad.rowdot(rows, ad.gather_rows(p, seg))
        else:
            q = ad.reshape(self.store.leaf("attn.query"), (1, self.config.d_j))
            logits = ad.rowdot(rows, ad.gather_rows(q, np.zeros(len(seg), dtype=np.intp)))
        return ad.segment_softmax(logits, seg, n)

    def seeker_vectors(
        self, job_vecs: Tensor, flat_idx, seg, user_ids: Sequence[str], rng=None
    ) -> Tensor:
        """Seeker vectors for ``len(user_ids)`` sessions.

        ``flat_idx[e]`` is the row of ``job_vecs`` for entry ``e`` and
        ``seg[e]`` the session it belongs to.
        """
        n = len(user_ids)
        seg = np.asarray(seg, dtype=np.intp)
        if n == 0 or np.bincount(seg, minlength=n).min() == 0:
            raise ArgumentError("every session must contain at least one job")
        rows = ad.gather_rows(job_vecs, flat_idx)
        alpha = self.attention(rows, seg, n, user_ids)
        h = ad.segment_sum(ad.scale_rows(rows, alpha), seg, n)
        meta = self._seeker_meta(user_ids)
        x = h if meta is None else ad.concat([h, meta])
        return self._fuse("seeker", x, rng)

    # -- loss -----------------------------------------------------------------

    def _local_rows(self, job_ids: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.job_row[j] for j in job_ids], dtype=np.intp)
        except KeyError as exc:
            raise DataError(f"job {exc.args[0]!r} is not in the model's catalog") from None

    def batch_loss(self, batch: Sequence[Instance], negatives: Sequence[Sequence[str]], rng=None) -> Tensor:
        """Mean of ``-log P(positive)`` over the batch; every row needs the same k."""
        ks = {len(n) for n in negatives}
        if len(ks) != 1:
            raise SamplingError("all instances in a batch need the same number of negatives")
        for inst, negs in zip(batch, negatives):
            if inst.positive in negs:
                raise SamplingError(f"positive {inst.positive!r} also sampled as a negative")
        k = ks.pop()
        local: dict[str, int] = {}
        for inst, negs in zip(batch, negatives):
            for j in (*inst.prefix, inst.positive, *negs):
                local.setdefault(j, len(local))
        V = self.job_vectors(self._local_rows(list(local)), rng)
        flat = [local[j] for inst in batch for j in inst.prefix]
        seg = [i for i, inst in enumerate(batch) for _ in inst.prefix]
        users = [inst.user_id for inst in batch]
        U = self.seeker_vectors(V, flat, seg, users, rng)
        cand = [local[j] for inst, negs in zip(batch, negatives) for j in (inst.positive, *negs)]
        C = ad.gather_rows(V, cand)
        Urep = ad.gather_rows(U, np.repeat(np.arange(len(batch)), k + 1))
        scores = ad.mul_const(ad.cosine(Urep, C), self.config.temperature)
        logits = ad.reshape(scores, (len(batch), k + 1))
        return ad.softmax_cross_entropy(logits, np.zeros(len(batch), dtype=np.intp))

    def training_loss(self, instance: Instance, negatives: Sequence[str]) -> Tensor:
        return self.batch_loss([instance], [list(negatives)])

    # -- inference ------------------------------------------------------------

    def build_cache(self, job_ids: Sequence[str] | None = None) -> "JobVectorCache":
        ids = list(self.vocabs["job"].items[1:]) if job_ids is None else list(job_ids)
        ids = [j for j in ids if j in self.job_row]
        vecs = self.job_vectors(self._local_rows(ids)).value if ids else np.zeros((0, self.config.d_j))
        return JobVectorCache(self, ids, vecs)

    def encode_sessions(
        self, user_ids: Sequence[str], prefixes: Sequence[Sequence[str]], cache: "JobVectorCache"
    ) -> np.ndarray:
        flat, seg = [], []
        for i, p in enumerate(prefixes):
            for j in p:
                flat.append(cache.row(j))
                seg.append(i)
        V = ad.constant(cache.matrix)
        return self.seeker_vectors(V, flat, seg, user_ids).value


def score_candidates(v_u: np.ndarray, candidates: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """``temperature * cos(v_u, v_j)`` for each candidate row."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if candidates.shape[0] == 0:
        raise ArgumentError("no candidates to score")
    u = np.broadcast_to(np.asarray(v_u, dtype=np.float64), candidates.shape)
    return ad.cosine(ad.constant(u), ad.constant(candidates)).value * temperature


def attention_weights(session_vectors, p, mode: str = PERSONALIZED) -> np.ndarray:
    """Attention over one session's job vectors given a query vector ``p``."""
    rows = np.atleast_2d(np.asarray(session_vectors, dtype=np.float64))
    n = rows.shape[0]
    if n == 0 or rows.size == 0:
        raise ArgumentError("attention over an empty session")
    if mode == AVERAGE:
        return np.full(n, 1.0 / n)
    logits = rows @ np.asarray(p, dtype=np.float64)
    return ad.segment_softmax(ad.constant(logits), np.zeros(n, dtype=np.intp), 1).value


class JobVectorCache:
    """Job vectors computed from one parameter version; new jobs can be inserted."""

    def __init__(self, model: PanapModel, job_ids: list[str], matrix: np.ndarray):
        self.model = model
        self.job_ids = list(job_ids)
        self.index = {j: i for i, j in enumerate(self.job_ids)}
        self.matrix = np.array(matrix, dtype=np.float64).reshape(len(self.job_ids), model.config.d_j)
        self.version = model.store.step

    @property
    def stale(self) -> bool:
        return self.version != self.model.store.step

    def __contains__(self, job_id: str) -> bool:
        return job_id in self.index

    def __len__(self) -> int:
        return len(self.job_ids)

    def row(self, job_id: str) -> int:
        if job_id not in self.index:
            if job_id in self.model.job_row:
                vec = self.model.job_vectors([self.model.job_row[job_id]]).value[0]
                self._append(job_id, vec)
            else:
                raise DataError(f"job {job_id!r} is not in the catalog")
        return self.index[job_id]

    def vector(self, job_id: str) -> np.ndarray:
        return self.matrix[self.row(job_id)]

    def _append(self, job_id: str, vec: np.ndarray) -> None:
        self.index[job_id] = len(self.job_ids)
        self.job_ids.append(job_id)
        self.matrix = np.vstack([self.matrix, vec[None, :]])

    def insert(self, job: Job, text_vector: np.ndarray | None = None) -> np.ndarray:
        """Encode a job from its content and metadata alone and make it rankable."""
        vec = self.model.job_content_vector(job, text_vector)
        if job.job_id in self.index:
            self.matrix[self.index[job.job_id]] = vec
        else:
            self._append(job.job_id, vec)
        return vec


def rank_order(job_ids: Sequence[str], scores: np.ndarray) -> list[int]:
    """Indices sorted by descending score, ties by ascending job id."""
    return sorted(range(len(job_ids)), key=lambda i: (-scores[i], job_ids[i]))


def recommend_topk(
    model: PanapModel,
    cache: JobVectorCache,
    user_id: str,
    prefix: Sequence[str],
    k: int,
    candidates: Sequence[str] | None = None,
) -> list[tuple[str, float]]:
    for j in prefix:
        if j not in cache and j not in model.job_row:
            raise DataError(f"session job {j!r} is not in the catalog")
    if candidates is None:
        seen = set(prefix)
        candidates = [j for j in cache.job_ids if j not in seen]
    if not candidates:
        return []
    v_u = model.encode_sessions([user_id], [list(prefix)], cache)[0]
    mat = np.vstack([cache.vector(j) for j in candidates])
    scores = score_candidates(v_u, mat, model.config.temperature)
    order = rank_order(candidates, scores)[:k]
    return [(candidates[i], float(scores[i])) for i in order]


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainResult:
    model: PanapModel
    history: list[float] = field(default_factory=list)
    cache: JobVectorCache | None = None


def training_stream(sessions) -> list[str]:
    """Training applications in time order (ties by session then position)."""
    events = [(e.timestamp, k, i, e.job_id) for k, s in enumerate(sessions) for i, e in enumerate(s.events)]
    events.sort()
    return [e[3] for e in events]


def make_sampler(dataset: Dataset, strategy: str, k: int, buffer: RecentBuffer, pool=None) -> NegativeSampler:
    return NegativeSampler(
        strategy,
        k,
        buffer,
        seeker_state={u: s.state for u, s in dataset.seekers.items()},
        job_state={j: job.state for j, job in dataset.catalog.items()},
        pool=pool,
    )


def train(
    dataset: Dataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
    text_vectors: Mapping[str, np.ndarray],
    on_epoch=None,
) -> TrainResult:
    """Mini-batch Adam training over all session prefixes.

    The recent-jobs buffer starts with the tail of the chronological training
    stream and then follows the positives of each processed batch.
    """
    model_config.validate()
    train_config.validate()
    instances = expand_instances(dataset.train_sessions)
    if not instances:
        raise UsageError("training set has no instances (no session with two or more jobs)")
    tc = train_config
    init_ss, shuffle_ss, sample_ss, drop_ss = np.random.SeedSequence(tc.seed).spawn(4)
    vocabs = build_vocabs(dataset.catalog, dataset.seekers, dataset.train_sessions)
    model = PanapModel.initialize(model_config, vocabs, int(init_ss.generate_state(1)[0]))
    model.attach(dataset.catalog, dataset.seekers, text_vectors)

    buffer = RecentBuffer(tc.buffer_size, training_stream(dataset.train_sessions))
    sampler = make_sampler(dataset, tc.sampling_strategy, tc.k_train_negatives, buffer)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    sample_rng = np.random.default_rng(sample_ss)
    drop_rng = np.random.default_rng(drop_ss) if model_config.dropout > 0 else None

    history: list[float] = []
    for epoch in range(tc.epochs):
        order = shuffle_rng.permutation(len(instances))
        total = 0.0
        for start in range(0, len(order), tc.batch_size):
            batch = [instances[i] for i in order[start : start + tc.batch_size]]
            negatives = sampler.sample_batch(batch, sample_rng)
            with Tape() as tape:
                loss = model.batch_loss(batch, negatives, drop_rng)
                grads = ad.reverse_accumulate(tape, loss, model.store)
            value = float(loss.value)
            if not np.isfinite(value):
                raise NumericError(f"loss became non-finite in epoch {epoch + 1}")
            total += value * len(batch)
            ad.adam_step(model.store, grads, tc.lr, tc.beta1, tc.beta2, tc.adam_eps, model_config.l2)
            buffer.extend(inst.positive for inst in batch)
        history.append(total / len(instances))
        log.info("epoch %d mean loss %.6f", epoch + 1, history[-1])
        if on_epoch is not None:
            on_epoch(epoch + 1, history[-1])
    return TrainResult(model, history, model.build_cache())
