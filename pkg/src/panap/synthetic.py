"""Synthetic job-application corpora with planted topic and location structure.

Jobs carry one topic and one (state, city); seekers carry a home location and
a major equal to their primary topic. Applications prefer the seeker's topic
and, independently, the seeker's state (and city), mimicking the strong
same-state bias of real application logs.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import GAP_SPLIT, ApplicationEvent, Dataset, Job, JobSeeker, prepare_dataset
from .errors import GenerationError

BASE_EPOCH = 1_333_238_400  # 2012-04-01T00:00:00Z
DEGREES = ("HS", "ASSOC", "BACHELOR", "MASTER", "PHD")


@dataclass(frozen=True)
class SynthConfig:
    n_topics: int = 8
    n_states: int = 4
    cities_per_state: int = 5
    n_jobs: int = 2000
    n_users: int = 3000
    mean_sessions_per_user: float = 2.0
    mean_session_length: float = 2.5
    max_session_length: int = 10
    p_same_state: float = 0.93
    p_same_city: float = 0.40
    p_topic_match: float = 0.85
    secondary_topic_weight: float = 0.0
    session_topic: bool = False
    vocab_per_topic: int = 40
    noise_vocab: int = 200
    tokens_per_job: int = 30
    topic_token_share: float = 0.6
    span_days: int = 91
    mode: str = GAP_SPLIT
    gap_minutes: int = 30
    test_days: int = 14

    def to_dict(self) -> dict:
        return asdict(self)


def _state(s: int) -> str:
    return f"S{s:02d}"


def _city(s: int, c: int) -> str:
    return f"S{s:02d}C{c:02d}"


def _topic(t: int) -> str:
    return f"topic{t:02d}"


def synthesize_events(config: SynthConfig, seed: int):
    """Draw ``(catalog, seekers, events)`` for ``config``; deterministic in ``seed``."""
    cfg = config
    rng = np.random.default_rng(seed)
    n_cells = cfg.n_topics * cfg.n_states * cfg.cities_per_state

    # Every (topic, state, city) cell gets one job before the rest are placed at random.
    cells = np.arange(n_cells) if cfg.n_jobs >= n_cells else np.array([], int)
    rest = rng.integers(0, n_cells, size=cfg.n_jobs - len(cells))
    cell_of = np.concatenate([cells, rest]).astype(int)
    rng.shuffle(cell_of)

    catalog: dict[str, Job] = {}
    by_cell: dict[tuple[int, int, int], list[str]] = {}
    per_state = cfg.cities_per_state
    for i, cell in enumerate(cell_of):
        t, rem = divmod(int(cell), cfg.n_states * per_state)
        s, c = divmod(rem, per_state)
        n_topic = rng.binomial(cfg.tokens_per_job, cfg.topic_token_share)
        words = [f"t{t}w{w}" for w in rng.integers(0, cfg.vocab_per_topic, n_topic)]
        words += [f"n{w}" for w in rng.integers(0, cfg.noise_vocab, cfg.tokens_per_job - n_topic)]
        job_id = f"J{i:06d}"
        catalog[job_id] = Job(job_id, tuple(words), _city(s, c), _state(s), "US", _topic(t))
        by_cell.setdefault((t, s, c), []).append(job_id)

    def pool(t: int, states, cities_fn) -> list[str]:
        out = []
        for s in states:
            for c in cities_fn(s):
                out.extend(by_cell.get((t, s, c), []))
        return out

    for t in range(cfg.n_topics):
        for s in range(cfg.n_states):
            if not pool(t, [s], lambda _s: range(per_state)):
                raise GenerationError(f"no jobs in cell topic={_topic(t)} state={_state(s)}")

    seekers: dict[str, JobSeeker] = {}
    events: list[ApplicationEvent] = []
    pools: dict[tuple, list[str]] = {}
    all_states = range(cfg.n_states)
    for u in range(cfg.n_users):
        user_id = f"U{u:06d}"
        primary = int(rng.integers(cfg.n_topics))
        secondary = primary
        if cfg.secondary_topic_weight > 0 and cfg.n_topics > 1:
            secondary = int((primary + 1 + rng.integers(cfg.n_topics - 1)) % cfg.n_topics)
        home_s = int(rng.integers(cfg.n_states))
        home_c = int(rng.integers(per_state))
        seekers[user_id] = JobSeeker(
            user_id,
            _city(home_s, home_c),
            _state(home_s),
            "US",
            DEGREES[int(rng.integers(len(DEGREES)))],
            f"major{primary:02d}",
        )
        n_sessions = 1 + int(rng.poisson(max(cfg.mean_sessions_per_user - 1, 0)))
        n_sessions = min(n_sessions, cfg.span_days)
        days = np.sort(rng.choice(cfg.span_days, size=n_sessions, replace=False))
        for day in days:
            length = 2 + int(rng.poisson(max(cfg.mean_session_length - 2, 0)))
            length = min(length, cfg.max_session_length)
            # Sessions start before 18:00 and gaps are at most 20 minutes, so a
            # session never spills into the next day's session.
            ts = BASE_EPOCH + int(day) * 86400 + int(rng.integers(0, 18 * 3600))
            chosen: set[str] = set()
            focus = primary
            if cfg.session_topic and rng.random() < cfg.secondary_topic_weight:
                focus = secondary
            for k in range(length):
                if k:
                    ts += int(rng.integers(60, 20 * 60 + 1))
                if rng.random() < cfg.p_topic_match:
                    if cfg.session_topic:
                        t = focus
                    else:
                        t = secondary if rng.random() < cfg.secondary_topic_weight else primary
                else:
                    t = int(rng.integers(cfg.n_topics))
                if cfg.n_states == 1 or rng.random() < cfg.p_same_state:
                    if per_state == 1 or rng.random() < cfg.p_same_city:
                        key = (t, "city", home_s, home_c)
                        if key not in pools:
                            pools[key] = pool(t, [home_s], lambda _s: [home_c])
                    else:
                        key = (t, "state", home_s, home_c)
                        if key not in pools:
                            pools[key] = pool(
                                t, [home_s], lambda _s: [c for c in range(per_state) if c != home_c]
                            )
                else:
                    key = (t, "other", home_s)
                    if key not in pools:
                        pools[key] = pool(t, [s for s in all_states if s != home_s], lambda _s: range(per_state))
                cand = pools[key]
                if not cand:
                    raise GenerationError(f"no jobs in cell {key}")
                job = cand[int(rng.integers(len(cand)))]
                for _ in range(3):
                    if job not in chosen:
                        break
                    job = cand[int(rng.integers(len(cand)))]
                chosen.add(job)
                events.append(ApplicationEvent(user_id, job, ts))
    return catalog, seekers, events


def generate_synthetic(config: SynthConfig | None = None, seed: int = 0) -> Dataset:
    config = config or SynthConfig()
    catalog, seekers, events = synthesize_events(config, seed)
    ds = prepare_dataset(
        catalog, seekers, events, config.mode, config.gap_minutes, config.test_days
    )
    ds.info["synthetic"] = {"seed": seed, **config.to_dict()}
    return ds
