import numpy as np
import pytest

from panap.data import ApplicationEvent, Dataset, Instance, Job, JobSeeker, Session
from panap.model import ModelConfig, PanapModel, build_vocabs
from panap.text import EncoderSpec, encode_catalog


def toy_dataset(rng, n_jobs=8, n_users=4, n_cities=12):
    """Small random corpus; ``n_cities`` > 10 exercises the trainable-embedding path."""
    states = ["TX", "GA", "CA"]
    catalog = {}
    for i in range(n_jobs):
        jid = f"J{i:02d}"
        tokens = tuple(f"w{x}" for x in rng.integers(0, 20, 5))
        catalog[jid] = Job(jid, tokens, f"C{rng.integers(n_cities)}", states[rng.integers(3)], "US")
    seekers = {
        f"U{u}": JobSeeker(f"U{u}", f"C{rng.integers(n_cities)}", states[rng.integers(3)], "US",
                           ["BS", "MS"][rng.integers(2)], f"M{rng.integers(12)}")
        for u in range(n_users)
    }
    ids = list(catalog)
    sessions = []
    for k in range(2 * n_users):
        user = f"U{k % n_users}"
        jobs = rng.choice(ids, int(rng.integers(2, 5)), replace=False)
        events = tuple(ApplicationEvent(user, str(j), 1000 * k + t) for t, j in enumerate(jobs))
        sessions.append(Session(f"{user}#{1000 * k}", user, events))
    return Dataset(catalog, seekers, sessions, [])


def toy_model(seed=0, dropout=0.0, **overrides):
    rng = np.random.default_rng(seed)
    ds = toy_dataset(rng)
    dims = dict(
        d=int(rng.integers(2, 9)),
        d_j=int(rng.integers(2, 9)),
        d_s=int(rng.integers(2, 9)),
        d_q=int(rng.integers(2, 9)),
        meta_embed_dim=int(rng.integers(2, 9)),
        fc_hidden=int(rng.integers(2, 9)),
    )
    config = ModelConfig(dropout=dropout, temperature=float(rng.uniform(1, 5)), **{**dims, **overrides})
    vectors, _ = encode_catalog(ds.catalog, EncoderSpec(d=config.d))
    model = PanapModel.initialize(config, build_vocabs(ds.catalog, ds.seekers, ds.train_sessions), seed)
    model.attach(ds.catalog, ds.seekers, vectors)
    return model, ds, rng


def toy_batch(ds, rng, n=2, k=3):
    """Instances with prefixes of at most 3 jobs and ``k`` negatives each."""
    ids = sorted(ds.catalog)
    users = sorted(ds.seekers)
    batch, negs = [], []
    for _ in range(n):
        picks = [str(x) for x in rng.choice(ids, int(rng.integers(2, 5)), replace=False)]
        prefix, pos = tuple(picks[:-1]), picks[-1]
        pool = [j for j in ids if j != pos and j not in prefix]
        batch.append(Instance(users[rng.integers(len(users))], prefix, pos))
        negs.append([str(x) for x in rng.choice(pool, k, replace=False)])
    return batch, negs


@pytest.fixture
def toy():
    return toy_model


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
