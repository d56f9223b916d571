"""Entity tables, application logs and session construction."""

from __future__ import annotations

import csv
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

from .errors import DataError, DataIOError, SchemaError, UsageError

UNKNOWN = "UNKNOWN"
GAP_SPLIT = "gap_split"
PER_USER = "per_user"
MODES = (GAP_SPLIT, PER_USER)

JOB_COLUMNS = ("job_id", "title", "description", "requirements", "city", "state", "country")
SEEKER_COLUMNS = ("user_id", "city", "state", "country", "degree", "major")
APPLICATION_COLUMNS = ("user_id", "job_id", "timestamp")
SCHEMAS = {"jobs": JOB_COLUMNS, "seekers": SEEKER_COLUMNS, "applications": APPLICATION_COLUMNS}

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


@dataclass(frozen=True)
class Job:
    job_id: str
    tokens: tuple[str, ...]
    city: str = UNKNOWN
    state: str = UNKNOWN
    country: str = UNKNOWN
    topic: str = ""  # ground-truth label, only known for synthetic corpora


@dataclass(frozen=True)
class JobSeeker:
    user_id: str
    city: str = UNKNOWN
    state: str = UNKNOWN
    country: str = UNKNOWN
    degree: str = UNKNOWN
    major: str = UNKNOWN


@dataclass(frozen=True)
class ApplicationEvent:
    user_id: str
    job_id: str
    timestamp: int


@dataclass(frozen=True)
class Session:
    session_id: str
    user_id: str
    events: tuple[ApplicationEvent, ...]

    @property
    def job_ids(self) -> list[str]:
        return [e.job_id for e in self.events]

    @property
    def start(self) -> int:
        return self.events[0].timestamp

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class Instance:
    """One prediction target: the job applied to right after ``prefix``."""

    user_id: str
    prefix: tuple[str, ...]
    positive: str
    session_id: str = ""


def expand_instances(sessions: Iterable[Session]) -> list[Instance]:
    """All-prefix expansion: a session of n jobs yields n-1 instances."""
    out = []
    for s in sessions:
        jobs = s.job_ids
        for t in range(1, len(jobs)):
            out.append(Instance(s.user_id, tuple(jobs[:t]), jobs[t], s.session_id))
    return out


@dataclass
class Dataset:
    catalog: dict[str, Job]
    seekers: dict[str, JobSeeker]
    train_sessions: list[Session]
    test_sessions: list[Session]
    mode: str = GAP_SPLIT
    info: dict = field(default_factory=dict)

    def train_job_ids(self) -> set[str]:
        return {e.job_id for s in self.train_sessions for e in s.events}


def tokenize(text: str) -> tuple[str, ...]:
    """Lowercase, split on non-alphanumerics, drop tokens shorter than 2."""
    return tuple(t for t in _TOKEN_SPLIT.split(text.lower()) if len(t) >= 2)


def normalize_state(value: str) -> str:
    v = (value or "").strip().upper()
    return v if v else UNKNOWN


def _category(value: str | None) -> str:
    v = (value or "").strip()
    return v if v else UNKNOWN


def parse_timestamp(raw: str) -> int:
    """Epoch seconds from an integer string or an ISO-8601 datetime (naive = UTC)."""
    raw = raw.strip()
    if re.fullmatch(r"-?\d+", raw):
        ts = int(raw)
    else:
        dt = datetime.fromisoformat(raw.replace("Z", "+00:00"))
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        ts = int(dt.timestamp())
    if ts < 0:
        raise ValueError(f"negative timestamp {raw!r}")
    return ts


def parse_table(path, schema: str, delimiter: str = "\t") -> tuple[list, int]:
    """Read a header-bearing delimited file into records.

    Returns ``(records, skipped)`` where ``skipped`` counts malformed rows.
    """
    if schema not in SCHEMAS:
        raise UsageError(f"unknown schema {schema!r}")
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    with fh:
        reader = csv.reader(fh, delimiter=delimiter, quoting=csv.QUOTE_NONE)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file, expected a header row")
        cols = [h.strip().lower() for h in header]
        for required in SCHEMAS[schema]:
            if required not in cols:
                raise SchemaError(f"{path}: header is missing required column {required!r}")
        pos = {c: i for i, c in enumerate(cols)}
        records = []
        skipped = 0
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(cols):
                skipped += 1
                continue
            rec = _make_record(schema, row, pos)
            if rec is None:
                skipped += 1
            else:
                records.append(rec)
    return records, skipped


def _make_record(schema: str, row: list[str], pos: dict[str, int]):
    def get(name):
        return row[pos[name]] if name in pos else ""

    if schema == "applications":
        user, job = get("user_id").strip(), get("job_id").strip()
        if not user or not job:
            return None
        try:
            ts = parse_timestamp(get("timestamp"))
        except ValueError:
            return None
        return ApplicationEvent(user, job, ts)
    if schema == "jobs":
        job_id = get("job_id").strip()
        if not job_id:
            return None
        text = " ".join((get("title"), get("description"), get("requirements")))
        return Job(
            job_id,
            tokenize(text),
            city=_category(get("city")),
            state=_category(get("state")),
            country=_category(get("country")),
            topic=get("topic").strip(),
        )
    user_id = get("user_id").strip()
    if not user_id:
        return None
    return JobSeeker(
        user_id,
        city=_category(get("city")),
        state=_category(get("state")),
        country=_category(get("country")),
        degree=_category(get("degree")),
        major=_category(get("major")),
    )


def build_sessions(
    events: Iterable[ApplicationEvent], mode: str = GAP_SPLIT, gap_minutes: int = 30
) -> list[Session]:
    """Group events into per-user sessions.

    In ``gap_split`` mode a gap strictly longer than ``gap_minutes`` opens a new
    session; in ``per_user`` mode each user's whole history is one session.
    Sessions shorter than two events are dropped.
    """
    if mode not in MODES:
        raise UsageError(f"unknown session mode {mode!r}")
    by_user: dict[str, list[ApplicationEvent]] = defaultdict(list)
    for e in events:
        by_user[e.user_id].append(e)
    gap = gap_minutes * 60
    sessions = []
    for user, evs in by_user.items():
        evs.sort(key=lambda e: e.timestamp)  # stable: ties keep input order
        chunks = [[evs[0]]]
        for prev, cur in zip(evs, evs[1:]):
            if mode == GAP_SPLIT and cur.timestamp - prev.timestamp > gap:
                chunks.append([cur])
            else:
                chunks[-1].append(cur)
        for k, chunk in enumerate(chunks):
            if len(chunk) >= 2:
                sessions.append(Session(f"{user}#{chunk[0].timestamp}", user, tuple(chunk)))
    sessions.sort(key=lambda s: (s.start, s.user_id))
    return sessions


def temporal_split(sessions: list[Session], test_days: int = 14):
    """Sessions starting within the last ``test_days`` of the corpus go to test."""
    if not sessions:
        return [], []
    end = max(e.timestamp for s in sessions for e in s.events)
    cutoff = end - test_days * 86400
    train = [s for s in sessions if s.start < cutoff]
    test = [s for s in sessions if s.start >= cutoff]
    return train, test


def filter_unseen(test: list[Session], train_job_set: set[str]) -> list[Session]:
    out = []
    for s in test:
        kept = tuple(e for e in s.events if e.job_id in train_job_set)
        if len(kept) >= 2:
            out.append(s if len(kept) == len(s.events) else Session(s.session_id, s.user_id, kept))
    return out


def prepare_dataset(
    catalog: dict[str, Job],
    seekers: dict[str, JobSeeker],
    events: list[ApplicationEvent],
    mode: str = GAP_SPLIT,
    gap_minutes: int = 30,
    test_days: int = 14,
) -> Dataset:
    """Sessionize, split in time and drop test jobs never seen in training.

    Events referring to jobs missing from the catalog are dropped; users missing
    from the seeker table get an all-UNKNOWN profile.
    """
    known = [e for e in events if e.job_id in catalog]
    dropped = len(events) - len(known)
    seekers = dict(seekers)
    for e in known:
        if e.user_id not in seekers:
            seekers[e.user_id] = JobSeeker(e.user_id)
    sessions = build_sessions(known, mode, gap_minutes)
    train, test = temporal_split(sessions, test_days)
    train_jobs = {e.job_id for s in train for e in s.events}
    test = filter_unseen(test, train_jobs)
    info = {
        "mode": mode,
        "gap_minutes": gap_minutes,
        "test_days": test_days,
        "events_in": len(events),
        "events_unknown_job": dropped,
        "duplicates_within_session": "kept",
    }
    if sessions:
        end = max(e.timestamp for s in sessions for e in s.events)
        info["corpus_end"] = end
        info["test_cutoff"] = end - test_days * 86400
    return Dataset(catalog, seekers, train, test, mode, info)


def dataset_statistics(ds: Dataset) -> dict:
    sessions = ds.train_sessions + ds.test_sessions
    users = {s.user_id for s in sessions}
    jobs = {e.job_id for s in sessions for e in s.events}
    n_apps = sum(len(s) for s in sessions)

    def card(values):
        return len({v for v in values if v != UNKNOWN})

    seek = [ds.seekers[u] for u in users if u in ds.seekers]
    jb = [ds.catalog[j] for j in jobs if j in ds.catalog]
    return {
        "users": len(users),
        "jobs": len(jobs),
        "sessions": len(sessions),
        "applications": n_apps,
        "avg_session_length": round(n_apps / len(sessions), 4) if sessions else 0.0,
        "train_sessions": len(ds.train_sessions),
        "test_sessions": len(ds.test_sessions),
        "cardinality": {
            "city": card([x.city for x in seek] + [x.city for x in jb]),
            "state": card([x.state for x in seek] + [x.state for x in jb]),
            "country": card([x.country for x in seek] + [x.country for x in jb]),
            "degree": card(x.degree for x in seek),
            "major": card(x.major for x in seek),
        },
    }


# ---------------------------------------------------------------------------
# Prepared-dataset directory


def _write_tsv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", quoting=csv.QUOTE_NONE, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_sessions(path, sessions: list[Session]) -> None:
    rows = (
        (s.session_id, s.user_id, e.job_id, e.timestamp) for s in sessions for e in s.events
    )
    _write_tsv(Path(path), ("session_id", "user_id", "job_id", "timestamp"), rows)


def read_sessions(path) -> list[Session]:
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    grouped: dict[str, list[ApplicationEvent]] = {}
    owner: dict[str, str] = {}
    with fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        header = next(reader, None)
        if header != ["session_id", "user_id", "job_id", "timestamp"]:
            raise SchemaError(f"{path}: unexpected session file header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise SchemaError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            sid, user, job, ts = row
            grouped.setdefault(sid, []).append(ApplicationEvent(user, job, int(ts)))
            owner[sid] = user
    return [Session(sid, owner[sid], tuple(evs)) for sid, evs in grouped.items()]


def write_jobs(path, catalog: dict[str, Job]) -> None:
    rows = (
        (j.job_id, "", " ".join(j.tokens), "", j.city, j.state, j.country, j.topic)
        for j in catalog.values()
    )
    _write_tsv(Path(path), JOB_COLUMNS + ("topic",), rows)


def write_seekers(path, seekers: dict[str, JobSeeker]) -> None:
    rows = (
        (s.user_id, s.city, s.state, s.country, s.degree, s.major) for s in seekers.values()
    )
    _write_tsv(Path(path), SEEKER_COLUMNS, rows)


def save_dataset(ds: Dataset, out_dir, extra_manifest: dict | None = None) -> dict:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataIOError(f"cannot create {out}: {exc.strerror or exc}") from exc
    write_jobs(out / "jobs.tsv", ds.catalog)
    write_seekers(out / "seekers.tsv", ds.seekers)
    write_sessions(out / "train_sessions.tsv", ds.train_sessions)
    write_sessions(out / "test_sessions.tsv", ds.test_sessions)
    manifest = {
        "mode": ds.mode,
        **ds.info,
        "statistics": dataset_statistics(ds),
        **(extra_manifest or {}),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_dataset(data_dir) -> Dataset:
    d = Path(data_dir)
    if not (d / "manifest.json").exists():
        raise DataIOError(f"{d} is not a prepared dataset (no manifest.json)")
    manifest = json.loads((d / "manifest.json").read_text())
    jobs, _ = parse_table(d / "jobs.tsv", "jobs")
    seekers, _ = parse_table(d / "seekers.tsv", "seekers")
    catalog = {j.job_id: j for j in jobs}
    seeker_map = {s.user_id: s for s in seekers}
    train = read_sessions(d / "train_sessions.tsv")
    test = read_sessions(d / "test_sessions.tsv")
    for s in train + test:
        for e in s.events:
            if e.job_id not in catalog:
                raise DataError(f"session {s.session_id} refers to unknown job {e.job_id!r}")
    return Dataset(catalog, seeker_map, train, test, manifest.get("mode", GAP_SPLIT), manifest)
