import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panap.data import (
    PER_USER,
    UNKNOWN,
    ApplicationEvent,
    Session,
    build_sessions,
    expand_instances,
    filter_unseen,
    load_dataset,
    parse_table,
    parse_timestamp,
    prepare_dataset,
    save_dataset,
    temporal_split,
    tokenize,
)
from panap.errors import DataIOError, GenerationError, SchemaError
from panap.synthetic import SynthConfig, generate_synthetic, synthesize_events

DAY = 86400


def ev(user, job, ts):
    return ApplicationEvent(user, job, ts)


def sess(user, jobs, start=0, step=60):
    events = tuple(ev(user, j, start + i * step) for i, j in enumerate(jobs))
    return Session(f"{user}#{start}", user, events)


# -- parse_table ---------------------------------------------------------------


def test_blank_city_becomes_sentinel(tmp_path):
    p = tmp_path / "jobs.tsv"
    p.write_text(
        "job_id\ttitle\tdescription\trequirements\tcity\tstate\tcountry\n"
        "J1\tData Engineer\tBuild pipelines\tSQL\tAustin\tTX\tUS\n"
        "J2\tNurse\tCare\tRN\t\tGA\tUS\n"
        "J3\tChef\tCook\tKnives\tAtlanta\tGA\tUS\n"
    )
    jobs, skipped = parse_table(p, "jobs")
    assert len(jobs) == 3 and skipped == 0
    assert [j.city for j in jobs] == ["Austin", UNKNOWN, "Atlanta"]
    assert jobs[0].tokens == ("data", "engineer", "build", "pipelines", "sql")


def test_unparsable_timestamp_row_is_skipped(tmp_path):
    p = tmp_path / "apps.tsv"
    p.write_text("user_id\tjob_id\ttimestamp\nU1\tJ1\t100\nU1\tJ2\tyesterday\nU1\tJ3\t2012-04-01T00:00:00\n")
    events, skipped = parse_table(p, "applications")
    assert skipped == 1
    assert [e.timestamp for e in events] == [100, 1333238400]


def test_missing_column_names_it(tmp_path):
    p = tmp_path / "seekers.tsv"
    p.write_text("user_id\tcity\tstate\tcountry\tdegree\nU1\ta\tb\tc\td\n")
    with pytest.raises(SchemaError, match="major"):
        parse_table(p, "seekers")


def test_unreadable_file(tmp_path):
    with pytest.raises(DataIOError):
        parse_table(tmp_path / "missing.tsv", "jobs")


def test_custom_delimiter(tmp_path):
    p = tmp_path / "apps.csv"
    p.write_text("user_id,job_id,timestamp\nU1,J1,5\n")
    events, _ = parse_table(p, "applications", delimiter=",")
    assert events == [ev("U1", "J1", 5)]


def test_tokenize_rules():
    assert tokenize("C++ & Go-Lang, a B2B role!") == ("go", "lang", "b2b", "role")


def test_negative_timestamp_rejected():
    with pytest.raises(ValueError):
        parse_timestamp("-5")


# -- build_sessions ------------------------------------------------------------


def test_gaps_within_threshold_make_one_session():
    out = build_sessions([ev("u", "a", 0), ev("u", "b", 600), ev("u", "c", 2300)])
    assert len(out) == 1 and out[0].job_ids == ["a", "b", "c"]


def test_1900s_gap_splits_and_drops_the_trailing_singleton():
    # 600 s then 1900 s: the second gap exceeds 30 minutes
    out = build_sessions([ev("u", "a", 0), ev("u", "b", 600), ev("u", "c", 2500)])
    assert [s.job_ids for s in out] == [["a", "b"]]


def test_gap_over_threshold_leaves_only_singletons():
    assert build_sessions([ev("u", "a", 0), ev("u", "b", 2000)]) == []


def test_gap_exactly_at_threshold_stays_in_session():
    out = build_sessions([ev("u", "a", 0), ev("u", "b", 1800)])
    assert len(out) == 1


def test_per_user_mode_yields_one_session_per_user():
    events = [ev("u", "a", 0), ev("u", "b", 10 * DAY), ev("v", "c", 5), ev("w", "d", 7)]
    out = build_sessions(events, PER_USER)
    assert [(s.user_id, s.job_ids) for s in out] == [("u", ["a", "b"])]


def test_empty_input():
    assert build_sessions([]) == []


event_lists = st.lists(
    st.tuples(st.sampled_from("uvw"), st.sampled_from("abcdef"), st.integers(0, 20000)), max_size=40
)


@given(event_lists)
def test_sessionization_is_idempotent(raw):
    first = build_sessions([ev(*r) for r in raw])
    flat = [e for s in first for e in s.events]
    assert build_sessions(flat) == first


@given(event_lists)
def test_sessions_are_time_ordered_and_long_enough(raw):
    for s in build_sessions([ev(*r) for r in raw]):
        ts = [e.timestamp for e in s.events]
        assert ts == sorted(ts) and len(ts) >= 2


# -- temporal_split / filter_unseen -------------------------------------------


def test_all_sessions_in_window_go_to_test():
    ss = [sess("u", "ab", 0), sess("v", "cd", 3 * DAY)]
    assert temporal_split(ss, 14) == ([], ss)


def test_single_early_session():
    s = sess("u", "ab", 0)
    late = sess("v", "cd", 30 * DAY)
    train, test = temporal_split([s, late], 14)
    assert train == [s] and test == [late]


def test_window_boundary_is_inclusive():
    end = 30 * DAY
    edge = sess("u", "ab", end - 14 * DAY - 60)  # second event sits on the cutoff
    edge2 = Session("x", "x", (ev("x", "a", end - 14 * DAY), ev("x", "b", end)))
    train, test = temporal_split([edge, edge2], 14)
    assert train == [edge] and test == [edge2]


def test_uniform_thirteen_weeks_test_fraction():
    rng = np.random.default_rng(0)
    starts = np.sort(rng.integers(0, 91 * DAY, 20000))
    ss = [sess(f"u{i}", "ab", int(t)) for i, t in enumerate(starts)]
    ss.append(sess("last", "ab", 91 * DAY - 60))
    _, test = temporal_split(ss, 14)
    assert len(test) / len(ss) == pytest.approx(14 / 91, abs=0.01)


def test_unseen_removal():
    seen = {"a", "c"}
    assert filter_unseen([sess("u", "ab")], seen) == []
    kept = filter_unseen([sess("u", "abc")], seen)
    assert kept[0].job_ids == ["a", "c"]
    assert filter_unseen([sess("u", "xy")], seen) == []


@given(event_lists, st.integers(0, 3))
def test_test_jobs_always_seen_in_training(raw, days):
    events = [ev(u, j, t * 40) for u, j, t in raw]
    ss = build_sessions(events)
    train, test = temporal_split(ss, days)
    seen = {j for s in train for j in s.job_ids}
    for s in filter_unseen(test, seen):
        assert set(s.job_ids) <= seen


def test_prefix_expansion_counts():
    out = expand_instances([sess("u", "abc")])
    assert [(i.prefix, i.positive) for i in out] == [(("a",), "b"), (("a", "b"), "c")]


# -- synthetic ---------------------------------------------------------------


SMALL = dict(n_jobs=400, n_users=300, n_topics=4, n_states=3, cities_per_state=3)


def _app_pairs(cfg, seed=0):
    catalog, seekers, events = synthesize_events(cfg, seed)
    return [(seekers[e.user_id], catalog[e.job_id]) for e in events]


def test_all_in_state_when_p_same_state_is_one():
    pairs = _app_pairs(SynthConfig(p_same_state=1.0, **SMALL))
    assert all(u.state == j.state for u, j in pairs)


def test_topic_match_one_single_state():
    cfg = SynthConfig(p_topic_match=1.0, **{**SMALL, "n_states": 1})
    pairs = _app_pairs(cfg)
    assert all(u.major[-2:] == j.topic[-2:] for u, j in pairs)


def test_in_state_fraction_matches_knob():
    pairs = _app_pairs(SynthConfig(n_users=3000), seed=3)
    assert len(pairs) >= 10_000
    frac = np.mean([u.state == j.state for u, j in pairs])
    assert abs(frac - 0.93) <= 0.02


def test_in_city_fraction_given_in_state():
    pairs = _app_pairs(SynthConfig(), seed=4)
    in_state = [(u, j) for u, j in pairs if u.state == j.state]
    frac = np.mean([u.city == j.city for u, j in in_state])
    assert abs(frac - 0.40) <= 0.03


def test_secondary_topic_share():
    cfg = SynthConfig(secondary_topic_weight=0.2, p_topic_match=1.0, n_users=1500)
    pairs = _app_pairs(cfg, seed=5)
    frac_primary = np.mean([u.major[-2:] == j.topic[-2:] for u, j in pairs])
    assert abs(frac_primary - 0.8) <= 0.02


def test_session_topic_keeps_a_session_on_one_topic():
    cfg = SynthConfig(secondary_topic_weight=0.2, p_topic_match=1.0, session_topic=True, **SMALL)
    ds = generate_synthetic(cfg, seed=1)
    for s in ds.train_sessions:
        assert len({ds.catalog[j].topic for j in s.job_ids}) == 1


def test_synthetic_is_reproducible():
    a = generate_synthetic(SynthConfig(**SMALL), seed=9)
    b = generate_synthetic(SynthConfig(**SMALL), seed=9)
    assert a.train_sessions == b.train_sessions and a.catalog == b.catalog


def test_empty_cell_is_named():
    with pytest.raises(GenerationError, match="topic"):
        synthesize_events(SynthConfig(n_jobs=10, n_topics=4, n_states=2, cities_per_state=2), 0)


def test_save_load_roundtrip(tmp_path):
    ds = generate_synthetic(SynthConfig(**SMALL), seed=2)
    manifest = save_dataset(ds, tmp_path / "d")
    assert manifest["mode"] == "gap_split" and manifest["gap_minutes"] == 30
    back = load_dataset(tmp_path / "d")
    assert back.train_sessions == ds.train_sessions
    assert back.test_sessions == ds.test_sessions
    assert back.catalog == ds.catalog and back.seekers == ds.seekers


def test_prepare_links_unknown_seekers_and_drops_unknown_jobs():
    from panap.data import Job

    catalog = {"a": Job("a", ()), "b": Job("b", ())}
    events = [ev("u", "a", 0), ev("u", "b", 60), ev("u", "zz", 120)]
    ds = prepare_dataset(catalog, {}, events, test_days=0)
    assert ds.seekers["u"].state == UNKNOWN
    assert ds.info["events_unknown_job"] == 1
