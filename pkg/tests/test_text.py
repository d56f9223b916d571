import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from panap.data import Job
from panap.errors import SchemaError, UsageError
from panap.text import EncoderSpec, build_idf, encode_catalog, encode_hashed_bow, hashed_counts, load_external_vectors


def fnv_oracle(data: bytes, seed: int) -> int:
    """Straight transcription of FNV-1a 64 over seed bytes then data."""
    h = 14695981039346656037
    for byte in seed.to_bytes(8, "little") + data:
        h ^= byte
        h = (h * 1099511628211) % 2**64
    return h


def encode_oracle(tokens, d, seed=0, idf=None):
    v = [0.0] * d
    for t in tokens:
        h = fnv_oracle(t.encode(), seed)
        sign = -1.0 if h >= 2**63 else 1.0
        v[h % d] += sign * (idf.get(t, 1.0) if idf else 1.0)
    n = math.sqrt(sum(x * x for x in v))
    return np.array([x / n for x in v]) if n else np.array(v)


def test_oracle_matches_published_fnv_vectors():
    # With the seed bytes stripped the oracle is plain FNV-1a 64.
    def plain(data):
        h = 14695981039346656037
        for byte in data:
            h = ((h ^ byte) * 1099511628211) % 2**64
        return h

    assert plain(b"") == 0xCBF29CE484222325
    assert plain(b"a") == 0xAF63DC4C8601EC8C
    assert plain(b"foobar") == 0x85944171F73967E8


def test_frozen_hash_values():
    from panap.kernels import fnv1a64

    assert fnv1a64(b"engineer", 0) == fnv_oracle(b"engineer", 0) == 0x5AF7D93DD162CD18
    assert fnv1a64(b"engineer", 42) == fnv_oracle(b"engineer", 42) == 0xD593B135852C924A


def test_frozen_small_vector():
    v = encode_hashed_bow(["data", "engineer", "data"], EncoderSpec(d=8))
    np.testing.assert_allclose(v, [1 / math.sqrt(5), 0, 0, 0, 0, 2 / math.sqrt(5), 0, 0], atol=1e-15)


words = st.lists(st.text("abcdefghij", min_size=1, max_size=6), max_size=30)


@given(words, st.integers(0, 2**32), st.integers(1, 64))
def test_matches_oracle(tokens, seed, d):
    spec = EncoderSpec(d=d, hash_seed=seed)
    np.testing.assert_allclose(encode_hashed_bow(tokens, spec), encode_oracle(tokens, d, seed), atol=1e-12)


def test_idf_weighting_matches_oracle():
    docs = [["data", "sql"], ["data", "nurse"], ["chef"]]
    idf = build_idf(docs)
    assert idf["data"] == pytest.approx(math.log(4 / 3) + 1)
    assert idf["chef"] == pytest.approx(math.log(4 / 2) + 1)
    spec = EncoderSpec(d=16, idf_table=idf)
    np.testing.assert_allclose(encode_hashed_bow(["data", "chef"], spec), encode_oracle(["data", "chef"], 16, 0, idf), atol=1e-12)


def test_empty_tokens_zero_vector():
    assert not encode_hashed_bow([], EncoderSpec(d=10)).any()


def test_deterministic():
    s = EncoderSpec(d=50, hash_seed=3)
    np.testing.assert_array_equal(encode_hashed_bow(["a", "b"], s), encode_hashed_bow(["a", "b"], s))


def test_disjoint_large_sets_near_orthogonal():
    spec = EncoderSpec(d=300)
    a = encode_hashed_bow([f"alpha{i}" for i in range(1000)], spec)
    b = encode_hashed_bow([f"beta{i}" for i in range(1000)], spec)
    assert abs(a @ b) < 0.2


@given(words, st.randoms())
def test_permutation_invariant_and_unit_norm(tokens, rnd):
    spec = EncoderSpec(d=32)
    v = encode_hashed_bow(tokens, spec)
    shuffled = list(tokens)
    rnd.shuffle(shuffled)
    np.testing.assert_allclose(encode_hashed_bow(shuffled, spec), v, atol=1e-12)
    n = np.linalg.norm(v)
    assert n == 0.0 or abs(n - 1) < 1e-12


@given(words.filter(bool), st.integers(0, 29))
def test_duplicate_token_touches_one_coordinate(tokens, pick):
    spec = EncoderSpec(d=32)
    t = tokens[pick % len(tokens)]
    diff = hashed_counts(tokens + [t], spec) - hashed_counts(tokens, spec)
    assert np.count_nonzero(diff) == 1 and abs(diff).sum() == 1.0


def test_bad_spec():
    with pytest.raises(UsageError):
        EncoderSpec(d=0)
    with pytest.raises(UsageError):
        EncoderSpec(kind="doc2vec")


def test_external_vectors(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text("J1 1 0 0\nJ2 0 1 0\n")
    vecs = load_external_vectors(p, 3)
    assert sorted(vecs) == ["J1", "J2"]
    np.testing.assert_array_equal(vecs["J2"], [0, 1, 0])


def test_external_short_line_reports_line(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text("J1 1 0 0\nJ2 0 1\n")
    with pytest.raises(SchemaError, match=":2:"):
        load_external_vectors(p, 3)


def test_fallback_count():
    catalog = {f"J{i}": Job(f"J{i}", ("tok", f"w{i}")) for i in range(5)}
    external = {f"J{i}": np.ones(4) for i in range(3)}
    vecs, fallback = encode_catalog(catalog, EncoderSpec(d=4), external)
    assert fallback == 2 and len(vecs) == 5
    np.testing.assert_array_equal(vecs["J0"], np.ones(4))
