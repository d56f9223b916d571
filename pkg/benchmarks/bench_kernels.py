"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends get identical inputs; outputs are checked for bit equality
before any timing is reported.
"""

import argparse
import timeit

import numpy as np

from panap import _kernels_py as py

try:
    from panap import _kernels as cy
except ImportError:
    cy = None


def inputs(seed=0, n_items=2000, n_sessions=20000, avg_len=4):
    rng = np.random.default_rng(seed)
    sizes = rng.poisson(avg_len * n_sessions / n_items, n_items)
    postings = [np.sort(rng.choice(n_sessions, min(int(s), n_sessions), replace=False)) for s in sizes]
    indptr = np.zeros(n_items + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(p) for p in postings])
    indices = np.concatenate(postings).astype(np.int64)
    items = rng.integers(0, n_items, 8).astype(np.int64)
    weights = rng.random(len(items))
    values = rng.random(n_sessions)
    tokens = [f"tok{int(x)}" for x in rng.integers(0, 5000, 300)]
    return dict(items=items, weights=weights, indptr=indptr, indices=indices,
                n_sessions=n_sessions, values=values, tokens=tokens)


def cases(mod, d):
    return {
        "hash_tokens (300 tokens)": lambda: mod.hash_tokens(d["tokens"], 7),
        "session_overlap (8-item prefix)": lambda: mod.session_overlap(
            d["items"], d["weights"], d["indptr"], d["indices"], d["n_sessions"]),
        "posting_sums (8 candidates)": lambda: mod.posting_sums(
            d["items"], d["indptr"], d["indices"], d["values"]),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=50)
    args = ap.parse_args()
    d = inputs()
    if cy is None:
        print("compiled extension not built; timing the fallback only")
    py_cases = cases(py, d)
    cy_cases = cases(cy, d) if cy else {}
    for name, fn in cy_cases.items():
        a, b = fn(), py_cases[name]()
        assert np.asarray(a).tobytes() == np.asarray(b).tobytes(), name
    print(f"{'kernel':34s} {'python us':>12s} {'cython us':>12s} {'speedup':>8s}")
    for name, fn in py_cases.items():
        t_py = min(timeit.repeat(fn, number=args.number, repeat=args.repeat)) / args.number * 1e6
        if cy:
            t_cy = min(timeit.repeat(cy_cases[name], number=args.number, repeat=args.repeat)) / args.number * 1e6
            print(f"{name:34s} {t_py:12.1f} {t_cy:12.1f} {t_py / t_cy:7.1f}x")
        else:
            print(f"{name:34s} {t_py:12.1f} {'-':>12s} {'-':>8s}")


if __name__ == "__main__":
    main()
