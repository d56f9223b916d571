"""Command-line entry point: ``panap <command> [flags]``.

Every failure prints one line ``error[CODE]: message`` to stderr and exits
with 2 (usage), 3 (I/O), 4 (data/schema) or 5 (numeric).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import baselines
from .checkpoint import load_checkpoint, save_checkpoint
from .data import GAP_SPLIT, MODES, Dataset, load_dataset, parse_table, prepare_dataset, save_dataset
from .errors import ArgumentError, DataError, DataIOError, PanapError, UsageError
from .evaluation import (
    OracleScorer,
    PanapScorer,
    RandomScorer,
    evaluation_instances,
    evaluation_negatives,
    knn_label_purity,
    rank_instances,
    report_from_ranks,
    session_embeddings,
)
from .model import ModelConfig, TrainConfig, recommend_topk, train, training_stream
from .sampling import STRATEGIES
from .synthetic import SynthConfig, generate_synthetic
from .text import EncoderSpec, build_idf, encode_catalog, load_external_vectors

METHODS = ("pop", "ar", "cs", "iknn", "sknn", "vsknn", "panap", "oracle", "random")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_config_flags(parser, cls, prefix="", skip=()):
    group = parser.add_argument_group(cls.__name__)
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        flag = "--" + prefix + f.name.replace("_", "-")
        default = f.default
        if isinstance(default, bool):
            group.add_argument(flag, dest=prefix.replace("-", "_") + f.name, default=default,
                               action=argparse.BooleanOptionalAction, help=f"default {default}")
        else:
            kind = type(default) if default is not None else int
            group.add_argument(flag, dest=prefix.replace("-", "_") + f.name, type=kind,
                               default=default, help=f"default {default}")


def _config_from(args, cls, prefix="", **extra):
    values = {}
    for f in dataclasses.fields(cls):
        key = prefix.replace("-", "_") + f.name
        if hasattr(args, key):
            values[f.name] = getattr(args, key)
    values.update(extra)
    return cls(**values)


def _int_list(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ArgumentError(f"expected comma-separated integers, got {text!r}") from exc
    if not out or min(out) < 1:
        raise ArgumentError(f"cutoffs must be positive integers, got {text!r}")
    return out


def text_vectors_for(dataset: Dataset, config: ModelConfig, vectors_path=None):
    """Text vectors for every catalog job, from a file or the built-in encoder."""
    idf = build_idf(j.tokens for j in dataset.catalog.values()) if config.use_idf else None
    spec = EncoderSpec(d=config.d, hash_seed=config.hash_seed, idf_table=idf)
    external = load_external_vectors(vectors_path, config.d) if vectors_path else None
    vectors, fallback = encode_catalog(dataset.catalog, spec, external)
    if external is not None and fallback:
        logging.getLogger("panap").warning("%d jobs missing from %s use the built-in encoder", fallback, vectors_path)
    return vectors


# ---------------------------------------------------------------------------
# commands


def cmd_prepare(args) -> int:
    if args.synthetic:
        cfg = _config_from(args, SynthConfig, "synth-", mode=args.mode, gap_minutes=args.gap, test_days=args.test_days)
        ds = generate_synthetic(cfg, args.seed)
    else:
        missing = [n for n in ("jobs", "seekers", "applications") if getattr(args, n) is None]
        if missing:
            raise UsageError("real-data prepare needs --" + ", --".join(missing) + " (or pass --synthetic)")
        jobs, skipped_j = parse_table(args.jobs, "jobs")
        seekers, skipped_s = parse_table(args.seekers, "seekers")
        events, skipped_a = parse_table(args.applications, "applications")
        ds = prepare_dataset(
            {j.job_id: j for j in jobs}, {s.user_id: s for s in seekers}, events,
            args.mode, args.gap, args.test_days,
        )
        ds.info["skipped_rows"] = {"jobs": skipped_j, "seekers": skipped_s, "applications": skipped_a}
    manifest = save_dataset(ds, args.out, {"gap": args.gap})
    st = manifest["statistics"]
    print(f"|U|\t{st['users']}")
    print(f"|J|\t{st['jobs']}")
    print(f"#S\t{st['sessions']}")
    print(f"#A\t{st['applications']}")
    print(f"Avg_SLen\t{st['avg_session_length']:.2f}")
    for field_name, n in st["cardinality"].items():
        print(f"|{field_name}|\t{n}")
    print(f"train/test sessions\t{st['train_sessions']}/{st['test_sessions']}")
    return 0


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    mc = _config_from(args, ModelConfig)
    tc = _config_from(args, TrainConfig, seed=args.seed)
    vectors = text_vectors_for(ds, mc, args.vectors)
    log_path = Path(args.loss_log or str(args.checkpoint) + ".loss.tsv")
    lines = ["epoch\tmean_loss"]

    def on_epoch(epoch, loss):
        lines.append(f"{epoch}\t{loss:.10f}")
        if not args.quiet:
            print(f"epoch {epoch}\tloss {loss:.6f}", flush=True)

    result = train(ds, mc, tc, vectors, on_epoch)
    fingerprint = {"vectors": str(args.vectors) if args.vectors else None}
    save_checkpoint(args.checkpoint, result.model, tc, result.history, fingerprint)
    try:
        log_path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise DataIOError(f"cannot write {log_path}: {exc}") from exc
    return 0


def _load_model(args, ds):
    ck = load_checkpoint(args.checkpoint)
    vectors_path = getattr(args, "vectors", None) or ck.fingerprint.get("vectors")
    vectors = text_vectors_for(ds, ck.model_config, vectors_path)
    return ck, ck.model(ds.catalog, ds.seekers, vectors), vectors


def cmd_evaluate(args) -> int:
    ds = load_dataset(args.data)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ArgumentError(f"unknown method(s) {','.join(unknown)}; choose from {','.join(METHODS)}")
    ks = _int_list(args.k)
    ck = model = None
    if "panap" in methods:
        if not args.checkpoint:
            raise UsageError("method panap needs --checkpoint")
        ck, model, vectors = _load_model(args, ds)
        config = ck.model_config
    else:
        config = ModelConfig(d=args.d, hash_seed=args.hash_seed)
        vectors = text_vectors_for(ds, config, args.vectors) if "cs" in methods else None
    strategy = args.eval_strategy or (ck.train_config.sampling_strategy if ck else "S2")

    instances = evaluation_instances(ds.test_sessions)
    if not instances:
        raise DataError("test split is empty: nothing to evaluate")
    negatives = evaluation_negatives(ds, instances, args.n_negatives, strategy, args.seed, args.batch_size, args.buffer_size)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataIOError(f"cannot create {out}: {exc}") from exc
    fingerprint = {"seed": args.seed, "strategy": strategy, "n_negatives": args.n_negatives,
                   "candidates_exclude_prefix": True}
    if ck is not None:
        fingerprint["checkpoint"] = ck.fingerprint
    for name in methods:
        if name == "panap":
            scorer = PanapScorer(model)
        elif name == "oracle":
            scorer = OracleScorer()
        elif name == "random":
            scorer = RandomScorer(args.seed)
        elif name == "cs":
            scorer = baselines.ContentSimilarity(vectors, training_stream(ds.train_sessions))
        else:
            scorer = baselines.BASELINES[name]().fit(ds.train_sessions)
        ranks = rank_instances(scorer, instances, negatives, args.batch_size, args.workers)
        report = report_from_ranks(name, ranks, ks, instances, fingerprint)
        report.write(out / f"{name}.json")
        for k in ks:
            print(report.line(k))
    return 0


def cmd_recommend(args) -> int:
    ds = load_dataset(args.data)
    _, model, _ = _load_model(args, ds)
    prefix = [j.strip() for j in args.session.split(",") if j.strip()]
    if not prefix:
        raise ArgumentError("--session needs at least one job id")
    if args.k < 1:
        raise ArgumentError("--k must be >= 1")
    for j in prefix:
        if j not in ds.catalog:
            raise DataError(f"session job {j!r} is not in the catalog")
    cache = model.build_cache()
    for job_id, score in recommend_topk(model, cache, args.user, prefix, args.k):
        print(f"{job_id}\t{score:.6f}")
    return 0


def _session_labels(ds: Dataset, sessions, label: str) -> dict[str, str]:
    return {s.session_id: getattr(ds.seekers[s.user_id], label) for s in sessions if s.user_id in ds.seekers}


def _pick_sessions(ds: Dataset, which: str):
    return {"test": ds.test_sessions, "train": ds.train_sessions, "all": ds.train_sessions + ds.test_sessions}[which]


def cmd_analyze_purity(args) -> int:
    ds = load_dataset(args.data)
    _, model, _ = _load_model(args, ds)
    sessions = _pick_sessions(ds, args.sessions)
    emb = session_embeddings(model, sessions)
    report = knn_label_purity(emb, _session_labels(ds, sessions, args.label), args.k, args.label)
    text = report.to_json()
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            raise DataIOError(f"cannot write {args.out}: {exc}") from exc
    print(f"purity[{args.label}]@{args.k}\t{report.agreement:.6f}\t({report.n_points} sessions)")
    return 0


def _fmt(vec) -> str:
    return "\t".join(format(float(x), ".17g") for x in vec)


def cmd_export_embeddings(args) -> int:
    ds = load_dataset(args.data)
    _, model, _ = _load_model(args, ds)
    cache = model.build_cache()
    lines = []
    if args.kind == "jobs":
        lines.append("job_id\tcity\tstate\ttopic\tvector")
        for j in cache.job_ids:
            job = ds.catalog[j]
            lines.append(f"{j}\t{job.city}\t{job.state}\t{job.topic}\t{_fmt(cache.vector(j))}")
    else:
        sessions = _pick_sessions(ds, args.sessions)
        emb = session_embeddings(model, sessions, cache)
        lines.append("session_id\tuser_id\tstate\tmajor\tvector")
        for s in sessions:
            seeker = ds.seekers.get(s.user_id)
            state, major = (seeker.state, seeker.major) if seeker else ("UNKNOWN", "UNKNOWN")
            lines.append(f"{s.session_id}\t{s.user_id}\t{state}\t{major}\t{_fmt(emb[s.session_id])}")
    try:
        Path(args.out).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise DataIOError(f"cannot write {args.out}: {exc}") from exc
    print(f"wrote {len(lines) - 1} {args.kind[:-1]} embeddings to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="panap", description="Session-based next-application prediction")
    p.add_argument("--log-level", default="WARNING", help="default WARNING")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True):
        sp.add_argument("--seed", type=int, default=0, help="the only source of randomness (default 0)")
        if data:
            sp.add_argument("--data", required=True, help="prepared dataset directory")

    sp = sub.add_parser("prepare", help="sessionize, split and write a dataset directory")
    common(sp, data=False)
    sp.add_argument("--jobs")
    sp.add_argument("--seekers")
    sp.add_argument("--applications")
    sp.add_argument("--synthetic", action="store_true", help="generate a planted-structure corpus instead")
    sp.add_argument("--out", required=True)
    sp.add_argument("--mode", choices=MODES, default=GAP_SPLIT)
    sp.add_argument("--gap", type=int, default=30, help="inactivity gap in minutes (default 30)")
    sp.add_argument("--test-days", type=int, default=14, help="default 14")
    _add_config_flags(sp, SynthConfig, "synth-", skip=("mode", "gap_minutes", "test_days"))
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("train", help="train a model and write a checkpoint")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--loss-log", help="default <checkpoint>.loss.tsv")
    sp.add_argument("--vectors", help="external text vectors: 'job_id f1 ... fd' per line")
    sp.add_argument("--quiet", action="store_true")
    _add_config_flags(sp, ModelConfig)
    _add_config_flags(sp, TrainConfig, skip=("seed",))
    sp.add_argument("--strategy", dest="sampling_strategy", choices=("S1", "S2"), help="alias of --sampling-strategy")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="rank test positives among shared sampled negatives")
    common(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--methods", default="panap", help=f"comma list of {','.join(METHODS)}")
    sp.add_argument("--k", default="5", help="comma list of cutoffs (default 5)")
    sp.add_argument("--n-negatives", type=int, default=50, help="default 50")
    sp.add_argument("--eval-strategy", choices=STRATEGIES, help="default: the checkpoint's training strategy, else S2")
    sp.add_argument("--batch-size", type=int, default=256)
    sp.add_argument("--buffer-size", type=int, default=5000)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--vectors")
    sp.add_argument("--d", type=int, default=300, help="text dimension for cs without a checkpoint")
    sp.add_argument("--hash-seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="report directory")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("recommend", help="top-K next jobs for a user and session prefix")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--user", required=True)
    sp.add_argument("--session", required=True, help="comma-separated job ids in order")
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--vectors")
    sp.set_defaults(func=cmd_recommend)

    sp = sub.add_parser("analyze-purity", help="k-NN label agreement of session embeddings")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--label", choices=("major", "state"), default="major")
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--sessions", choices=("test", "train", "all"), default="test")
    sp.add_argument("--out")
    sp.add_argument("--vectors")
    sp.set_defaults(func=cmd_analyze_purity)

    sp = sub.add_parser("export-embeddings", help="write job or session vectors for plotting")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--kind", choices=("jobs", "sessions"), default="sessions")
    sp.add_argument("--sessions", choices=("test", "train", "all"), default="test")
    sp.add_argument("--out", required=True)
    sp.add_argument("--vectors")
    sp.set_defaults(func=cmd_export_embeddings)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except PanapError as exc:
        msg = " ".join(str(exc).split())
        print(f"error[{exc.code}]: {msg}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print("error[INTERRUPTED]: interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
