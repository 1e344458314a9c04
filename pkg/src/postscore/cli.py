"""Command-line pipeline: synth -> featurize/train/evaluate/predict ->
aggregate/rank-words/curve, every run writing a provenance manifest.

Exit codes: 0 success, 1 usage, 2 data/parse error (message names the file
and line when known), 3 numerical failure with a remediation hint.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__, dataio, pipeline, stats, synth, tfidf, wordrank
from .embeddings import EmbeddingTable, load_freq_csv
from .errors import DataFormatError, SingularSystemError
from .model import fit, loo_user_cv, posts_curve
from .textproc import FEATURE_COLUMNS
from .transfer import aggregate, build_mapping, compare


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; 2 is reserved for data errors here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p, threads=False, seed=None):
    p.add_argument("--output-dir", required=True, help="directory for outputs and the manifest")
    if threads:
        p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    if seed is not None:
        p.add_argument("--seed", type=int, default=seed, help=f"random seed (default {seed})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="postscore", description=__doc__)
    parser.add_argument("--version", action="version", version=f"postscore {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a deterministic synthetic dataset")
    _add_common(p, seed=0)
    p.add_argument("--vocab-size", type=int, default=5000)
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--topics", type=int, default=8)
    p.add_argument("--users", type=int, default=300)
    p.add_argument("--posts-per-user", type=int, default=20)
    p.add_argument("--tokens-per-post", type=int, default=12)
    p.add_argument("--noise-sd", type=float, default=30.0)
    p.add_argument("--institutions", type=int, default=10)
    p.add_argument("--users-per-institution", type=int, default=10)
    p.add_argument("--heldout-per-topic", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("featurize", help="per-user surface features CSV")
    p.add_argument("--posts", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("correlate", help="correlate surface features with targets")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("train", help="fit the post-level linear model")
    p.add_argument("--posts", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--embeddings", help="text .vec table (embedding vectorizer)")
    p.add_argument("--stopwords", help="stopword file (tfidf vectorizer)")
    p.add_argument("--vectorizer", choices=["embedding", "tfidf"], default="embedding")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0, help="ridge coefficient")
    p.add_argument("--top-terms", type=int, default=1000, help="tfidf vocabulary size")
    _add_common(p, threads=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="grouped leave-one-user-out evaluation")
    p.add_argument("--posts", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--stopwords")
    p.add_argument("--vectorizer", choices=["embedding", "tfidf"], default="embedding")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--top-terms", type=int, default=1000)
    _add_common(p, threads=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="per-user predictions from a trained model")
    p.add_argument("--posts", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--embeddings")
    _add_common(p, threads=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("aggregate", help="institution means and reference comparison")
    p.add_argument("--predictions", required=True)
    p.add_argument("--mapping", required=True)
    p.add_argument("--reference")
    p.add_argument("--min-users", type=int, default=5)
    p.add_argument("--exclude-users", help="labels CSV naming users to exclude (leakage control)")
    _add_common(p)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("rank-words", help="score and rank the whole vocabulary")
    p.add_argument("--model", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--posts", help="training posts (count-source=training)")
    p.add_argument("--freq", help="frequency sidecar CSV (count-source=sidecar)")
    p.add_argument("--count-source", choices=["training", "sidecar"], default="training")
    p.add_argument("--min-count", type=int, default=0)
    p.add_argument("--top", type=int, help="export only the N best-scoring words")
    p.add_argument("--bottom", type=int, help="export only the N worst-scoring words")
    p.add_argument("--project-2d", action="store_true", help="also write 2-d plot coordinates")
    _add_common(p)
    p.set_defaults(func=cmd_rank_words)

    p = sub.add_parser("curve", help="predictive power vs posts per user")
    p.add_argument("--posts", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--n-max", type=int, default=20)
    p.add_argument("--bootstrap", type=int, default=1000, help="bootstrap replicates")
    p.add_argument("--level", type=float, default=0.90, help="confidence level")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    _add_common(p, threads=True, seed=0)
    p.set_defaults(func=cmd_curve)

    return parser


def _outdir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check_input(path_str: str) -> Path:
    path = Path(path_str)
    if not path.is_file():
        raise DataFormatError("input file not found", path=path)
    return path


def _print_seed(seed: int) -> None:
    print(f"seed: {seed}")


def _load_table(args) -> EmbeddingTable:
    if not args.embeddings:
        raise DataFormatError("--embeddings is required for the embedding vectorizer")
    return EmbeddingTable.load_vec(_check_input(args.embeddings))


def cmd_synth(args) -> int:
    out = _outdir(args)
    _print_seed(args.seed)
    cfg = synth.SynthConfig(
        vocab_size=args.vocab_size,
        dim=args.dim,
        n_topics=args.topics,
        n_users=args.users,
        posts_per_user=args.posts_per_user,
        tokens_per_post=args.tokens_per_post,
        noise_sd=args.noise_sd,
        institution_count=args.institutions,
        users_per_institution=args.users_per_institution,
        seed=args.seed,
        heldout_per_topic=args.heldout_per_topic,
    )
    try:
        cfg.validate()
    except ValueError as exc:
        raise DataFormatError(f"invalid synth configuration: {exc}") from None
    data = synth.generate(cfg, out_dir=out)
    print(f"wrote {len(data.posts)} posts for {cfg.n_users} users to {out}")
    dataio.write_manifest(
        out,
        "synth",
        params={k: v for k, v in vars(args).items() if k not in ("func", "command")},
        inputs={},
        outputs=data.paths,
        seed=args.seed,
    )
    return 0


def cmd_featurize(args) -> int:
    out = _outdir(args)
    posts_path = _check_input(args.posts)
    features = pipeline.extract_features(dataio.iter_posts_jsonl(posts_path))
    if not features:
        raise DataFormatError("no unfiltered posts in input", path=posts_path)
    features_path = out / "features.csv"
    dataio.write_features_csv(features_path, features)
    print(f"featurized {len(features)} users")
    dataio.write_manifest(
        out,
        "featurize",
        params={},
        inputs={"posts": posts_path},
        outputs={"features": features_path},
        seed=None,
    )
    return 0


def cmd_correlate(args) -> int:
    out = _outdir(args)
    features_path = _check_input(args.features)
    labels_path = _check_input(args.labels)
    rows = dataio.read_features_csv(features_path)
    labels = dataio.read_labels_csv(labels_path)
    matched = [row for row in rows if row["user_id"] in labels]
    if len(matched) < 3:
        raise DataFormatError("need at least 3 users present in both features and labels")
    y = [labels[row["user_id"]] for row in matched]
    report = []
    for name in FEATURE_COLUMNS:
        x = [row[name] for row in matched]
        try:
            report.append((name, stats.pearson(x, y)))
        except ValueError:
            continue  # constant feature: correlation undefined, skipped
    report_path = out / "report.csv"
    dataio.write_report_csv(report_path, report)
    for name, rep in report:
        print(f"{name}: r={rep.r:+.4f} p={rep.p_two_sided:.3g} n={rep.n}")
    dataio.write_manifest(
        out,
        "correlate",
        params={},
        inputs={"features": features_path, "labels": labels_path},
        outputs={"report": report_path},
        seed=None,
    )
    return 0


def _load_training(args):
    posts_path = _check_input(args.posts)
    labels_path = _check_input(args.labels)
    stats_filter = pipeline.FilterStats()
    clean = pipeline.load_clean_posts(posts_path, stats_filter)
    labels = dataio.read_labels_csv(labels_path)
    inputs = {"posts": posts_path, "labels": labels_path}
    return posts_path, labels_path, clean, labels, stats_filter, inputs


def cmd_train(args) -> int:
    out = _outdir(args)
    _, _, clean, labels, fstats, inputs = _load_training(args)
    outputs = {}
    if args.vectorizer == "embedding":
        table = _load_table(args)
        inputs["embeddings"] = Path(args.embeddings)
        ts, astats = pipeline.build_embedding_training(clean, labels, table, threads=args.threads)
        model = fit(ts, lam=args.lam, embedding_fingerprint=table.fingerprint())
        extra = None
    else:
        stopwords = frozenset()
        if args.stopwords:
            stopwords_path = _check_input(args.stopwords)
            stopwords = tfidf.load_stopwords(stopwords_path)
            inputs["stopwords"] = stopwords_path
        labeled = [tp for tp in clean if tp.user_id in labels]
        if not labeled:
            raise DataFormatError("no labeled posts to train on")
        vocab = tfidf.build_vocab((tp.tokens for tp in labeled), stopwords, k=args.top_terms)
        ts, astats = pipeline.build_tfidf_training(clean, labels, vocab, stopwords)
        model = fit(ts, lam=args.lam)
        vocab_path = out / "tfidf_vocab.csv"
        vocab.save_csv(vocab_path)
        outputs["tfidf_vocab"] = vocab_path
        extra = {
            "vectorizer": "tfidf",
            "tfidf": {
                "terms": vocab.terms,
                "df": vocab.df,
                "idf": vocab.idf,
                "n_docs": vocab.n_docs,
                "stopwords": sorted(stopwords),
            },
        }
    model_path = out / "model.json"
    dataio.save_model_json(model_path, model, extra=extra)
    outputs["model"] = model_path
    print(
        f"trained on {astats.n_posts} posts from {astats.n_users} users "
        f"(filtered {fstats.removed}, no-vector {astats.no_vector}, unlabeled {astats.unlabeled})"
    )
    dataio.write_manifest(
        out,
        "train",
        params={"vectorizer": args.vectorizer, "lambda": args.lam, "threads": args.threads},
        inputs=inputs,
        outputs=outputs,
        seed=None,
    )
    return 0


def cmd_evaluate(args) -> int:
    out = _outdir(args)
    _, _, clean, labels, _, inputs = _load_training(args)
    if args.vectorizer == "embedding":
        table = _load_table(args)
        inputs["embeddings"] = Path(args.embeddings)
        ts, _ = pipeline.build_embedding_training(clean, labels, table, threads=args.threads)
    else:
        stopwords = frozenset()
        if args.stopwords:
            stopwords_path = _check_input(args.stopwords)
            stopwords = tfidf.load_stopwords(stopwords_path)
            inputs["stopwords"] = stopwords_path
        labeled = [tp for tp in clean if tp.user_id in labels]
        if not labeled:
            raise DataFormatError("no labeled posts to evaluate on")
        vocab = tfidf.build_vocab((tp.tokens for tp in labeled), stopwords, k=args.top_terms)
        ts, _ = pipeline.build_tfidf_training(clean, labels, vocab, stopwords)
    predictions = loo_user_cv(ts, lam=args.lam)
    truth = {u: labels[u] for u in {p.user_id for p in predictions}}
    rep = stats.pearson(
        [p.predicted for p in predictions], [truth[p.user_id] for p in predictions]
    )
    predictions_path = out / "loocv_predictions.csv"
    report_path = out / "report.csv"
    dataio.write_predictions_csv(predictions_path, predictions)
    dataio.write_report_csv(report_path, [("loocv_user_pearson_r", rep)])
    print(f"grouped LOOCV over {rep.n} users: r={rep.r:.4f} (p={rep.p_two_sided:.3g})")
    dataio.write_manifest(
        out,
        "evaluate",
        params={"vectorizer": args.vectorizer, "lambda": args.lam, "threads": args.threads},
        inputs=inputs,
        outputs={"loocv_predictions": predictions_path, "report": report_path},
        seed=None,
    )
    return 0


def cmd_predict(args) -> int:
    out = _outdir(args)
    posts_path = _check_input(args.posts)
    model_path = _check_input(args.model)
    model, payload = dataio.load_model_json(model_path)
    clean = pipeline.load_clean_posts(posts_path)
    inputs = {"posts": posts_path, "model": model_path}
    if payload.get("vectorizer") == "tfidf":
        block = payload["tfidf"]
        vocab = tfidf.TfidfVocabulary(
            terms=list(block["terms"]),
            df={k: int(v) for k, v in block["df"].items()},
            idf={k: float(v) for k, v in block["idf"].items()},
            n_docs=int(block.get("n_docs", 0)),
        )
        result = pipeline.predict_users_tfidf(
            model, vocab, clean, frozenset(block.get("stopwords", []))
        )
    else:
        table = _load_table(args)
        inputs["embeddings"] = Path(args.embeddings)
        expected = model.training_meta.embedding_fingerprint
        if expected and expected != table.fingerprint():
            print("warning: embedding table differs from the one used in training", file=sys.stderr)
        result = pipeline.predict_users_from_posts(model, table, clean)
    predictions_path = out / "predictions.csv"
    dataio.write_predictions_csv(predictions_path, result.predictions)
    note = f", {len(result.fallback_users)} fell back to the training mean" if result.fallback_users else ""
    print(f"predicted {len(result.predictions)} users{note}")
    dataio.write_manifest(
        out,
        "predict",
        params={"threads": args.threads},
        inputs=inputs,
        outputs={"predictions": predictions_path},
        seed=None,
    )
    return 0


def cmd_aggregate(args) -> int:
    out = _outdir(args)
    predictions_path = _check_input(args.predictions)
    mapping_path = _check_input(args.mapping)
    predictions = dataio.read_predictions_csv(predictions_path)
    mapping = build_mapping(dataio.read_mapping_pairs(mapping_path))
    exclude = frozenset()
    inputs = {"predictions": predictions_path, "mapping": mapping_path}
    if args.exclude_users:
        exclude_path = _check_input(args.exclude_users)
        exclude = frozenset(dataio.read_labels_csv(exclude_path))
        inputs["exclude_users"] = exclude_path
    try:
        result = aggregate(predictions, mapping, min_users=args.min_users, exclude_users=exclude)
    except ValueError as exc:
        raise DataFormatError(str(exc)) from None
    outputs = {}
    scores = result.scores
    if args.reference:
        reference_path = _check_input(args.reference)
        reference = dataio.read_reference_csv(reference_path)
        inputs["reference"] = reference_path
        comparison = compare(result.scores, reference)
        scores = sorted(
            comparison.matched + [s for s in result.scores if s.institution_id not in reference],
            key=lambda s: s.institution_id,
        )
        report_path = out / "report.csv"
        dataio.write_report_csv(
            report_path,
            [("institution_pearson", comparison.pearson), ("institution_spearman", comparison.spearman)],
        )
        outputs["report"] = report_path
        print(
            f"{len(comparison.matched)} institutions matched: "
            f"pearson r={comparison.pearson.r:.4f} (r^2={comparison.pearson.r_squared:.4f}), "
            f"spearman r={comparison.spearman.r:.4f}"
        )
    institutions_path = out / "institutions.csv"
    dataio.write_institutions_csv(institutions_path, scores)
    outputs["institutions"] = institutions_path
    if result.excluded:
        excluded_path = out / "excluded.csv"
        dataio.write_excluded_csv(excluded_path, result.excluded)
        outputs["excluded"] = excluded_path
        print(f"dropped {len(result.excluded)} institutions under min-users={args.min_users}")
    dataio.write_manifest(
        out,
        "aggregate",
        params={"min_users": args.min_users},
        inputs=inputs,
        outputs=outputs,
        seed=None,
    )
    return 0


def cmd_rank_words(args) -> int:
    out = _outdir(args)
    model_path = _check_input(args.model)
    model, _ = dataio.load_model_json(model_path)
    table = EmbeddingTable.load_vec(_check_input(args.embeddings))
    inputs = {"model": model_path, "embeddings": Path(args.embeddings)}
    counts = None
    if args.count_source == "sidecar":
        if args.freq:
            freq_path = _check_input(args.freq)
            counts = load_freq_csv(freq_path)
            inputs["freq"] = freq_path
        elif args.min_count > 0:
            raise DataFormatError("--min-count with count-source=sidecar requires --freq")
    else:
        if args.posts:
            posts_path = _check_input(args.posts)
            clean = pipeline.load_clean_posts(posts_path)
            counts = wordrank.training_token_counts(tp.tokens for tp in clean)
            inputs["posts"] = posts_path
        elif args.min_count > 0:
            raise DataFormatError("--min-count with count-source=training requires --posts")
    ranking_path = out / "ranking.csv"
    rows = wordrank.iter_ranked(
        model, table, min_count=args.min_count, counts=counts, head=args.top, tail=args.bottom
    )
    outputs = {"ranking": ranking_path}
    if args.project_2d:
        selected = list(rows)
        if len(selected) > 10_000:
            raise DataFormatError("--project-2d needs --top/--bottom to select at most 10k words")
        n = dataio.write_ranking_csv(ranking_path, selected)
        plot_path = out / "plot.csv"
        dataio.write_plot_csv(plot_path, wordrank.project_2d(selected, table))
        outputs["plot"] = plot_path
    else:
        n = dataio.write_ranking_csv(ranking_path, rows)
    print(f"ranked {n} words")
    dataio.write_manifest(
        out,
        "rank-words",
        params={
            "min_count": args.min_count,
            "count_source": args.count_source,
            "top": args.top,
            "bottom": args.bottom,
        },
        inputs=inputs,
        outputs=outputs,
        seed=None,
    )
    return 0


def cmd_curve(args) -> int:
    out = _outdir(args)
    _print_seed(args.seed)
    _, _, clean, labels, _, inputs = _load_training(args)
    table = _load_table(args)
    inputs["embeddings"] = Path(args.embeddings)
    ts, _ = pipeline.build_embedding_training(clean, labels, table, threads=args.threads)
    points = posts_curve(
        ts, n_max=args.n_max, B=args.bootstrap, level=args.level, seed=args.seed, lam=args.lam
    )
    curve_path = out / "curve.csv"
    dataio.write_curve_csv(curve_path, points)
    for p in points:
        print(f"N={p.n_posts:>2} r={p.r:.4f} [{p.ci_low:.4f}, {p.ci_high:.4f}]")
    dataio.write_manifest(
        out,
        "curve",
        params={"n_max": args.n_max, "bootstrap": args.bootstrap, "level": args.level, "lambda": args.lam},
        inputs=inputs,
        outputs={"curve": curve_path},
        seed=args.seed,
    )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataFormatError as exc:
        print(f"postscore: data error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"postscore: data error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"postscore: data error: {exc}", file=sys.stderr)
        return 2
    except SingularSystemError as exc:
        print(f"postscore: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
