"""Operator entry points: train, rank, insights, opportunities, eval, serve.

JSON is the machine output; the table renderer is presentation only. Exit
codes: 0 ok, 1 internal failure (stage named on stderr), 2 usage or
validation error. Flags win over environment variables
(COPYRANK_PROVIDER_URL, COPYRANK_CHAT_URL, COPYRANK_CACHE_DIR).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .attributes import default_lexicon_path, load_lexicon
from .bundle import load_bundle, save_bundle
from .embedding import EmbeddingCache, FileBackedProvider, HashProvider, HTTPProvider
from .errors import CopyrankError, ParseError, ValidationError
from .evaluation import LooBackend, evaluate_transfer, leave_one_out
from .ingest import load_experiments
from .narration import HTTPChatClient, ScriptedChatClient
from .pipeline import (
    TrainConfig,
    history_attribute_means,
    insight_report,
    make_embedder,
    opportunity_report,
    rank_report,
    train_pipeline,
)

DEFAULT_SEED = 7


def _add_provider_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--provider",
        choices=("hash", "file", "http"),
        default="hash",
        help="embedding back-end (default: deterministic hash provider)",
    )
    parser.add_argument("--provider-url", default=None, help="HTTP provider endpoint")
    parser.add_argument("--provider-file", default=None, help="JSONL table for file provider")
    parser.add_argument("--embed-dim", type=int, default=64, help="hash provider dimension")
    parser.add_argument("--cache-dir", default=None, help="embedding cache directory")


def _add_chat_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--chat-url", default=None, help="chat completion endpoint")
    parser.add_argument("--chat-script", default=None, help="scripted chat JSONL (for tests)")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=("json", "table"), default="json")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)


def build_provider(args):
    if args.provider == "hash":
        return HashProvider(dim=args.embed_dim, seed=args.seed)
    if args.provider == "file":
        if not args.provider_file:
            raise ValidationError("--provider file requires --provider-file")
        return FileBackedProvider(args.provider_file)
    url = args.provider_url or os.environ.get("COPYRANK_PROVIDER_URL")
    if not url:
        raise ValidationError("--provider http requires --provider-url or COPYRANK_PROVIDER_URL")
    return HTTPProvider(url)


def build_cache(args):
    directory = args.cache_dir or os.environ.get("COPYRANK_CACHE_DIR")
    return EmbeddingCache(directory) if directory else None


def _parse_backend(spec: str, default_seed: int):
    """Back-end spec strings for eval --backend: hash[:dim=N[:seed=N]] | file:PATH | http:URL."""
    kind, _, rest = spec.partition(":")
    if kind == "hash":
        dim, seed = 64, default_seed
        for part in filter(None, rest.split(":")):
            key, _, value = part.partition("=")
            if key == "dim":
                dim = int(value)
            elif key == "seed":
                seed = int(value)
            else:
                raise ValidationError(f"unknown hash backend option {key!r}")
        return HashProvider(dim=dim, seed=seed)
    if kind == "file":
        return FileBackedProvider(rest)
    if kind == "http":
        return HTTPProvider(rest)
    raise ValidationError(f"unknown backend spec {spec!r}")


def build_chat_client(args):
    if getattr(args, "chat_script", None):
        return ScriptedChatClient.from_jsonl(args.chat_script)
    url = getattr(args, "chat_url", None) or os.environ.get("COPYRANK_CHAT_URL")
    return HTTPChatClient(url) if url else None


def _load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from None


def _emit(payload: dict, fmt: str, table_rows=None, headers=None) -> None:
    if fmt == "json" or table_rows is None:
        print(json.dumps(payload, indent=2, sort_keys=True))
        return
    widths = [
        max(len(str(h)), *(len(str(r[i])) for r in table_rows)) if table_rows else len(str(h))
        for i, h in enumerate(headers)
    ]
    print("  ".join(str(h).ljust(w) for h, w in zip(headers, widths)))
    for row in table_rows:
        print("  ".join(str(c).ljust(w) for c, w in zip(row, widths)))


def cmd_train(args) -> int:
    stage = "setup"
    try:
        provider = build_provider(args)
        cache = build_cache(args)
        stage = "ingest"
        training = load_experiments(args.experiments)
        target = load_experiments(args.target_experiments) if args.target_experiments else None
        lexicon = load_lexicon(args.lexicon if args.lexicon else default_lexicon_path())
        centering_texts = None
        if args.centering_corpus:
            centering_texts = [
                line.strip()
                for line in Path(args.centering_corpus).read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
        config = TrainConfig(
            q=args.q,
            ridge=args.ridge,
            lam="cv" if args.reg_lambda == "cv" else float(args.reg_lambda),
            cv_folds=args.cv_folds,
            impact_floor=args.impact_floor,
            top_k=args.k,
            seed=args.seed,
            pca_fit=args.pca_fit,
            weight_by_impressions=args.weight_by_impressions,
        )
        stage = "train"
        bundle = train_pipeline(
            training,
            lexicon,
            provider,
            config,
            target=target,
            centering_texts=centering_texts,
            cache=cache,
        )
        stage = "persist"
        save_bundle(bundle, args.bundle)
    except (CopyrankError, FileNotFoundError) as exc:
        print(f"error in stage {stage}: {exc}", file=sys.stderr)
        return 2
    diag = bundle.ranker.diagnostics
    print(
        json.dumps(
            {
                "bundle": str(args.bundle),
                "dims": bundle.dims,
                "lambda": bundle.impact.lam,
                "ridge": bundle.ranker.ridge,
                "n_experiments": diag.n_experiments,
                "n_arms": diag.n_arms,
                "residual_variance": diag.residual_variance,
                "config_hash": bundle.metadata["config_hash"],
            },
            indent=2,
            sort_keys=True,
        )
    )
    return 0


def _load_bundle_and_embedder(args):
    bundle = load_bundle(args.bundle)
    provider = build_provider(args)
    return bundle, make_embedder(bundle, provider, cache=build_cache(args))


def cmd_rank(args) -> int:
    bundle, embedder = _load_bundle_and_embedder(args)
    if args.variants:
        variants = _load_json(args.variants)
    elif args.text:
        variants = [{"id": f"v{i + 1}", "text": t} for i, t in enumerate(args.text)]
    else:
        raise ValidationError("provide --variants FILE or repeated --text")
    report = rank_report(bundle, embedder, variants)
    rows = sorted(report["scored"], key=lambda r: r["rank"])
    _emit(
        report,
        args.format,
        table_rows=[(r["rank"], r["id"], f"{r['score']:+.6f}") for r in rows],
        headers=("rank", "id", "relative_score"),
    )
    return 0


def cmd_insights(args) -> int:
    bundle, embedder = _load_bundle_and_embedder(args)
    arms = _load_json(args.arms)
    report = insight_report(
        bundle,
        embedder,
        arms,
        k=args.k,
        narrate=args.narrate,
        chat_client=build_chat_client(args),
    )
    if args.narrate and report["status"].startswith("narration skipped"):
        print(f"warning: {report['status']}", file=sys.stderr)
    rows = sorted(report["contributions"], key=lambda c: -abs(c["contribution"]))
    _emit(
        report,
        args.format,
        table_rows=[
            (c["attribute"], f"{c['contribution']:+.6f}", c["polarity"]) for c in rows
        ],
        headers=("attribute", "contribution", "polarity"),
    )
    return 0


def cmd_opportunities(args) -> int:
    bundle, embedder = _load_bundle_and_embedder(args)
    variants = _load_json(args.variants)
    history_means = None
    if args.history_means:
        history_means = _load_json(args.history_means)
    elif args.history_experiments:
        history = load_experiments(args.history_experiments)
        history_means = [
            float(x) for x in history_attribute_means(bundle, embedder, history)
        ]
    report = opportunity_report(
        bundle,
        embedder,
        variants,
        history_means=history_means,
        k=args.k,
        narrate=args.narrate,
        chat_client=build_chat_client(args),
    )
    if args.narrate and report["status"].startswith("narration skipped"):
        print(f"warning: {report['status']}", file=sys.stderr)
    ranking = report["ranking"]
    order = sorted(range(len(ranking["attributes"])), key=lambda i: ranking["r_opp"][i])
    _emit(
        report,
        args.format,
        table_rows=[
            (
                ranking["attributes"][i],
                ranking["r_opp"][i],
                report["impact_bins"][ranking["attributes"][i]],
            )
            for i in order
        ],
        headers=("attribute", "r_opp", "impact"),
    )
    return 0


def cmd_eval(args) -> int:
    provider = build_provider(args)
    cache = build_cache(args)
    if args.mode == "transfer":
        if not args.bundle or not args.test_experiments:
            raise ValidationError("transfer mode needs --bundle and --test-experiments")
        bundle = load_bundle(args.bundle)
        test_set = load_experiments(args.test_experiments)
        if len(test_set) == 0:
            raise ValidationError("test set is empty")
        result = evaluate_transfer(bundle, test_set, provider, cache=cache)
        payload = {
            "mean_rho": result.mean_rho,
            "rho_stddev": result.rho_stddev,
            "top1_accuracy": result.top1_accuracy,
            "random_top1_baseline": result.random_top1_baseline,
            "n_experiments": result.n_experiments,
            "n_excluded": result.n_excluded,
            "per_experiment_rho": list(result.per_experiment_rho),
        }
        if args.per_experiment_csv:
            with open(args.per_experiment_csv, "w", encoding="utf-8") as fh:
                fh.write("index,rho\n")
                for i, rho in enumerate(result.per_experiment_rho):
                    fh.write(f"{i},{rho}\n")
        _emit(
            payload,
            args.format,
            table_rows=[
                ("mean_rho", f"{result.mean_rho:.4f} ± {result.rho_stddev:.4f}"),
                ("top1_accuracy", f"{result.top1_accuracy:.4f}"),
                ("random_baseline", f"{result.random_top1_baseline:.4f}"),
                ("n_experiments", result.n_experiments),
                ("n_excluded", result.n_excluded),
            ],
            headers=("metric", "value"),
        )
        return 0

    if not args.experiments:
        raise ValidationError("loo mode needs --experiments")
    corpus = load_experiments(args.experiments)
    if len(corpus) == 0:
        raise ValidationError("corpus is empty")
    pca_fit = "train" if args.no_peek else "heldout"
    if args.backend:
        providers = [_parse_backend(spec, args.seed) for spec in args.backend]
    else:
        providers = [provider]
    backends = [
        LooBackend(
            name=p.provider_id, provider=p, q=args.q, ridge=args.ridge, pca_fit=pca_fit
        )
        for p in providers
    ]
    results = leave_one_out(corpus, backends, cache=cache)
    payload = {
        r.backend: {
            "mean_rho": r.mean_rho,
            "rho_stddev": r.rho_stddev,
            "n_folds": r.n_folds,
            "n_failed": r.n_failed,
        }
        for r in results
    }
    _emit(
        payload,
        args.format,
        table_rows=[
            (r.backend, f"{r.mean_rho:.4f} ± {r.rho_stddev:.4f}", r.n_folds, r.n_failed)
            for r in results
        ],
        headers=("backend", "rho", "folds", "failed"),
    )
    return 0


def cmd_serve(args) -> int:
    from .service import create_app, serve

    bundle, embedder = _load_bundle_and_embedder(args)
    app = create_app(bundle, embedder, chat_client=build_chat_client(args))
    serve(app, port=args.port, host=args.host)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="copyrank", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit the full pipeline and write a bundle")
    p.add_argument("--experiments", required=True, help="training table (csv/jsonl)")
    p.add_argument(
        "--lexicon",
        default=None,
        help="attribute lexicon JSON (default: the shipped sample lexicon)",
    )
    p.add_argument("--bundle", required=True, help="output bundle path")
    p.add_argument("--target-experiments", default=None, help="candidate experiments for PCA fitting")
    p.add_argument("--centering-corpus", default=None, help="override centering texts (one per line)")
    p.add_argument("--q", type=int, default=64)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--lambda", dest="reg_lambda", default="cv", help='"cv" or an explicit value')
    p.add_argument("--cv-folds", type=int, default=5)
    p.add_argument("--impact-floor", type=float, default=0.05)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--pca-fit", choices=("target", "train", "pooled"), default="target")
    p.add_argument("--weight-by-impressions", action="store_true")
    _add_provider_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rank", help="score candidate variants with a trained bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--variants", default=None, help='JSON file: [{"id","text"}...]')
    p.add_argument("--text", action="append", default=None, help="inline variant text (repeatable)")
    _add_provider_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("insights", help="explain a finished experiment's best-vs-worst gap")
    p.add_argument("--bundle", required=True)
    p.add_argument("--arms", required=True, help='JSON file: [{"id","text","impressions","clicks"}...]')
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--narrate", action="store_true")
    _add_provider_args(p)
    _add_chat_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_insights)

    p = sub.add_parser("opportunities", help="surface missing, high-impact attributes")
    p.add_argument("--bundle", required=True)
    p.add_argument("--variants", required=True, help='JSON file: [{"id","text"}...]')
    p.add_argument("--history-means", default=None, help="JSON array of per-attribute history means")
    p.add_argument("--history-experiments", default=None, help="historical table for novelty")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--narrate", action="store_true")
    _add_provider_args(p)
    _add_chat_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_opportunities)

    p = sub.add_parser("eval", help="transfer or leave-one-out evaluation")
    p.add_argument("--mode", choices=("transfer", "loo"), default="transfer")
    p.add_argument("--bundle", default=None, help="bundle (transfer mode)")
    p.add_argument("--test-experiments", default=None, help="labeled test table (transfer mode)")
    p.add_argument("--experiments", default=None, help="corpus (loo mode)")
    p.add_argument("--q", type=int, default=64)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--no-peek", action="store_true", help="fit per-fold PCA on training folds only")
    p.add_argument(
        "--backend",
        action="append",
        default=None,
        help="loo back-end spec, repeatable: hash[:dim=N[:seed=N]] | file:PATH | http:URL",
    )
    p.add_argument("--per-experiment-csv", default=None)
    _add_provider_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="serve the scoring/insights/opportunities API")
    p.add_argument("--bundle", required=True)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    _add_provider_args(p)
    _add_chat_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CopyrankError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal failure
        print(f"internal error in {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
