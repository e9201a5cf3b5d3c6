#!/usr/bin/env python3
"""Public-data sanity check on the Upworthy Research Archive.

Trains on a 500-test subsample of the open Upworthy headline A/B corpus,
holds out 100 tests within-domain, and verifies the pipeline carries real
ranking signal: mean Spearman rho > 0 with a 95% bootstrap CI excluding 0.
This checks signal transfer on public data; it does not reproduce any
proprietary benchmark.

Needs (i) the Upworthy archive CSV and (ii) a real embedding endpoint
(semantic vectors; the hash provider carries no signal by construction):

  1. Download the archive (exploratory packages CSV) from the project page
     https://osf.io/vy8mj/ and pass it via --raw, or pass an already
     prepared file via --prepared.
  2. Serve any sentence-embedding model behind the provider contract
     POST {"texts": [...]} -> {"embeddings": [[...], ...]} and pass --provider-url.

Then:
  python scripts/upworthy_sanity.py --raw packages.csv --provider-url http://localhost:9000/embed

The prepared CSV (copyrank schema) is cached next to the raw file, and
embeddings are cached under --cache-dir, so reruns are fast.
"""

import argparse
import csv
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from copyrank.attributes import default_lexicon_path, load_lexicon  # noqa: E402
from copyrank.embedding import EmbeddingCache, HTTPProvider  # noqa: E402
from copyrank.evaluation import bootstrap_ci, evaluate_transfer  # noqa: E402
from copyrank.ingest import ExperimentSet, load_experiments  # noqa: E402
from copyrank.pipeline import TrainConfig, train_pipeline  # noqa: E402

RAW_COLUMNS = ("clickability_test_id", "headline", "impressions", "clicks")


def prepare(raw_path: Path, out_path: Path, min_impressions: int = 1000) -> Path:
    """Map the archive's columns onto the copyrank schema, one arm per row."""
    with open(raw_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in RAW_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SystemExit(f"{raw_path}: missing expected archive columns {missing}")
        counters: dict[str, int] = {}
        with open(out_path, "w", newline="", encoding="utf-8") as out:
            writer = csv.writer(out)
            writer.writerow(["test_id", "arm_id", "text", "impressions", "clicks"])
            for row in reader:
                test_id = row["clickability_test_id"].strip()
                headline = " ".join(row["headline"].split())
                if not test_id or not headline:
                    continue
                try:
                    impressions = int(float(row["impressions"]))
                    clicks = int(float(row["clicks"]))
                except ValueError:
                    continue
                if impressions < min_impressions or clicks > impressions:
                    continue
                counters[test_id] = counters.get(test_id, 0) + 1
                writer.writerow(
                    [test_id, f"arm{counters[test_id]}", headline, impressions, clicks]
                )
    return out_path


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--raw", help="archive packages CSV (clickability_test_id, headline, ...)")
    parser.add_argument("--prepared", help="already-prepared CSV in the copyrank schema")
    parser.add_argument("--provider-url", required=True)
    parser.add_argument("--cache-dir", default=".upworthy-cache")
    parser.add_argument("--train-tests", type=int, default=500)
    parser.add_argument("--holdout-tests", type=int, default=100)
    parser.add_argument("--q", type=int, default=64)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    if args.prepared:
        prepared = Path(args.prepared)
    elif args.raw:
        raw = Path(args.raw)
        prepared = raw.with_suffix(".copyrank.csv")
        if not prepared.exists():
            print(f"preparing {prepared} from {raw} ...")
            prepare(raw, prepared)
    else:
        parser.error("pass --raw (archive CSV) or --prepared (converted CSV)")

    corpus = load_experiments(prepared)
    needed = args.train_tests + args.holdout_tests
    if len(corpus) < needed:
        raise SystemExit(f"corpus has {len(corpus)} usable tests; need {needed}")
    print(f"loaded {len(corpus)} experiments from {prepared}")

    train = ExperimentSet(corpus.experiments[: args.train_tests], source_tag="upworthy-train")
    test = ExperimentSet(
        corpus.experiments[args.train_tests : needed], source_tag="upworthy-test"
    )

    provider = HTTPProvider(args.provider_url)
    cache = EmbeddingCache(args.cache_dir)
    lexicon = load_lexicon(default_lexicon_path())
    config = TrainConfig(q=args.q, ridge=1e-6, lam="cv", seed=args.seed, pca_fit="target")

    print("training (embedding calls dominate; cached reruns are fast) ...")
    bundle = train_pipeline(train, lexicon, provider, config, target=test, cache=cache)
    result = evaluate_transfer(bundle, test, provider, cache=cache)

    lo, hi = bootstrap_ci(result.per_experiment_rho, n_boot=10_000, seed=args.seed)
    print(
        f"mean rho {result.mean_rho:.4f} +- {result.rho_stddev:.4f} over "
        f"{result.n_experiments} experiments ({result.n_excluded} excluded); "
        f"top-1 {result.top1_accuracy:.4f} vs random {result.random_top1_baseline:.4f}"
    )
    print(f"95% bootstrap CI for mean rho: [{lo:.4f}, {hi:.4f}]")
    if result.mean_rho > 0 and lo > 0:
        print("SANITY PASS: CI excludes 0")
        return 0
    print("SANITY FAIL: CI does not exclude 0")
    return 1


if __name__ == "__main__":
    sys.exit(main())
