#!/usr/bin/env python3
"""Leave-one-out back-end comparison on a corpus, offline-friendly.

Runs the LOO harness across several embedding back-ends and prints a
mean-rho table. With hash back-ends this exercises the harness end to end
without network; point --backend at file:/http: providers for real models.

Example:
    python scripts/make_synthetic_corpus.py --out corpus.csv --experiments 10 --arms 6 --dim 16 --seed 2
    python scripts/loo_ablation.py --experiments corpus.csv --backend hash:dim=16:seed=2 --backend hash:dim=8:seed=0 --q 6
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from copyrank.cli import _parse_backend  # noqa: E402
from copyrank.evaluation import LooBackend, leave_one_out  # noqa: E402
from copyrank.ingest import load_experiments  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--experiments", required=True)
    parser.add_argument("--backend", action="append", required=True)
    parser.add_argument("--q", type=int, default=64)
    parser.add_argument("--ridge", type=float, default=1e-6)
    parser.add_argument("--no-peek", action="store_true")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    corpus = load_experiments(args.experiments)
    print(f"{len(corpus)} experiments loaded")
    backends = [
        LooBackend(
            name=provider.provider_id,
            provider=provider,
            q=args.q,
            ridge=args.ridge,
            pca_fit="train" if args.no_peek else "heldout",
        )
        for provider in (_parse_backend(s, args.seed) for s in args.backend)
    ]
    results = leave_one_out(corpus, backends)
    width = max(len(r.backend) for r in results)
    print(f"{'backend'.ljust(width)}  mean rho            folds  failed")
    for r in results:
        print(
            f"{r.backend.ljust(width)}  {r.mean_rho:+.4f} +- {r.rho_stddev:.4f}  "
            f"{r.n_folds:5d}  {r.n_failed:6d}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
