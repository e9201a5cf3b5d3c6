#!/usr/bin/env python3
"""Generate a synthetic planted-model corpus as CSV, for demos and smoke runs.

CTRs are fe_k + phi' beta_star (+ optional Gaussian noise) where phi comes
from the deterministic hash embedding provider, so a pipeline trained with
the same provider settings can recover the ranking signal exactly.

Example:
    python scripts/make_synthetic_corpus.py --out corpus.csv \
        --experiments 40 --arms 4 --dim 32 --seed 104 --noise 0.0
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from copyrank.embedding import HashProvider, embed_batch, stack  # noqa: E402

WORDS = (
    "save big today start now limited offer your journey trusted deal "
    "discover the secret best value join thousands act fast new season "
    "free trial premium upgrade smart choice everyday low prices"
).split()


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--experiments", type=int, default=40)
    parser.add_argument("--arms", type=int, default=4)
    parser.add_argument("--dim", type=int, default=32)
    parser.add_argument("--seed", type=int, default=104)
    parser.add_argument("--noise", type=float, default=0.0, help="CTR noise stddev")
    parser.add_argument("--signal", type=float, default=0.01, help="signal stddev")
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    provider = HashProvider(dim=args.dim, seed=args.seed)

    texts = []
    seen = set()
    for _ in range(args.experiments):
        exp_texts = []
        while len(exp_texts) < args.arms:
            text = " ".join(rng.choice(WORDS, size=6))
            if text not in seen:
                seen.add(text)
                exp_texts.append(text)
        texts.append(exp_texts)

    flat = [t for exp in texts for t in exp]
    mean = stack(embed_batch(provider, flat)).mean(axis=0)
    beta_star = rng.standard_normal(args.dim)
    beta_star *= args.signal / np.linalg.norm(beta_star)

    denominator = 10**9
    lines = ["test_id,arm_id,text,impressions,clicks"]
    for k, exp_texts in enumerate(texts):
        fe = 0.10 + 0.04 * rng.random()
        phis = stack(embed_batch(provider, exp_texts)) - mean
        y = fe + phis @ beta_star
        if args.noise > 0:
            y = y + rng.normal(0.0, args.noise, size=len(exp_texts))
        y = np.clip(y, 1e-6, 1 - 1e-6)
        for i, (text, ctr) in enumerate(zip(exp_texts, y)):
            lines.append(f"exp{k},arm{i},{text},{denominator},{int(round(ctr * denominator))}")

    Path(args.out).write_text("\n".join(lines) + "\n")
    print(
        f"wrote {args.experiments} experiments x {args.arms} arms to {args.out} "
        f"(provider hash:d{args.dim}:s{args.seed})"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
