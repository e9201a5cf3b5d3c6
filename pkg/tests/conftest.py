"""Shared fixtures: a small lexicon, deterministic providers, synthetic
planted-model corpora, and one trained bundle reused across suites."""

import numpy as np
import pytest

from copyrank.attributes import default_lexicon_path, load_lexicon
from copyrank.embedding import HashProvider, embed_batch, fit_centering, stack
from copyrank.ingest import build_experiment, ExperimentSet
from copyrank.pipeline import TrainConfig, make_embedder, train_pipeline

WORDS = (
    "save big today start now limited offer your journey trusted deal "
    "discover the secret best value join thousands act fast new season "
    "free trial premium upgrade smart choice everyday low prices"
).split()


def random_texts(rng: np.random.Generator, n: int, n_words: int = 5) -> list[str]:
    out = []
    seen = set()
    while len(out) < n:
        text = " ".join(rng.choice(WORDS, size=n_words))
        if text not in seen:
            seen.add(text)
            out.append(text)
    return out


def planted_corpus(
    provider: HashProvider,
    n_experiments: int,
    arms_per: int,
    seed: int,
    noise: float = 0.0,
    n_train_for_centering: int | None = None,
    source_tag: str = "synthetic",
):
    """Experiments whose CTRs are fe_k + phi' beta_star (+ optional noise).

    phi is the provider embedding centered by the mean over the first
    n_train_for_centering experiments' texts (default: all), matching what
    the training pipeline will compute. Counts use 1e9 impressions so the
    stored click fractions reproduce the planted CTRs to 1e-9.
    """
    rng = np.random.default_rng(seed)
    texts = [random_texts(rng, arms_per, n_words=6) for _ in range(n_experiments)]
    n_center = n_train_for_centering if n_train_for_centering is not None else n_experiments
    center_texts = [t for exp in texts[:n_center] for t in exp]

    vectors = embed_batch(provider, center_texts)
    mean = stack(vectors).mean(axis=0)

    p = provider.dim
    beta_star = rng.standard_normal(p)
    beta_star *= 0.01 / np.linalg.norm(beta_star)

    experiments = []
    denominator = 10**9
    for k, exp_texts in enumerate(texts):
        fe = 0.10 + 0.04 * rng.random()
        phis = stack(embed_batch(provider, exp_texts)) - mean
        y = fe + phis @ beta_star
        if noise > 0:
            y = y + rng.normal(0.0, noise, size=len(exp_texts))
        y = np.clip(y, 1e-6, 1 - 1e-6)
        arms = [
            (f"arm{i}", text, denominator, int(round(ctr * denominator)))
            for i, (text, ctr) in enumerate(zip(exp_texts, y))
        ]
        experiments.append(build_experiment(f"exp{k}", arms))
    return ExperimentSet(tuple(experiments), source_tag=source_tag), beta_star


def write_experiments_csv(experiment_set: ExperimentSet, path) -> None:
    lines = ["test_id,arm_id,text,impressions,clicks"]
    for exp in experiment_set.experiments:
        for arm in exp.arms:
            lines.append(
                f"{exp.experiment_id},{arm.arm_id},{arm.text},{arm.impressions},{arm.clicks}"
            )
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture(scope="session")
def lexicon():
    return load_lexicon(default_lexicon_path())


@pytest.fixture(scope="session")
def provider():
    return HashProvider(dim=24, seed=5)


@pytest.fixture(scope="session")
def trained_bundle(lexicon, provider):
    corpus, _ = planted_corpus(provider, n_experiments=8, arms_per=3, seed=11)
    config = TrainConfig(q=6, ridge=1e-6, lam="cv", cv_folds=4, seed=3, pca_fit="train")
    return train_pipeline(corpus, lexicon, provider, config)


@pytest.fixture(scope="session")
def trained_embedder(trained_bundle, provider):
    return make_embedder(trained_bundle, provider)
