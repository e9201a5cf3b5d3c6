import numpy as np
import pytest
from conftest import planted_corpus, random_texts
from scipy import stats as scipy_stats

from copyrank.attributes import Attribute, AttributeLexicon
from copyrank.embedding import HashProvider
from copyrank.errors import UndefinedCorrelationError, ValidationError
from copyrank.evaluation import (
    JudgeScoreProvider,
    LooBackend,
    bootstrap_ci,
    evaluate_transfer,
    leave_one_out,
    random_top1_baseline,
    spearman,
    top1_accuracy,
)
from copyrank.ingest import ExperimentSet, build_experiment
from copyrank.pipeline import TrainConfig, train_pipeline
from copyrank.ranks import fractional_ranks


def test_spearman_identity_and_reversal():
    assert spearman([1, 2, 3], [1, 2, 3]) == 1.0
    assert spearman([1, 2, 3], [3, 2, 1]) == -1.0


def test_spearman_brute_force_formula():
    # tie-free oracle: 1 - 6 sum(d^2) / (n (n^2 - 1))
    r, r_hat = [1, 2, 3], [2, 1, 3]
    d2 = sum((a - b) ** 2 for a, b in zip(r, r_hat))
    expected = 1 - 6 * d2 / (3 * (9 - 1))
    assert np.isclose(spearman(r, r_hat), expected)
    assert np.isclose(spearman(r, r_hat), 0.5)


def test_spearman_matches_scipy_pearson_on_ranks():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(3, 12))
        a = fractional_ranks(rng.integers(0, 6, size=n).astype(float))
        b = fractional_ranks(rng.integers(0, 6, size=n).astype(float))
        if np.var(a) == 0 or np.var(b) == 0:
            continue
        assert np.isclose(spearman(a, b), scipy_stats.pearsonr(a, b)[0], atol=1e-12)


def test_spearman_symmetric_and_shift_invariant():
    rng = np.random.default_rng(1)
    a = fractional_ranks(rng.random(8))
    b = fractional_ranks(rng.random(8))
    assert np.isclose(spearman(a, b), spearman(b, a), atol=1e-14)
    assert np.isclose(spearman(a, b), spearman(a + 5, b), atol=1e-12)


def test_spearman_invariant_under_common_monotone_relabeling():
    rng = np.random.default_rng(13)
    for _ in range(20):
        x = rng.integers(0, 9, size=6).astype(float)
        y = rng.integers(0, 9, size=6).astype(float)
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            continue
        base = spearman(fractional_ranks(x), fractional_ranks(y))
        relabeled = spearman(
            fractional_ranks(x**3 + 2 * x), fractional_ranks(y**3 + 2 * y)
        )
        assert np.isclose(base, relabeled, atol=1e-12)


def test_spearman_zero_variance_rejected():
    with pytest.raises(UndefinedCorrelationError):
        spearman([1.5, 1.5], [1.0, 2.0])


def test_top1_accuracy_counting():
    assert top1_accuracy([("a", "a"), ("b", "b")]) == 1.0
    assert top1_accuracy([("a", "b"), ("b", "a")]) == 0.0
    pairs = [(i, i if i < 7 else -1) for i in range(10)]
    assert top1_accuracy(pairs) == 0.7


def test_random_baseline_arithmetic():
    assert np.isclose(random_top1_baseline([2, 3]), 5 / 12)
    assert random_top1_baseline([2, 2, 2]) == 0.5
    with pytest.raises(ValidationError):
        random_top1_baseline([1, 3])


def test_random_baseline_bounds():
    rng = np.random.default_rng(2)
    for _ in range(20):
        counts = rng.integers(2, 12, size=int(rng.integers(1, 9)))
        value = random_top1_baseline(list(counts))
        assert 0.0 < value <= 0.5


def full_rank_bundle(provider, corpus, lexicon, ridge=0.0):
    config = TrainConfig(
        q=provider.dim, ridge=ridge, lam=0.05, seed=0, pca_fit="train"
    )
    return train_pipeline(corpus, lexicon, provider, config)


def test_transfer_self_consistent_synthetic(lexicon):
    provider = HashProvider(dim=24, seed=21)
    corpus, _ = planted_corpus(
        provider, n_experiments=12, arms_per=5, seed=3, n_train_for_centering=8
    )
    train = ExperimentSet(corpus.experiments[:8], source_tag="train")
    test = ExperimentSet(corpus.experiments[8:], source_tag="test")
    bundle = full_rank_bundle(provider, train, lexicon)
    result = evaluate_transfer(bundle, test, provider)
    assert result.n_experiments == 4
    assert result.mean_rho == 1.0
    assert result.top1_accuracy == 1.0
    assert result.rho_stddev == 0.0
    assert np.isclose(result.random_top1_baseline, 1 / 5)
    # aggregate recomputes exactly from the per-experiment values
    assert len(result.per_experiment_rho) == result.n_experiments
    assert result.mean_rho == np.mean(result.per_experiment_rho)


def test_transfer_null_predictions_center_on_zero(lexicon):
    provider = HashProvider(dim=24, seed=22)
    train, _ = planted_corpus(provider, n_experiments=8, arms_per=4, seed=4)
    bundle = full_rank_bundle(provider, train, lexicon, ridge=1e-6)

    # observed CTRs independent of the text: the model's rho has mean ~0
    rng = np.random.default_rng(5)
    experiments = []
    for k in range(40):
        texts = random_texts(rng, 4, n_words=6)
        arms = [
            (f"a{i}", t, 10**6, int(rng.integers(1000, 50_000)))
            for i, t in enumerate(texts)
        ]
        experiments.append(build_experiment(f"null{k}", arms))
    null_set = ExperimentSet(tuple(experiments), source_tag="null")

    result = evaluate_transfer(bundle, null_set, provider)
    n = result.n_experiments
    assert n == 40
    assert abs(result.mean_rho) <= 3 * result.rho_stddev / np.sqrt(n)


def test_transfer_excludes_degenerate_experiments(lexicon):
    provider = HashProvider(dim=24, seed=23)
    corpus, _ = planted_corpus(provider, n_experiments=6, arms_per=3, seed=6)
    bundle = full_rank_bundle(provider, corpus, lexicon, ridge=1e-6)
    rng = np.random.default_rng(7)
    tied = build_experiment(
        "tied",
        [(f"a{i}", t, 1000, 50) for i, t in enumerate(random_texts(rng, 3))],
    )
    test = ExperimentSet((corpus.experiments[0], tied), source_tag="t")
    result = evaluate_transfer(bundle, test, provider)
    assert result.n_experiments == 1
    assert result.n_excluded == 1
    assert result.excluded[0][0] == "tied"


def test_transfer_rejects_provider_mismatch(lexicon):
    provider = HashProvider(dim=24, seed=24)
    corpus, _ = planted_corpus(provider, n_experiments=4, arms_per=3, seed=8)
    bundle = full_rank_bundle(provider, corpus, lexicon, ridge=1e-6)
    with pytest.raises(ValidationError, match="provider"):
        evaluate_transfer(bundle, corpus, HashProvider(dim=24, seed=99))


def test_leave_one_out_exact_linear_structure():
    provider = HashProvider(dim=4, seed=25)
    corpus, _ = planted_corpus(provider, n_experiments=3, arms_per=6, seed=9)
    backend = LooBackend(name="hash4", provider=provider, q=4, ridge=0.0)
    (result,) = leave_one_out(corpus, [backend])
    assert result.n_folds == 3
    assert result.n_failed == 0
    assert np.isclose(result.mean_rho, 1.0, atol=1e-9)


def test_leave_one_out_heldout_vs_nopeek_both_run():
    provider = HashProvider(dim=6, seed=26)
    corpus, _ = planted_corpus(provider, n_experiments=4, arms_per=8, seed=10)
    results = leave_one_out(
        corpus,
        [
            LooBackend(name="heldout", provider=provider, q=6, ridge=0.0),
            LooBackend(name="nopeek", provider=provider, q=6, ridge=0.0, pca_fit="train"),
        ],
    )
    assert [r.backend for r in results] == ["heldout", "nopeek"]
    assert all(r.n_folds == 4 for r in results)
    assert np.isclose(results[0].mean_rho, 1.0, atol=1e-9)
    assert np.isclose(results[1].mean_rho, 1.0, atol=1e-9)


def test_leave_one_out_constant_ctr_corpus_all_excluded():
    provider = HashProvider(dim=4, seed=27)
    rng = np.random.default_rng(11)
    experiments = [
        build_experiment(
            f"c{k}",
            [(f"a{i}", t, 1000, 10) for i, t in enumerate(random_texts(rng, 3))],
        )
        for k in range(3)
    ]
    corpus = ExperimentSet(tuple(experiments), source_tag="flat")
    (result,) = leave_one_out(corpus, [LooBackend(name="h", provider=provider, q=2)])
    assert result.n_folds == 0
    assert result.n_failed == 3
    assert len(result.failures) == 3


def test_bootstrap_ci_excludes_zero_for_positive_sample():
    rng = np.random.default_rng(12)
    values = rng.normal(0.5, 0.1, size=50)
    lo, hi = bootstrap_ci(values, n_boot=2000, seed=0)
    assert lo > 0
    centered = rng.normal(0.0, 1.0, size=50)
    lo2, hi2 = bootstrap_ci(centered, n_boot=2000, seed=0)
    assert lo2 < 0 < hi2


def test_judge_score_provider_builds_attribute_vectors():
    lexicon = AttributeLexicon(
        (
            Attribute("urgency", "time pressure", ("hurry",)),
            Attribute("social_proof", "others bought", ("thousands",)),
        )
    )

    class RatingClient:
        def complete(self, system, user, temperature=0.0):
            return "5" if "urgency" in user and "hurry" in user.lower() else "2"

    provider = JudgeScoreProvider(RatingClient(), lexicon)
    vectors = provider.embed(["Hurry, sale ends soon", "Everyone loves it"])
    assert vectors[0].shape == (2,)
    assert vectors[0][0] == 5.0
    assert vectors[0][1] == 2.0
