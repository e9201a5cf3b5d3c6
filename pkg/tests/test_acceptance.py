"""Acceptance suite: one test per criterion, each printing a PASS line.

Tolerances are pinned here and nowhere else. The public-data check needs
the Upworthy corpus and a real embedding endpoint; it skips (not passes)
when those are absent, and scripts/upworthy_sanity.py documents how to
supply them.
"""

import contextlib
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from conftest import planted_corpus, random_texts, write_experiments_csv
from fastapi.testclient import TestClient
from helpers import kkt_residual, random_dictionary
from scipy.sparse.linalg import lsqr

from copyrank.attributes import default_lexicon_path, load_lexicon
from copyrank.cli import main as cli_main
from copyrank.embedding import HashProvider
from copyrank.errors import UndefinedCorrelationError
from copyrank.evaluation import (
    bootstrap_ci,
    evaluate_transfer,
    random_top1_baseline,
    spearman,
    top1_accuracy,
)
from copyrank.impact import (
    fit_sign_constrained_lasso,
    nuisance_component,
    pseudo_inverse_coefficients,
    sign_vector,
)
from copyrank.indices import select_missing_attributes
from copyrank.ingest import ExperimentSet, load_experiments
from copyrank.narration import (
    InsightCandidate,
    judge_batch,
    self_reflect,
)
from copyrank.pipeline import TrainConfig, make_embedder, rank_report, train_pipeline
from copyrank.ranks import fractional_ranks
from copyrank.service import create_app


def ok(line: str) -> None:
    print(f"PASS: {line}")


def test_pseudo_inverse_closed_form_oracle():
    started = time.perf_counter()
    rng = np.random.default_rng(100)
    for _ in range(20):
        dictionary = random_dictionary(rng, m=8, p=32)
        beta_prime = rng.standard_normal(32)
        closed_form = pseudo_inverse_coefficients(dictionary, beta_prime)

        iterative = lsqr(
            dictionary.v.T, beta_prime, atol=1e-14, btol=1e-14, iter_lim=100_000
        )[0]
        assert np.max(np.abs(closed_form - iterative)) <= 1e-8

        normal_eq = dictionary.v @ dictionary.v.T @ closed_form - dictionary.v @ beta_prime
        assert np.max(np.abs(normal_eq)) <= 1e-8
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0
    ok(f"pseudo-inverse oracle: 20 instances, closed form == lsqr to 1e-8 ({elapsed:.2f}s)")


def test_constrained_lasso_correctness():
    started = time.perf_counter()
    rng = np.random.default_rng(101)
    for _ in range(100):
        dictionary = random_dictionary(rng, m=8, p=32)
        beta_prime = rng.standard_normal(32)
        signs = sign_vector(dictionary, beta_prime)
        lam_roof = 2.0 * float(np.max(np.abs(dictionary.v @ beta_prime)))
        lambdas = np.geomspace(1e-3 * lam_roof, lam_roof, 10)

        previous_l1 = np.inf
        for lam in lambdas:  # ascending
            coefs = fit_sign_constrained_lasso(dictionary, beta_prime, float(lam))
            assert np.all(coefs * signs >= 0)  # (a) sign feasibility, exact
            assert kkt_residual(dictionary, beta_prime, coefs, float(lam)) <= 1e-6  # (b)
            l1 = float(np.abs(coefs).sum())
            assert l1 <= previous_l1 + 1e-10  # (c) shrinkage monotone
            previous_l1 = l1

    for _ in range(10):  # (d) lambda=0 with orthonormal rows
        dictionary = random_dictionary(rng, m=8, p=32, orthonormal=True)
        beta_prime = rng.standard_normal(32)
        coefs = fit_sign_constrained_lasso(dictionary, beta_prime, 0.0)
        assert np.max(np.abs(coefs - dictionary.v @ beta_prime)) <= 1e-8

    elapsed = time.perf_counter() - started
    assert elapsed < 30.0
    ok(f"constrained Lasso: 100x10 sign/KKT/monotonicity + orthonormal lambda=0 ({elapsed:.1f}s)")


def test_fixed_effects_estimator_equivalence():
    started = time.perf_counter()
    rng = np.random.default_rng(102)
    from copyrank.ranker import fit_ranker

    for _ in range(20):
        n_exp = int(rng.integers(2, 11))
        q = int(rng.integers(2, 6))
        triples = []
        for k in range(n_exp):
            for _ in range(int(rng.integers(2, 9))):
                triples.append((f"e{k}", rng.standard_normal(q), float(rng.normal())))

        within = fit_ranker(triples, ridge=0.0)

        ids = sorted({t[0] for t in triples})
        index = {e: i for i, e in enumerate(ids)}
        design = np.zeros((len(triples), len(ids) + q))
        ys = np.zeros(len(triples))
        for row, (exp_id, psi, y) in enumerate(triples):
            design[row, index[exp_id]] = 1.0
            design[row, len(ids):] = psi
            ys[row] = y
        dummy_beta = np.linalg.lstsq(design, ys, rcond=None)[0][len(ids):]
        assert np.max(np.abs(within.beta - dummy_beta)) <= 1e-8
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0
    ok(f"fixed effects: within-transform == dummy OLS on 20 instances ({elapsed:.2f}s)")


def test_decomposition_identity():
    rng = np.random.default_rng(103)
    dictionary = random_dictionary(rng, m=8, p=32)
    beta_prime = rng.standard_normal(32)
    beta_dprime = pseudo_inverse_coefficients(dictionary, beta_prime)
    for _ in range(100):
        phi_i, phi_j = rng.standard_normal((2, 32))
        delta_phi = phi_i - phi_j
        delta_s = dictionary.v @ delta_phi
        explained = float(delta_s @ beta_dprime)
        nuisance = float(nuisance_component(dictionary, delta_phi) @ beta_prime)
        gap = float(delta_phi @ beta_prime)
        assert abs(explained + nuisance - gap) <= 1e-8
    ok("decomposition identity: explained + nuisance == predicted gap on 100 pairs")


def _transfer_run(noise: float, seed: int):
    provider = HashProvider(dim=32, seed=seed)
    corpus, _ = planted_corpus(
        provider,
        n_experiments=40,
        arms_per=4,
        seed=seed,
        noise=noise,
        n_train_for_centering=30,
    )
    train = ExperimentSet(corpus.experiments[:30], source_tag="train")
    test = ExperimentSet(corpus.experiments[30:], source_tag="test")
    lexicon = load_lexicon(default_lexicon_path())
    config = TrainConfig(q=32, ridge=0.0, lam=0.05, seed=seed, pca_fit="target")
    bundle = train_pipeline(train, lexicon, provider, config, target=test)
    return evaluate_transfer(bundle, test, provider)


def test_end_to_end_synthetic_transfer():
    started = time.perf_counter()
    noiseless = _transfer_run(noise=0.0, seed=104)
    assert noiseless.n_experiments == 10
    assert noiseless.mean_rho >= 0.99
    assert noiseless.top1_accuracy == 1.0

    # noise sigma = 0.5 * signal (planted signal sd is 0.01)
    noisy = _transfer_run(noise=0.005, seed=105)
    assert noisy.mean_rho >= 0.3  # margin over the zero random baseline

    elapsed = time.perf_counter() - started
    assert elapsed < 60.0
    ok(
        "end-to-end transfer: noiseless rho "
        f"{noiseless.mean_rho:.3f}/top1 {noiseless.top1_accuracy:.2f}, "
        f"noisy rho {noisy.mean_rho:.3f} >= 0.3 ({elapsed:.1f}s)"
    )


def brute_force_rho(r, r_hat):
    n = len(r)
    mean_r = sum(r) / n
    mean_h = sum(r_hat) / n
    cov = sum((a - mean_r) * (b - mean_h) for a, b in zip(r, r_hat)) / n
    var_r = sum((a - mean_r) ** 2 for a in r) / n
    var_h = sum((b - mean_h) ** 2 for b in r_hat) / n
    return cov / (var_r * var_h) ** 0.5


def test_metric_oracles():
    rng = np.random.default_rng(106)
    checked = 0
    hits_mine = []
    hits_brute = []
    while checked < 1000:
        n = int(rng.integers(2, 11))
        true_scores = rng.integers(0, 8, size=n).astype(float)
        pred_scores = rng.integers(0, 8, size=n).astype(float)
        if np.ptp(true_scores) == 0 or np.ptp(pred_scores) == 0:
            continue
        r = fractional_ranks(true_scores)
        r_hat = fractional_ranks(pred_scores)
        assert abs(spearman(r, r_hat) - brute_force_rho(list(r), list(r_hat))) <= 1e-12
        hits_mine.append((int(np.argmax(true_scores)), int(np.argmax(pred_scores))))
        hits_brute.append(
            max(range(n), key=lambda i: (true_scores[i], -i))
            == max(range(n), key=lambda i: (pred_scores[i], -i))
        )
        checked += 1
    assert top1_accuracy(hits_mine) == sum(hits_brute) / len(hits_brute)  # exact
    assert random_top1_baseline([2, 3]) == (1 / 2 + 1 / 3) / 2  # expectation arithmetic, exact
    assert random_top1_baseline([2, 3]) == pytest.approx(5 / 12, abs=1e-15)
    ok("metric oracles: 1000 rank vectors, rho to 1e-12, top-1 exact, baseline 5/12")


def test_opportunity_semantics_planted():
    rng = np.random.default_rng(107)
    m = 10
    names = tuple(f"attr{i}" for i in range(m))
    wins = 0
    for _ in range(100):
        beta = rng.uniform(0.1, 1.0, size=m)
        planted = int(rng.integers(0, m))
        beta[planted] = 1.5  # top impact
        scores = rng.uniform(0.5, 1.0, size=(4, m))
        scores[:, planted] = rng.uniform(0.0, 0.05, size=4)  # suppressed
        selection = select_missing_attributes(beta, scores, names, k=3)
        if selection.attributes and selection.attributes[0] == names[planted]:
            wins += 1
    assert wins >= 95
    ok(f"opportunity semantics: planted attribute first in {wins}/100 re-draws")


UPWORTHY_ENV = "UPWORTHY_CSV"
PROVIDER_ENV = "COPYRANK_PROVIDER_URL"


@pytest.mark.skipif(
    not (os.environ.get(UPWORTHY_ENV) and os.environ.get(PROVIDER_ENV)),
    reason=(
        "public-data sanity needs the Upworthy corpus and a real embedding "
        f"endpoint: set {UPWORTHY_ENV} (see scripts/upworthy_sanity.py, which "
        f"downloads and prepares it) and {PROVIDER_ENV}; this sandbox has no "
        "general network access, so the check cannot run here"
    ),
)
def test_public_data_sanity():
    from copyrank.embedding import EmbeddingCache, HTTPProvider

    corpus = load_experiments(os.environ[UPWORTHY_ENV])
    assert len(corpus) >= 600, "need at least 600 experiments for a 500/100 split"
    provider = HTTPProvider(os.environ[PROVIDER_ENV])
    cache_dir = os.environ.get("COPYRANK_CACHE_DIR") or ".upworthy-cache"
    cache = EmbeddingCache(cache_dir)

    train = ExperimentSet(corpus.experiments[:500], source_tag="upworthy-train")
    test = ExperimentSet(corpus.experiments[500:600], source_tag="upworthy-test")
    lexicon = load_lexicon(default_lexicon_path())
    config = TrainConfig(q=64, ridge=1e-6, lam="cv", seed=7, pca_fit="target")
    bundle = train_pipeline(train, lexicon, provider, config, target=test, cache=cache)
    result = evaluate_transfer(bundle, test, provider, cache=cache)

    lo, hi = bootstrap_ci(result.per_experiment_rho, n_boot=10_000, seed=7)
    assert result.mean_rho > 0
    assert lo > 0, f"95% bootstrap CI [{lo:.4f}, {hi:.4f}] must exclude 0"
    ok(f"public-data sanity: mean rho {result.mean_rho:.4f}, CI [{lo:.4f}, {hi:.4f}]")


def test_narration_gates():
    treatments = [
        "Create incredible art and make complex edits in seconds",
        "Edit photos the ordinary way",
        "A photo tool for everyone",
    ]

    class AcceptAll:
        def complete(self, system, user, temperature=0.0):
            return "DECISION: ACCEPT"

    grounded = [
        InsightCandidate(
            attribute=f"attr{i}",
            explanation=f'winner quotes "in seconds" (case {i}).',
            cited_phrases=("in seconds",),
            polarity="positive",
        )
        for i in range(5)
    ]
    fabricated = InsightCandidate(
        attribute="fabricates",
        explanation='quotes "never appears anywhere".',
        cited_phrases=("never appears anywhere",),
        polarity="positive",
    )

    for k in (1, 2, 3, 7):
        result = self_reflect(AcceptAll(), grounded + [fabricated], treatments, k=k)
        assert len(result.accepted) <= k
        for candidate in result.accepted:
            assert candidate.cited_phrases
            for phrase in candidate.cited_phrases:
                assert any(phrase in t for t in treatments)
        assert all(c.attribute != "fabricates" for c in result.accepted)

    stream = iter([1, 0, 1, 1, 0, 1, 1, 0, 1, 1])  # 7 accepts out of 10

    class Scripted:
        def complete(self, system, user, temperature=0.0):
            return f"{next(stream)}: scripted verdict"

    _, rate = judge_batch(Scripted(), [f"item {i}" for i in range(10)], treatments)
    assert rate == 0.70
    ok("narration gates: |accepted| <= k, citations grounded, judge rate 0.70 exactly")


@pytest.fixture(scope="module")
def consistency_setup(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    provider = HashProvider(dim=24, seed=108)
    corpus, _ = planted_corpus(provider, n_experiments=8, arms_per=4, seed=108)
    train_csv = root / "train.csv"
    write_experiments_csv(corpus, train_csv)
    bundle_path = root / "model.bundle"
    code = cli_main(
        [
            "train",
            "--experiments", str(train_csv),
            "--lexicon", str(default_lexicon_path()),
            "--bundle", str(bundle_path),
            "--q", "8",
            "--lambda", "0.05",
            "--pca-fit", "train",
            "--embed-dim", "24",
            "--seed", "108",
        ]
    )
    assert code == 0
    return root, bundle_path, provider


def test_service_cli_consistency(consistency_setup):
    from copyrank.bundle import load_bundle, save_bundle

    root, bundle_path, provider = consistency_setup
    bundle = load_bundle(bundle_path)
    embedder = make_embedder(bundle, provider)
    app = create_app(bundle, embedder)
    client = TestClient(app)

    rng = np.random.default_rng(109)
    for trial in range(50):
        n = int(rng.integers(2, 6))
        variants = [
            {"id": f"v{i}", "text": " ".join(rng.choice(random_texts(rng, 1)[0].split() + ["extra", "words"], size=5))}
            for i in range(n)
        ]
        service_body = client.post("/rank", json={"variants": variants}).json()

        variants_file = root / f"variants{trial}.json"
        variants_file.write_text(json.dumps(variants))
        out = io.StringIO()
        with contextlib.redirect_stdout(out):
            code = cli_main(
                [
                    "rank",
                    "--bundle", str(bundle_path),
                    "--variants", str(variants_file),
                    "--embed-dim", "24",
                    "--seed", "108",
                ]
            )
        assert code == 0
        assert json.loads(out.getvalue()) == service_body

    # bundle save/load round trip is bit-exact
    copy_path = root / "copy.bundle"
    save_bundle(bundle, copy_path)
    assert copy_path.read_bytes() == bundle_path.read_bytes()

    payload = {"variants": [{"id": "a", "text": "alpha beta gamma"}, {"id": "b", "text": "delta epsilon zeta"}]}
    with ThreadPoolExecutor(max_workers=16) as pool:
        bodies = list(pool.map(lambda _: client.post("/rank", json=payload).content, range(100)))
    assert len(set(bodies)) == 1
    ok("service/CLI consistency: 50 rank parities, bit-exact bundle, 100 identical concurrent bodies")
