"""Rank-quality metrics and evaluation harnesses: mean Spearman rho, Top-1
accuracy, the random-guess baseline, transfer evaluation, and leave-one-out
comparison across embedding back-ends."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .attributes import AttributeLexicon
from .embedding import EmbeddingCache, EmbeddingProvider, center_matrix, embed_batch, fit_centering, stack
from .errors import UndefinedCorrelationError, ValidationError
from .ingest import ExperimentRecord, ExperimentSet, true_ranks
from .projection import fit_pca, project_matrix
from .ranker import fit_ranker, predict_scores, rank_variants

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalResult:
    per_experiment_rho: tuple[float, ...]
    mean_rho: float
    rho_stddev: float
    top1_accuracy: float
    random_top1_baseline: float
    n_experiments: int
    n_excluded: int = 0
    excluded: tuple[tuple[str, str], ...] = ()  # (experiment_id, reason)


@dataclass(frozen=True)
class LooBackend:
    """One leave-one-out configuration: a provider plus ranking hyperparameters."""

    name: str
    provider: EmbeddingProvider
    q: int = 64
    ridge: float = 1e-6
    pca_fit: str = "heldout"  # "heldout" (default) or "train" (strict no-peek)


@dataclass(frozen=True)
class LooResult:
    backend: str
    per_fold_rho: tuple[float, ...]
    mean_rho: float
    rho_stddev: float
    n_folds: int
    n_failed: int
    failures: tuple[tuple[str, str], ...] = ()


def spearman(true_rank_vector, predicted_rank_vector) -> float:
    """Pearson correlation of two tie-averaged rank vectors."""
    r = np.asarray(true_rank_vector, dtype=float)
    r_hat = np.asarray(predicted_rank_vector, dtype=float)
    if r.shape != r_hat.shape or r.ndim != 1 or r.size < 2:
        raise ValidationError("rank vectors must share a length of at least 2")
    rc = r - r.mean()
    pc = r_hat - r_hat.mean()
    denom = np.sqrt((rc @ rc) * (pc @ pc))
    if denom == 0.0:
        raise UndefinedCorrelationError("zero variance in a rank vector")
    return float((rc @ pc) / denom)


def top1_accuracy(pairs: Sequence[tuple]) -> float:
    """Fraction of experiments whose predicted best arm matches the observed best."""
    if len(pairs) == 0:
        raise ValidationError("need at least one experiment")
    return sum(1 for truth, pred in pairs if truth == pred) / len(pairs)


def random_top1_baseline(arm_counts: Sequence[int]) -> float:
    """Expected Top-1 accuracy of a uniform guess: mean of 1/n over experiments."""
    counts = list(arm_counts)
    if len(counts) == 0:
        raise ValidationError("need at least one experiment")
    if any(c < 2 for c in counts):
        raise ValidationError("every experiment needs at least 2 arms")
    return float(np.mean([1.0 / c for c in counts]))


def bootstrap_ci(
    values: Sequence[float], n_boot: int = 10_000, alpha: float = 0.05, seed: int = 0
) -> tuple[float, float]:
    """Percentile bootstrap CI for the mean of per-experiment metrics."""
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        raise ValidationError("bootstrap needs at least 2 values")
    rng = np.random.default_rng(seed)
    means = rng.choice(arr, size=(n_boot, arr.size), replace=True).mean(axis=1)
    lo, hi = np.quantile(means, [alpha / 2, 1 - alpha / 2])
    return float(lo), float(hi)


def _aggregate(
    rhos: list[float],
    hits: list[bool],
    counts: list[int],
    excluded: list[tuple[str, str]],
) -> EvalResult:
    mean_rho = float(np.mean(rhos)) if rhos else float("nan")
    stddev = float(np.std(rhos, ddof=1)) if len(rhos) > 1 else 0.0
    return EvalResult(
        per_experiment_rho=tuple(rhos),
        mean_rho=mean_rho,
        rho_stddev=stddev,
        top1_accuracy=(sum(hits) / len(hits)) if hits else float("nan"),
        random_top1_baseline=random_top1_baseline(counts) if counts else float("nan"),
        n_experiments=len(rhos),
        n_excluded=len(excluded),
        excluded=tuple(excluded),
    )


def _predicted_best(scores: np.ndarray) -> int:
    best = int(np.argmax(scores))
    if np.sum(scores == scores[best]) > 1:
        logger.info("tied top score; breaking by first index")
    return best


def _observed_best(ctrs: Sequence[float]) -> int:
    arr = np.asarray(ctrs, dtype=float)
    best = int(np.argmax(arr))
    if np.sum(arr == arr[best]) > 1:
        logger.info("tied observed CTR; breaking by first index")
    return best


def evaluate_transfer(
    bundle,
    test_set: ExperimentSet,
    provider: EmbeddingProvider,
    cache: Optional[EmbeddingCache] = None,
) -> EvalResult:
    """Score every test experiment through the bundle and compare rankings.

    Per experiment: embed, center with the bundle's corpus mean, project,
    score, rank; Spearman rho against the observed CTR ranks and a Top-1
    hit. Degenerate experiments (undefined CTR, zero rank variance) are
    excluded and counted.
    """
    if provider.provider_id != bundle.provider_id:
        raise ValidationError(
            f"provider {provider.provider_id!r} does not match the bundle's "
            f"{bundle.provider_id!r}; embeddings would live in a different space"
        )
    rhos: list[float] = []
    hits: list[bool] = []
    counts: list[int] = []
    excluded: list[tuple[str, str]] = []
    for experiment in test_set.experiments:
        if len(experiment.arms) < 2:
            excluded.append((experiment.experiment_id, "fewer than 2 arms"))
            continue
        try:
            observed = true_ranks(experiment)
        except Exception as exc:
            excluded.append((experiment.experiment_id, str(exc)))
            continue
        texts = [arm.text for arm in experiment.arms]
        vectors = embed_batch(provider, texts, cache=cache)
        phis = center_matrix(stack(vectors), bundle.centering)
        scores = predict_scores(bundle.ranker, project_matrix(bundle.projection, phis))
        try:
            rho = spearman(observed, rank_variants(scores))
        except UndefinedCorrelationError as exc:
            excluded.append((experiment.experiment_id, str(exc)))
            logger.warning("excluding %s: %s", experiment.experiment_id, exc)
            continue
        rhos.append(rho)
        hits.append(
            _observed_best([c for c in experiment.observed_ctr]) == _predicted_best(scores)
        )
        counts.append(len(experiment.arms))
    return _aggregate(rhos, hits, counts, excluded)


def _rank_only_fit(
    training: Sequence[ExperimentRecord],
    heldout: ExperimentRecord,
    backend: LooBackend,
    cache: Optional[EmbeddingCache],
) -> float:
    """Fit the ranking path on the training folds and score the held-out experiment."""
    train_texts = [arm.text for exp in training for arm in exp.arms]
    vectors = embed_batch(backend.provider, train_texts, cache=cache)
    centering = fit_centering(vectors, corpus_tag="loo-train")
    train_phis = center_matrix(stack(vectors), centering)

    held_vectors = embed_batch(
        backend.provider, [arm.text for arm in heldout.arms], cache=cache
    )
    held_phis = center_matrix(stack(held_vectors), centering)

    fit_corpus = held_phis if backend.pca_fit == "heldout" else train_phis
    q = min(backend.q, fit_corpus.shape[1], fit_corpus.shape[0])
    projection = fit_pca(list(fit_corpus), q)

    triples = []
    i = 0
    for exp in training:
        for arm, ctr in zip(exp.arms, exp.observed_ctr):
            if ctr is None:
                raise ValidationError(f"undefined CTR in training arm {arm.arm_id!r}")
            triples.append((exp.experiment_id, project_matrix(projection, train_phis[i]).ravel(), ctr))
            i += 1
    model = fit_ranker(triples, ridge=backend.ridge)

    scores = predict_scores(model, project_matrix(projection, held_phis))
    return spearman(true_ranks(heldout), rank_variants(scores))


def leave_one_out(
    corpus: ExperimentSet,
    backends: Sequence[LooBackend],
    cache: Optional[EmbeddingCache] = None,
) -> list[LooResult]:
    """Hold out each experiment in turn, refit the ranking path, report rho per back-end."""
    if len(corpus.experiments) < 2:
        raise ValidationError("leave-one-out needs at least 2 experiments")
    results = []
    for backend in backends:
        rhos: list[float] = []
        failures: list[tuple[str, str]] = []
        for i, heldout in enumerate(corpus.experiments):
            training = [e for j, e in enumerate(corpus.experiments) if j != i]
            try:
                rhos.append(_rank_only_fit(training, heldout, backend, cache))
            except Exception as exc:
                failures.append((heldout.experiment_id, str(exc)))
                logger.warning(
                    "fold %s failed for backend %s: %s",
                    heldout.experiment_id,
                    backend.name,
                    exc,
                )
        results.append(
            LooResult(
                backend=backend.name,
                per_fold_rho=tuple(rhos),
                mean_rho=float(np.mean(rhos)) if rhos else float("nan"),
                rho_stddev=float(np.std(rhos, ddof=1)) if len(rhos) > 1 else 0.0,
                n_folds=len(rhos),
                n_failed=len(failures),
                failures=tuple(failures),
            )
        )
    return results


class JudgeScoreProvider:
    """Embedding back-end that asks a chat model to score each text per attribute (1-5).

    The m-vector of judged attribute levels becomes the text's
    representation, the comparison back-end usually labeled "attribute
    score" in ablations.
    """

    def __init__(self, client, lexicon: AttributeLexicon, provider_id: Optional[str] = None):
        self._client = client
        self._lexicon = lexicon
        names = ",".join(lexicon.names)
        self.provider_id = provider_id or f"attr-judge:{hash(names) & 0xFFFFFFFF:08x}"

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        system = (
            "You rate marketing copy. For the attribute given, answer with a single "
            "integer 1-5 for how strongly the copy expresses it. 1 = absent, 5 = dominant."
        )
        out = []
        for text in texts:
            scores = []
            for attr in self._lexicon.attributes:
                user = (
                    f"Attribute: {attr.name} ({attr.description})\n"
                    f'Copy: "{text}"\nRating (1-5):'
                )
                completion = self._client.complete(system, user, temperature=0.0)
                match = re.search(r"[1-5]", completion or "")
                scores.append(float(match.group()) if match else 3.0)
            out.append(np.asarray(scores, dtype=float))
        return out
