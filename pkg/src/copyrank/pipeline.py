"""End-to-end orchestration: offline training to a ModelBundle, and the
report builders shared verbatim by the CLI and the HTTP service."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import narration
from .attributes import (
    AttributeLexicon,
    attribute_scores,
    build_dictionary,
    score_matrix,
)
from .bundle import FORMAT_VERSION, ModelBundle
from .embedding import (
    CenteringStats,
    EmbeddingCache,
    EmbeddingProvider,
    center_matrix,
    embed_batch,
    fit_centering,
    stack,
)
from .errors import ValidationError
from .impact import bin_impact, fit_impact_model, nuisance_component
from .indices import (
    insight_contributions,
    opportunity_ranking,
    select_missing_attributes,
)
from .ingest import ArmRecord, ExperimentSet, normalize_text, validate_arm
from .projection import fit_pca, project_matrix
from .ranker import fit_ranker, predict_scores, rank_variants

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    q: int = 64
    ridge: float = 1e-6
    lam: float | str = "cv"  # explicit value or "cv"
    cv_folds: int = 5
    impact_floor: float = 0.05
    top_k: int = 3
    seed: int = 7
    pca_fit: str = "target"  # target | train | pooled
    weight_by_impressions: bool = False
    expression_basis: str = "max"

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True).encode()
        ).hexdigest()[:16]


@dataclass
class TreatmentEmbedder:
    """Provider + cache + corpus centering: texts in, centered phi matrix out."""

    provider: EmbeddingProvider
    centering: CenteringStats
    cache: Optional[EmbeddingCache] = None

    def centered(self, texts: Sequence[str]) -> np.ndarray:
        vectors = embed_batch(self.provider, texts, cache=self.cache)
        return center_matrix(stack(vectors), self.centering)


def _created_at() -> int:
    # SOURCE_DATE_EPOCH makes `train` byte-reproducible for fixed seed and inputs
    return int(os.environ.get("SOURCE_DATE_EPOCH", time.time()))


def train_pipeline(
    training: ExperimentSet,
    lexicon: AttributeLexicon,
    provider: EmbeddingProvider,
    config: TrainConfig,
    target: Optional[ExperimentSet] = None,
    centering_texts: Optional[Sequence[str]] = None,
    cache: Optional[EmbeddingCache] = None,
) -> ModelBundle:
    """Offline training: embed, center, PCA, fixed-effects fit, then the
    attribute dictionary and the sign-constrained re-expression."""
    if len(training) < 2:
        raise ValidationError("training set needs at least 2 experiments")

    train_texts = training.all_texts()
    train_vectors = embed_batch(provider, train_texts, cache=cache)

    corpus = (
        embed_batch(provider, list(centering_texts), cache=cache)
        if centering_texts
        else train_vectors
    )
    centering = fit_centering(
        corpus, corpus_tag="override" if centering_texts else training.source_tag
    )
    train_phis = center_matrix(stack(train_vectors), centering)

    target_phis = None
    if target is not None and len(target.experiments) > 0:
        target_vectors = embed_batch(provider, target.all_texts(), cache=cache)
        target_phis = center_matrix(stack(target_vectors), centering)

    pca_fit = config.pca_fit
    if pca_fit == "target" and target_phis is None:
        logger.warning("pca_fit='target' but no target experiments given; using training")
        pca_fit = "train"
    if pca_fit == "target":
        fit_matrix, fit_tag = target_phis, "target"
    elif pca_fit == "pooled":
        fit_matrix = (
            np.vstack([train_phis, target_phis]) if target_phis is not None else train_phis
        )
        fit_tag = "pooled"
    elif pca_fit == "train":
        fit_matrix, fit_tag = train_phis, "train"
    else:
        raise ValidationError(f"unknown pca_fit policy {config.pca_fit!r}")

    q = min(config.q, fit_matrix.shape[1], fit_matrix.shape[0])
    if q < config.q:
        logger.warning("clamping q from %d to %d (fit corpus limits)", config.q, q)
    projection = fit_pca(list(fit_matrix), q, fit_corpus_tag=fit_tag)

    triples = []
    weights = []
    i = 0
    for exp in training.experiments:
        for arm, ctr in zip(exp.arms, exp.observed_ctr):
            if ctr is None:
                logger.warning(
                    "dropping arm %s of %s: zero impressions", arm.arm_id, exp.experiment_id
                )
            else:
                psi = project_matrix(projection, train_phis[i]).ravel()
                triples.append((exp.experiment_id, psi, ctr))
                weights.append(float(arm.impressions))
            i += 1
    usable = {}
    for exp_id, _, _ in triples:
        usable[exp_id] = usable.get(exp_id, 0) + 1
    kept = [t for t in triples if usable[t[0]] >= 2]
    kept_weights = [w for t, w in zip(triples, weights) if usable[t[0]] >= 2]
    ranker = fit_ranker(
        kept,
        ridge=config.ridge,
        weights=kept_weights if config.weight_by_impressions else None,
    )

    dictionary = build_dictionary(provider, lexicon, cache=cache)
    impact = fit_impact_model(
        projection,
        ranker,
        dictionary,
        lam=config.lam,
        k_folds=config.cv_folds,
        seed=config.seed,
    )

    metadata = {
        "created_at": _created_at(),
        "config": asdict(config),
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "training_tag": training.source_tag,
        "n_training_experiments": len(training),
    }
    return ModelBundle(
        format_version=FORMAT_VERSION,
        provider_id=provider.provider_id,
        centering=centering,
        projection=projection,
        ranker=ranker,
        dictionary=dictionary,
        lexicon=lexicon,
        impact=impact,
        metadata=metadata,
    )


def make_embedder(
    bundle: ModelBundle,
    provider: EmbeddingProvider,
    cache: Optional[EmbeddingCache] = None,
) -> TreatmentEmbedder:
    if provider.provider_id != bundle.provider_id:
        raise ValidationError(
            f"provider {provider.provider_id!r} does not match the bundle's "
            f"{bundle.provider_id!r}"
        )
    return TreatmentEmbedder(provider=provider, centering=bundle.centering, cache=cache)


def _validate_variants(variants) -> tuple[list[str], list[str]]:
    if not isinstance(variants, (list, tuple)) or len(variants) < 2:
        raise ValidationError("need at least 2 variants")
    ids, texts = [], []
    for i, v in enumerate(variants):
        arm_id = str(v.get("id", "")).strip()
        text = normalize_text(str(v.get("text", "")))
        if not arm_id:
            raise ValidationError(f"variant {i}: missing id")
        if not text:
            raise ValidationError(f"variant {i} ({arm_id!r}): empty text")
        ids.append(arm_id)
        texts.append(text)
    return ids, texts


def rank_report(bundle: ModelBundle, embedder: TreatmentEmbedder, variants) -> dict:
    """Relative scoring of candidate variants; mirrors POST /rank exactly."""
    ids, texts = _validate_variants(variants)
    phis = embedder.centered(texts)
    scores = predict_scores(bundle.ranker, project_matrix(bundle.projection, phis))
    ranks = rank_variants(scores)
    return {
        "scored": [
            {"id": arm_id, "score": float(s), "rank": float(r)}
            for arm_id, s, r in zip(ids, scores, ranks)
        ],
        "relative": True,
    }


def _validate_arms(arms) -> list[ArmRecord]:
    if not isinstance(arms, (list, tuple)) or len(arms) < 2:
        raise ValidationError("need at least 2 arms")
    records = []
    for i, a in enumerate(arms):
        try:
            record = ArmRecord(
                arm_id=str(a.get("id", "")).strip(),
                text=normalize_text(str(a.get("text", ""))),
                impressions=int(a.get("impressions", 0)),
                clicks=int(a.get("clicks", 0)),
            )
        except (TypeError, ValueError):
            raise ValidationError(f"arm {i}: non-integer impressions/clicks") from None
        if not record.arm_id:
            raise ValidationError(f"arm {i}: missing id")
        validate_arm(record, where=f"arm {record.arm_id!r}")
        if record.impressions == 0:
            raise ValidationError(
                f"arm {record.arm_id!r} has zero impressions; CTR undefined"
            )
        records.append(record)
    return records


def insight_report(
    bundle: ModelBundle,
    embedder: TreatmentEmbedder,
    arms,
    k: int = 3,
    narrate: bool = False,
    chat_client=None,
    exemplars: Sequence[str] = (),
) -> dict:
    """Per-attribute contributions to the best-vs-worst gap, optionally narrated."""
    if k < 1:
        raise ValidationError("k must be at least 1")
    records = _validate_arms(arms)
    ctrs = [r.clicks / r.impressions for r in records]
    best = int(np.argmax(ctrs))
    worst = int(np.argmin(ctrs))

    texts = [r.text for r in records]
    phis = embedder.centered(texts)
    names = bundle.dictionary.names
    beta_dprime = bundle.impact.beta_dprime
    s_best = attribute_scores(bundle.dictionary, phis[best], treatment=records[best].arm_id)
    s_worst = attribute_scores(bundle.dictionary, phis[worst], treatment=records[worst].arm_id)

    contributions = insight_contributions(s_best, s_worst, beta_dprime, names)
    delta_phi = phis[best] - phis[worst]
    explained = float((s_best.values - s_worst.values) @ beta_dprime)
    nuisance = float(
        nuisance_component(bundle.dictionary, delta_phi) @ bundle.impact.beta_prime
    )
    predicted_gap = float(delta_phi @ bundle.impact.beta_prime)

    selected = narration.select_insight_attributes(s_best, s_worst, beta_dprime, names, k)

    report = {
        "best_arm_id": records[best].arm_id,
        "worst_arm_id": records[worst].arm_id,
        "contributions": [
            {
                "attribute": c.attribute,
                "delta_score": c.delta_score,
                "contribution": c.contribution,
                "polarity": c.polarity,
            }
            for c in contributions
        ],
        "selected": [
            {"attribute": name, "polarity": polarity} for name, polarity in selected
        ],
        "totals": {
            "explained": explained,
            "nuisance": nuisance,
            "predicted_gap": predicted_gap,
        },
        "insights": None,
        "status": "ok",
    }

    if narrate:
        if chat_client is None:
            report["status"] = "narration skipped: no chat client configured"
        elif not selected:
            report["status"] = "narration skipped: no positive-contribution attributes"
        else:
            order = np.argsort([-c for c in ctrs], kind="stable")
            ordered_texts = [texts[i] for i in order]
            system, user = narration.build_insight_prompt(
                ordered_texts, selected, exemplars
            )
            try:
                completion = chat_client.complete(system, user, temperature=0.0)
            except Exception as exc:
                report["status"] = f"narration failed: {exc}"
                return report
            parse = narration.parse_insights(completion)
            polarity_by_name = dict(selected)
            candidates = [
                narration.InsightCandidate(
                    attribute=c.attribute,
                    explanation=c.explanation,
                    cited_phrases=c.cited_phrases,
                    polarity=polarity_by_name.get(c.attribute),
                )
                for c in parse.candidates.values()
                if c.attribute in polarity_by_name
            ]
            reflection = narration.self_reflect(chat_client, candidates, ordered_texts, k)
            report["insights"] = [
                {
                    "attribute": c.attribute,
                    "polarity": c.polarity,
                    "explanation": c.explanation,
                    "cited_phrases": list(c.cited_phrases),
                    "accepted": c.accepted,
                }
                for c in reflection.accepted
            ]
            if parse.warning:
                report["status"] = parse.warning
            elif reflection.degraded:
                report["status"] = "degraded: reflection client failures excluded candidates"
    return report


def history_attribute_means(
    bundle: ModelBundle, embedder: TreatmentEmbedder, history: ExperimentSet
) -> np.ndarray:
    """Mean attribute score over all arms of a historical experiment set."""
    texts = history.all_texts()
    if not texts:
        raise ValidationError("history set has no arms")
    phis = embedder.centered(texts)
    return score_matrix(bundle.dictionary, phis).mean(axis=0)


def opportunity_report(
    bundle: ModelBundle,
    embedder: TreatmentEmbedder,
    variants,
    history_means=None,
    k: int = 3,
    narrate: bool = False,
    chat_client=None,
) -> dict:
    """Importance/expression/opportunity ranking plus optional suggestions."""
    if k < 1:
        raise ValidationError("k must be at least 1")
    ids, texts = _validate_variants(variants)
    names = bundle.dictionary.names
    beta_dprime = bundle.impact.beta_dprime
    if history_means is not None:
        history_means = np.asarray(history_means, dtype=float)
        if history_means.shape != (len(names),):
            raise ValidationError(
                f"history_means must have length {len(names)} (one per attribute)"
            )

    phis = embedder.centered(texts)
    scores = score_matrix(bundle.dictionary, phis)
    basis = bundle.metadata.get("config", {}).get("expression_basis", "max")
    ranking = opportunity_ranking(
        beta_dprime, scores, history_means=history_means, names=names, basis=basis
    )
    bins = bin_impact(beta_dprime, names)
    impact_floor = bundle.metadata.get("config", {}).get("impact_floor", 0.05)
    selection = select_missing_attributes(
        beta_dprime, scores, names, impact_floor=impact_floor, k=k, basis=basis
    )

    report = {
        "ranking": {
            "attributes": list(names),
            "r_imp": [float(x) for x in ranking.r_imp],
            "r_exp": [float(x) for x in ranking.r_exp],
            "r_opp": [float(x) for x in ranking.r_opp],
            "r_novel": [float(x) for x in ranking.r_novel]
            if ranking.r_novel is not None
            else None,
            "expression": [float(x) for x in ranking.expression],
        },
        "impact_bins": bins,
        "selected": list(selection.attributes),
        "selection_status": selection.status,
        "suggestions": None,
        "status": "ok",
    }

    if narrate:
        if chat_client is None:
            report["status"] = "narration skipped: no chat client configured"
        elif not selection.attributes:
            report["status"] = "narration skipped: no opportunity attributes"
        else:
            descriptions = {a.name: a.description for a in bundle.lexicon.attributes}
            system, user = narration.build_opportunity_prompt(
                texts, selection.attributes, descriptions
            )
            try:
                completion = chat_client.complete(system, user, temperature=0.0)
            except Exception as exc:
                report["status"] = f"narration failed: {exc}"
                return report
            if ranking.r_novel is not None:
                novelty = dict(zip(names, (float(x) for x in ranking.r_novel)))
            else:
                # no history: novelty falls back to current under-expression alone
                from .ranks import fractional_ranks

                asc = fractional_ranks(ranking.expression, descending=False)
                novelty = dict(zip(names, (float(x) for x in asc)))
            suggestions, warning = narration.parse_and_enrich_opportunities(
                completion, bins, novelty
            )
            report["suggestions"] = [
                {
                    "attribute": s.attribute,
                    "rationale": s.rationale,
                    "examples": list(s.examples),
                    "learning_potential": s.learning_potential,
                    "conversion_potential": s.conversion_potential,
                }
                for s in suggestions
            ]
            if warning:
                report["status"] = warning
    return report
