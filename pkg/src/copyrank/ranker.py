"""Fixed-effects regression of CTR on projected embeddings, and relative scoring.

The per-experiment intercepts are absorbed by within-experiment demeaning
rather than dummy columns; the estimator is identical (asserted by test)
and memory stays O(n * q). Predictions are inner products only: the fixed
effect of a new experiment is unknown, so scores are relative and must not
be read as absolute CTRs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateDataError, DimensionMismatchError, ValidationError
from .ranks import fractional_ranks


@dataclass(frozen=True)
class FitDiagnostics:
    residual_variance: float
    n_experiments: int
    n_arms: int


@dataclass(frozen=True)
class RankerModel:
    beta: np.ndarray  # (q,)
    fixed_effects: dict[str, float]  # training experiments only
    ridge: float
    diagnostics: FitDiagnostics

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @property
    def q(self) -> int:
        return int(self.beta.shape[0])


@dataclass(frozen=True)
class ScoredVariant:
    arm_id: str
    score: float
    predicted_rank: float


def fit_ranker(
    training: Sequence[tuple[str, np.ndarray, float]],
    ridge: float = 1e-6,
    weights: Optional[Sequence[float]] = None,
) -> RankerModel:
    """Within-transformed least squares of CTR on q-dim representations.

    training: (experiment_id, psi, y) triples. Optional per-observation
    weights (e.g. impressions) turn the demeaning and the normal equations
    into their weighted counterparts; default is unweighted.
    """
    if len(training) == 0:
        raise ValidationError("empty training input")
    if ridge < 0:
        raise ValidationError("ridge must be non-negative")
    if weights is not None and len(weights) != len(training):
        raise ValidationError("weights must align with training rows")

    ids = [t[0] for t in training]
    psis = np.vstack([np.asarray(t[1], dtype=float) for t in training])
    ys = np.asarray([t[2] for t in training], dtype=float)
    w = (
        np.asarray(weights, dtype=float)
        if weights is not None
        else np.ones(len(training))
    )
    if np.any(w <= 0):
        raise ValidationError("weights must be positive")
    n, q = psis.shape

    by_exp: dict[str, list[int]] = {}
    for i, exp_id in enumerate(ids):
        by_exp.setdefault(exp_id, []).append(i)
    if len(by_exp) < 2:
        raise ValidationError("need at least 2 experiments to fit")
    for exp_id, rows in by_exp.items():
        if len(rows) < 2:
            raise ValidationError(f"experiment {exp_id!r} contributes < 2 arms")

    psi_t = np.empty_like(psis)
    y_t = np.empty_like(ys)
    exp_means: dict[str, tuple[np.ndarray, float]] = {}
    for exp_id, rows in by_exp.items():
        rows = np.asarray(rows)
        wr = w[rows]
        psi_mean = np.average(psis[rows], axis=0, weights=wr)
        y_mean = float(np.average(ys[rows], weights=wr))
        psi_t[rows] = psis[rows] - psi_mean
        y_t[rows] = ys[rows] - y_mean
        exp_means[exp_id] = (psi_mean, y_mean)

    sw = np.sqrt(w)
    xw = psi_t * sw[:, None]
    yw = y_t * sw
    gram = xw.T @ xw
    if ridge == 0.0 and np.linalg.matrix_rank(gram) < q:
        raise DegenerateDataError(
            "singular within-covariance; refit with ridge > 0"
        )
    beta = np.linalg.solve(gram + ridge * np.eye(q), xw.T @ yw)

    fixed_effects = {
        exp_id: float(y_mean - psi_mean @ beta)
        for exp_id, (psi_mean, y_mean) in exp_means.items()
    }

    residuals = y_t - psi_t @ beta
    dof = n - q - len(by_exp)
    residual_variance = float(residuals @ residuals) / dof if dof > 0 else float("nan")
    return RankerModel(
        beta=beta,
        fixed_effects=fixed_effects,
        ridge=float(ridge),
        diagnostics=FitDiagnostics(residual_variance, len(by_exp), n),
    )


def predict_scores(model: RankerModel, psis) -> np.ndarray:
    """Relative scores psi' beta; no fixed effect is added for new experiments."""
    matrix = np.atleast_2d(np.asarray(psis, dtype=float))
    if matrix.shape[-1] != model.q:
        raise DimensionMismatchError(
            f"psi dim {matrix.shape[-1]} incompatible with beta dim {model.q}"
        )
    return matrix @ model.beta


def rank_variants(scores) -> np.ndarray:
    """Fractional ranks of scores, 1 = highest, same tie convention as true_ranks."""
    return fractional_ranks(np.asarray(scores, dtype=float), descending=True)


def score_and_rank(model: RankerModel, arm_ids: Sequence[str], psis) -> list[ScoredVariant]:
    scores = predict_scores(model, psis)
    ranks = rank_variants(scores)
    return [
        ScoredVariant(arm_id, float(s), float(r))
        for arm_id, s, r in zip(arm_ids, scores, ranks)
    ]
