"""Quantitative indices: insight contributions, importance/expression/opportunity
rank arithmetic, the novelty index, and missing-attribute selection.

Rank direction is deliberately split: importance and expression rank
DESCENDING (rank 1 = largest coefficient / most expressed), so a small
opportunity index marks important-but-under-expressed attributes; the
novelty index ranks ASCENDING (rank 1 = least expressed), so a small value
marks attributes unexplored both now and historically. The two conventions
cannot be unified without breaking one of the stated interpretations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .attributes import AttributeScores
from .errors import DimensionMismatchError, ValidationError
from .ranks import fractional_ranks


@dataclass(frozen=True)
class InsightContribution:
    attribute: str
    delta_score: float
    contribution: float  # delta_score * impact coefficient, exactly
    polarity: int  # sign of the impact coefficient


@dataclass(frozen=True)
class OpportunityRanking:
    names: tuple[str, ...]
    r_imp: np.ndarray
    r_exp: np.ndarray
    r_opp: np.ndarray
    expression: np.ndarray  # per-attribute expression basis (max over arms by default)
    r_novel: Optional[np.ndarray] = None


@dataclass(frozen=True)
class MissingAttributeSelection:
    attributes: tuple[str, ...]
    status: str  # "ok" or "no_opportunity"


def _scores_array(scores) -> np.ndarray:
    if isinstance(scores, AttributeScores):
        return np.asarray(scores.values, dtype=float)
    return np.asarray(scores, dtype=float)


def insight_contributions(
    s_best, s_worst, beta_dprime, names: Sequence[str]
) -> tuple[InsightContribution, ...]:
    """Per-attribute signed contributions (s_best - s_worst) * coefficient."""
    a = _scores_array(s_best)
    b = _scores_array(s_worst)
    coefs = np.asarray(beta_dprime, dtype=float)
    if not (a.shape == b.shape == coefs.shape == (len(names),)):
        raise DimensionMismatchError(
            f"score/coefficient/name lengths differ: {a.shape}, {b.shape}, "
            f"{coefs.shape}, {len(names)}"
        )
    delta = a - b
    return tuple(
        InsightContribution(
            attribute=name,
            delta_score=float(d),
            contribution=float(d * c),
            polarity=int(np.sign(c)),
        )
        for name, d, c in zip(names, delta, coefs)
    )


def importance_ranks(beta_dprime) -> np.ndarray:
    """Rank 1 = largest coefficient (descending, tie-averaged)."""
    return fractional_ranks(np.asarray(beta_dprime, dtype=float), descending=True)


def expression_basis(scores_matrix, basis: str = "max") -> np.ndarray:
    """Per-attribute expression level over the arms: max (default) or mean."""
    matrix = np.atleast_2d(np.asarray(scores_matrix, dtype=float))
    if basis == "max":
        return matrix.max(axis=0)
    if basis == "mean":
        return matrix.mean(axis=0)
    raise ValidationError(f"unknown expression basis {basis!r}")


def expression_ranks(scores_matrix, basis: str = "max") -> np.ndarray:
    """Rank 1 = most expressed attribute across the experiment's arms."""
    return fractional_ranks(expression_basis(scores_matrix, basis), descending=True)


def opportunity_index(r_imp, r_exp) -> np.ndarray:
    """Importance rank minus expression rank; smaller = better opportunity."""
    r_imp = np.asarray(r_imp, dtype=float)
    r_exp = np.asarray(r_exp, dtype=float)
    if r_imp.shape != r_exp.shape:
        raise DimensionMismatchError("rank vectors differ in length")
    return r_imp - r_exp


def novelty_index(current_basis, history_means) -> np.ndarray:
    """Ascending expression rank now plus ascending mean rank over history.

    Small values mean the attribute is barely expressed in both the current
    variants and the historical corpus, i.e. unexplored.
    """
    current = np.asarray(current_basis, dtype=float)
    history = np.asarray(history_means, dtype=float)
    if current.shape != history.shape:
        raise DimensionMismatchError("current/history lengths differ")
    return fractional_ranks(current, descending=False) + fractional_ranks(
        history, descending=False
    )


def opportunity_ranking(
    beta_dprime,
    scores_matrix,
    history_means=None,
    names: Optional[Sequence[str]] = None,
    basis: str = "max",
) -> OpportunityRanking:
    """Assemble all rank vectors for one experiment in a single pass."""
    coefs = np.asarray(beta_dprime, dtype=float)
    expression = expression_basis(scores_matrix, basis)
    if expression.shape != coefs.shape:
        raise DimensionMismatchError("scores matrix does not match coefficients")
    r_imp = importance_ranks(coefs)
    r_exp = fractional_ranks(expression, descending=True)
    r_novel = None
    if history_means is not None:
        r_novel = novelty_index(expression, history_means)
    resolved_names = tuple(names) if names is not None else tuple(
        f"a{i}" for i in range(coefs.size)
    )
    return OpportunityRanking(
        names=resolved_names,
        r_imp=r_imp,
        r_exp=r_exp,
        r_opp=r_imp - r_exp,
        expression=expression,
        r_novel=r_novel,
    )


def select_missing_attributes(
    beta_dprime,
    scores_matrix,
    names: Sequence[str],
    impact_floor: float = 0.05,
    k: int = 3,
    basis: str = "max",
) -> MissingAttributeSelection:
    """Pick up to k positive-impact attributes the current variants under-express.

    Strictly positive coefficients survive; those below impact_floor of the
    maximum absolute coefficient are set aside; survivors are ordered by
    opportunity index ascending. If fewer than k survive, the set-aside
    positive attributes fill in by descending coefficient.
    """
    if k < 1:
        raise ValidationError("k must be at least 1")
    coefs = np.asarray(beta_dprime, dtype=float)
    if coefs.shape != (len(names),):
        raise DimensionMismatchError("coefficients must align with names")

    positive = coefs > 0
    if not np.any(positive):
        return MissingAttributeSelection((), "no_opportunity")

    floor = impact_floor * float(np.max(np.abs(coefs)))
    survivors = positive & (np.abs(coefs) >= floor)
    r_opp = opportunity_index(
        importance_ranks(coefs), expression_ranks(scores_matrix, basis)
    )

    ordered = sorted(
        np.flatnonzero(survivors), key=lambda i: (r_opp[i], -coefs[i], i)
    )
    picked = ordered[:k]
    if len(picked) < k:
        leftovers = sorted(
            np.flatnonzero(positive & ~survivors), key=lambda i: (-coefs[i], i)
        )
        picked.extend(leftovers[: k - len(picked)])
    return MissingAttributeSelection(tuple(names[i] for i in picked), "ok")
