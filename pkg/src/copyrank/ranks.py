"""Fractional (average-tie) ranking used by ingestion, scoring, and the index computations."""

import numpy as np

from .errors import ValidationError


def fractional_ranks(values, descending: bool = True) -> np.ndarray:
    """Rank a 1-D array; ties receive the average of the positions they span.

    descending=True assigns rank 1 to the largest value (the convention for
    CTRs, scores, and importance); descending=False ranks smallest first
    (used inside the novelty index).
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValidationError("ranking expects a non-empty 1-D array")
    if not np.all(np.isfinite(v)):
        raise ValidationError("ranking expects finite values")

    key = -v if descending else v
    order = np.argsort(key, kind="stable")
    sorted_key = key[order]
    ranks = np.empty(v.size, dtype=float)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sorted_key[j + 1] == sorted_key[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks
