"""PCA projection from the raw embedding space (dim p) down to q dimensions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embedding import stack
from .errors import DegenerateDataError, DimensionMismatchError, ValidationError


@dataclass(frozen=True)
class ProjectionModel:
    pi: np.ndarray  # (q, p), orthonormal rows = top principal directions
    explained_variance: np.ndarray  # (q,), non-increasing
    sample_mean: np.ndarray  # (p,) fit-time mean, kept separate from corpus centering
    fit_corpus_tag: str = ""

    def __post_init__(self):
        for name in ("pi", "explained_variance", "sample_mean"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.pi.ndim != 2:
            raise ValidationError("pi must be a q x p matrix")
        if self.explained_variance.shape != (self.q,):
            raise DimensionMismatchError("explained_variance must have length q")
        if self.sample_mean.shape != (self.p,):
            raise DimensionMismatchError("sample_mean must have length p")

    @property
    def q(self) -> int:
        return int(self.pi.shape[0])

    @property
    def p(self) -> int:
        return int(self.pi.shape[1])


def fit_pca(vectors: Sequence, q: int, fit_corpus_tag: str = "") -> ProjectionModel:
    """Top-q principal directions of the sample covariance.

    Inputs are additionally centered by their own sample mean before the
    eigendecomposition (that mean is persisted but not applied by
    ``project``, which stays linear). Each row's largest-magnitude entry is
    flipped non-negative so the fit is deterministic.
    """
    matrix = stack(vectors)
    n, p = matrix.shape
    if n < 2:
        raise ValidationError("PCA needs at least 2 vectors")
    if q < 1 or q > min(p, n):
        raise ValidationError(f"q={q} must satisfy 1 <= q <= min(p={p}, n={n})")

    mean = matrix.mean(axis=0)
    centered = matrix - mean
    total_variance = float(np.sum(centered**2)) / (n - 1)
    if total_variance <= 1e-24:
        raise DegenerateDataError("corpus has zero variance (all vectors identical)")

    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    pi = vt[:q].copy()
    explained = singular[:q] ** 2 / (n - 1)

    for row in pi:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0

    return ProjectionModel(
        pi=pi,
        explained_variance=explained,
        sample_mean=mean,
        fit_corpus_tag=fit_corpus_tag,
    )


def project(model: ProjectionModel, phi) -> np.ndarray:
    """psi = Pi @ phi (linear; no mean subtraction at projection time)."""
    from .embedding import as_values

    values = as_values(phi)
    if values.shape != (model.p,):
        raise DimensionMismatchError(
            f"vector dim {values.shape} incompatible with projection p={model.p}"
        )
    return model.pi @ values


def project_matrix(model: ProjectionModel, matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape[-1] != model.p:
        raise DimensionMismatchError(
            f"matrix dim {matrix.shape[-1]} incompatible with projection p={model.p}"
        )
    return matrix @ model.pi.T
