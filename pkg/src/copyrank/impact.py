"""Re-express the ranker in attribute space: per-attribute impact coefficients.

The q-dim ranker weights are first pulled back to the embedding space
(beta_prime = Pi' beta, so phi' beta_prime reproduces every score exactly).
Attribute coefficients then solve

    min over b  || beta_prime - V' b ||^2  +  lambda * ||b||_1
    subject to  b_a * sign((V beta_prime)_a) >= 0 for every attribute a,

solved by substituting b = D g with D = diag(signs), g >= 0, which reduces
to non-negative Lasso coordinate descent. Coordinates whose sign is exactly
zero are pinned to zero, the only sign-consistent value. The unregularized
closed form (V V')^{-1} V beta_prime is kept as the lambda = 0 oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .attributes import AttributeDictionary
from .errors import (
    ConvergenceError,
    DegenerateDataError,
    DimensionMismatchError,
    ValidationError,
)
from .projection import ProjectionModel
from .ranker import RankerModel

IMPACT_BINS = ("Strong", "Medium", "Weak")


@dataclass(frozen=True)
class ImpactModel:
    beta_prime: np.ndarray  # (p,)
    beta_dprime: np.ndarray  # (m,)
    lam: float
    sign_vector: np.ndarray  # (m,) entries in {-1, 0, +1}
    cv_trace: tuple[tuple[float, float], ...] = ()  # (lambda, mean CV error) pairs

    def __post_init__(self):
        for name in ("beta_prime", "beta_dprime", "sign_vector"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.beta_dprime * self.sign_vector < 0):
            raise ValidationError("impact coefficients violate the sign constraint")
        if np.any(self.beta_dprime[self.sign_vector == 0] != 0):
            raise ValidationError("zero-sign coordinates must have zero coefficients")


def reexpress(projection: ProjectionModel, ranker: RankerModel) -> np.ndarray:
    """beta_prime = Pi' beta; guarantees phi' beta_prime == (Pi phi)' beta for all phi."""
    if ranker.q != projection.q:
        raise DimensionMismatchError(
            f"ranker q={ranker.q} does not match projection q={projection.q}"
        )
    return projection.pi.T @ ranker.beta


def sign_vector(dictionary: AttributeDictionary, beta_prime: np.ndarray) -> np.ndarray:
    beta_prime = _check_beta_prime(dictionary, beta_prime)
    return np.sign(dictionary.v @ beta_prime)


def _check_beta_prime(dictionary: AttributeDictionary, beta_prime) -> np.ndarray:
    beta_prime = np.asarray(beta_prime, dtype=float)
    if beta_prime.shape != (dictionary.p,):
        raise DimensionMismatchError(
            f"beta_prime dim {beta_prime.shape} vs dictionary p={dictionary.p}"
        )
    return beta_prime


def pseudo_inverse_coefficients(
    dictionary: AttributeDictionary, beta_prime
) -> np.ndarray:
    """Closed-form (V V')^{-1} V beta_prime, the unconstrained least-squares optimum."""
    beta_prime = _check_beta_prime(dictionary, beta_prime)
    gram = dictionary.v @ dictionary.v.T
    if np.linalg.matrix_rank(gram) < dictionary.m:
        raise DegenerateDataError(
            "VV' is singular: dictionary rows are linearly dependent "
            f"(rank {np.linalg.matrix_rank(gram)} < m={dictionary.m})"
        )
    return np.linalg.solve(gram, dictionary.v @ beta_prime)


def attribute_space_component(dictionary: AttributeDictionary, phi) -> np.ndarray:
    """Orthogonal projection of phi onto the row space of V."""
    phi = np.asarray(phi, dtype=float)
    gram = dictionary.v @ dictionary.v.T
    return dictionary.v.T @ np.linalg.solve(gram, dictionary.v @ phi)


def nuisance_component(dictionary: AttributeDictionary, phi) -> np.ndarray:
    """Residual of phi orthogonal to the attribute row space."""
    phi = np.asarray(phi, dtype=float)
    return phi - attribute_space_component(dictionary, phi)


def _nonneg_lasso_cd(
    design: np.ndarray,
    target: np.ndarray,
    lam: float,
    tol: float,
    max_sweeps: int,
    objective_trace: Optional[list] = None,
) -> np.ndarray:
    """Coordinate descent for min ||target - design @ g||^2 + lam * sum(g), g >= 0."""
    n_coef = design.shape[1]
    col_norms = np.einsum("ij,ij->j", design, design)
    gamma = np.zeros(n_coef)
    residual = target.astype(float).copy()

    for _ in range(max_sweeps):
        max_delta = 0.0
        for a in range(n_coef):
            if col_norms[a] == 0.0:
                continue
            col = design[:, a]
            rho = col @ residual + gamma[a] * col_norms[a]
            new = max(0.0, (rho - lam / 2.0)) / col_norms[a]
            delta = new - gamma[a]
            if delta != 0.0:
                residual -= delta * col
                gamma[a] = new
                max_delta = max(max_delta, abs(delta))
        if objective_trace is not None:
            objective_trace.append(float(residual @ residual + lam * gamma.sum()))
        if max_delta < tol:
            return gamma
    raise ConvergenceError(
        f"coordinate descent did not converge in {max_sweeps} sweeps "
        f"(final max update {max_delta:.3e} >= tol {tol:.1e})"
    )


def fit_sign_constrained_lasso(
    dictionary: AttributeDictionary,
    beta_prime,
    lam: float,
    signs: Optional[np.ndarray] = None,
    tol: float = 1e-10,
    max_sweeps: int = 10_000,
) -> np.ndarray:
    """Solve the sign-constrained Lasso for the attribute coefficients.

    signs defaults to sign(V beta_prime); passing it explicitly lets the
    cross-validation folds keep the full-data constraint while refitting on
    coordinate subsets.
    """
    beta_prime = _check_beta_prime(dictionary, beta_prime)
    if lam < 0:
        raise ValidationError("lambda must be non-negative")
    if signs is None:
        signs = sign_vector(dictionary, beta_prime)
    return _solve_on_rows(
        dictionary.v, beta_prime, lam, signs, tol=tol, max_sweeps=max_sweeps
    )


def _solve_on_rows(
    v: np.ndarray,
    target: np.ndarray,
    lam: float,
    signs: np.ndarray,
    tol: float,
    max_sweeps: int,
) -> np.ndarray:
    active = signs != 0
    design = v.T[:, active] * signs[active]
    gamma = _nonneg_lasso_cd(design, target, lam, tol=tol, max_sweeps=max_sweeps)
    beta_dprime = np.zeros(v.shape[0])
    beta_dprime[active] = signs[active] * gamma
    return beta_dprime


def lambda_grid(dictionary: AttributeDictionary, beta_prime, n_points: int = 50) -> np.ndarray:
    """Descending log grid from ||V beta_prime||_inf down to 1e-4 of it."""
    beta_prime = _check_beta_prime(dictionary, beta_prime)
    lam_top = float(np.max(np.abs(dictionary.v @ beta_prime)))
    if lam_top <= 0.0:
        return np.zeros(1)
    return np.geomspace(lam_top, 1e-4 * lam_top, n_points)


def select_lambda(
    dictionary: AttributeDictionary,
    beta_prime,
    k_folds: int = 5,
    n_points: int = 50,
    seed: int = 0,
) -> tuple[float, tuple[tuple[float, float], ...]]:
    """K-fold cross-validation over the p embedding coordinates.

    The p rows of the system (design V', response beta_prime) act as
    exchangeable pseudo-samples: coordinates are shuffled with a seeded
    generator into K folds, each lambda on the grid is refit on the
    held-in rows under the full-data sign constraint, and the held-out
    squared reconstruction error is averaged. Ties pick the larger lambda.
    """
    beta_prime = _check_beta_prime(dictionary, beta_prime)
    p = dictionary.p
    if k_folds < 2:
        raise ValidationError("K must be at least 2")
    if k_folds > p:
        raise ValidationError(f"K={k_folds} exceeds the number of coordinates p={p}")

    signs = sign_vector(dictionary, beta_prime)
    grid = lambda_grid(dictionary, beta_prime, n_points)
    rng = np.random.default_rng(seed)
    folds = np.array_split(rng.permutation(p), k_folds)

    trace = []
    best_lam = float(grid[0])
    best_err = np.inf
    for lam in grid:  # descending, so strict improvement keeps the larger lambda on ties
        fold_errs = []
        for held_out in folds:
            mask = np.ones(p, dtype=bool)
            mask[held_out] = False
            coefs = _solve_on_rows(
                dictionary.v[:, mask],
                beta_prime[mask],
                float(lam),
                signs,
                tol=1e-10,
                max_sweeps=10_000,
            )
            predicted = dictionary.v[:, held_out].T @ coefs
            fold_errs.append(float(np.mean((beta_prime[held_out] - predicted) ** 2)))
        mean_err = float(np.mean(fold_errs))
        trace.append((float(lam), mean_err))
        if mean_err < best_err:
            best_err = mean_err
            best_lam = float(lam)
    return best_lam, tuple(trace)


def bin_impact(
    beta_dprime,
    names,
    thresholds: tuple[float, float] = (1 / 3, 2 / 3),
) -> dict[str, str]:
    """Bin |coefficients| relative to the largest one into Strong/Medium/Weak."""
    beta_dprime = np.asarray(beta_dprime, dtype=float)
    if beta_dprime.shape != (len(names),):
        raise DimensionMismatchError("coefficients must align with attribute names")
    lo, hi = thresholds
    top = float(np.max(np.abs(beta_dprime))) if beta_dprime.size else 0.0
    if top == 0.0:
        return {name: "Weak" for name in names}
    bins = {}
    for name, coef in zip(names, beta_dprime):
        ratio = abs(coef) / top
        bins[name] = "Strong" if ratio >= hi else ("Medium" if ratio >= lo else "Weak")
    return bins


def fit_impact_model(
    projection: ProjectionModel,
    ranker: RankerModel,
    dictionary: AttributeDictionary,
    lam: float | str = "cv",
    k_folds: int = 5,
    seed: int = 0,
) -> ImpactModel:
    """Full re-expression: beta_prime, lambda (given or CV-selected), constrained fit."""
    beta_prime = reexpress(projection, ranker)
    signs = sign_vector(dictionary, beta_prime)
    if lam == "cv":
        chosen, trace = select_lambda(dictionary, beta_prime, k_folds=k_folds, seed=seed)
    else:
        chosen, trace = float(lam), ()
    beta_dprime = fit_sign_constrained_lasso(dictionary, beta_prime, chosen, signs=signs)
    return ImpactModel(
        beta_prime=beta_prime,
        beta_dprime=beta_dprime,
        lam=chosen,
        sign_vector=signs,
        cv_trace=trace,
    )
