"""Shared oracles for the impact solver tests and the acceptance suite."""

import numpy as np

from copyrank.attributes import AttributeDictionary


def random_dictionary(rng, m=8, p=32, orthonormal=False) -> AttributeDictionary:
    v = rng.standard_normal((m, p))
    if orthonormal:
        q, _ = np.linalg.qr(v.T)
        v = q.T[:m]
    return AttributeDictionary(
        v=v, names=tuple(f"attr{i}" for i in range(m)), provider_id="test"
    )


def lasso_objective(dictionary, beta_prime, beta_dprime, lam) -> float:
    residual = beta_prime - dictionary.v.T @ beta_dprime
    return float(residual @ residual + lam * np.abs(beta_dprime).sum())


def kkt_residual(dictionary, beta_prime, beta_dprime, lam, signs=None) -> float:
    """Worst-case violation of the non-negative reformulation's KKT conditions.

    With gamma_a = sign_a * coef_a >= 0 and design column sign_a * V_a, the
    gradient of ||b - A g||^2 + lam * sum(g) is grad_a = -2 A_a'(b - A g) + lam;
    optimality demands grad_a == 0 on active coordinates and grad_a >= 0 on
    inactive ones.
    """
    v = dictionary.v
    signs = np.sign(v @ beta_prime) if signs is None else signs
    residual = beta_prime - v.T @ beta_dprime
    worst = 0.0
    for a in range(v.shape[0]):
        if signs[a] == 0:
            continue  # pinned to zero by construction
        grad = -2.0 * signs[a] * (v[a] @ residual) + lam
        gamma = signs[a] * beta_dprime[a]
        violation = abs(grad) if gamma > 0 else max(0.0, -grad)
        worst = max(worst, violation)
    return worst
