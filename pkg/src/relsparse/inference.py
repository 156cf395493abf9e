"""Variance estimators for the penalized policy coefficients and the value.

The selection-aware estimator splits the coordinates by the fitted active
set. Active coordinates get the sandwich

    (H_AA)^{-1} [ (1/n) sum_i r_i r_i^T ] (H_AA)^{-T}

with ``r_i`` built from the per-trajectory gradient, the Hessian blocks that
couple active and behavioral coordinates, and the cross derivative applied to
the behavioral influence function ``q_i``. Behavioral (tied) coordinates
equal ``b_n`` exactly and inherit the MLE variance of ``b_n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import EmptyActiveSetError, SingularHessianError
from .objective import DEFAULT_OPTIONS, importance_weights, value_grad_b
from .policy import ActiveSet, BehavioralFit, fisher_inverse

MAX_CONDITION = 1e12

ESTIMATOR_TAGS = {
    "coefficient_se": "selection-aware sandwich on the active block; behavioral MLE variance on tied coordinates",
    "baseline_se": "full-index sandwich H^-1 E[(z + X q)(z + X q)^T] H^-T (reconstruction)",
    "value_se": "influence-function (delta-method) variance of the IS value including b_n estimation (reconstruction)",
    "nuisance_influence": "q_i = I_1^-1 s_i(b_n), logistic MLE influence function (reconstruction)",
}


@dataclass(frozen=True, eq=False)
class CoefficientVariance:
    """Asymptotic variance pieces and the per-coordinate standard errors.

    ``active_block`` is the variance of ``sqrt(n)`` times the active
    coefficients; ``per_coordinate_se`` is already divided by ``n`` (one
    standard error of the estimate).
    """

    active_block: np.ndarray
    behavioral_diag: np.ndarray
    active: ActiveSet
    n: int
    per_coordinate_se: np.ndarray


def _sandwich(H, middle):
    cond = np.linalg.cond(H) if H.size else 1.0
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularHessianError(f"Hessian block is singular or ill-conditioned (condition number {cond:.3g})", cond)
    left = linalg.solve(H, middle, assume_a="sym")
    out = linalg.solve(H, left.T, assume_a="sym").T
    return (out + out.T) / 2


def _second_moment(r, center):
    if center:
        r = r - r.mean(axis=0)
    return r.T @ r / r.shape[0]


def assemble_r(bundle, q, z, active: ActiveSet) -> np.ndarray:
    """Rows ``r_i`` (one per trajectory) over the active coordinates.

    ``r_i^T = z_{i,A}^T + q_{i,A^C}^T H_{A^C A} + q_{i,A^C}^T (H_{A A^C})^T
              + q_{i,A}^T (X^T)_{A A} + q_{i,A^C}^T (X^T)_{A^C A}``
    """
    if len(active) == 0:
        raise EmptyActiveSetError("active set is empty; use the behavioral variance")
    A = list(active.indices)
    C = list(active.complement)
    H, Xt = bundle.H_n, bundle.X_n.T
    q = np.asarray(q, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    r = z[:, A] + q[:, A] @ Xt[np.ix_(A, A)]
    if C:
        qc = q[:, C]
        r = r + qc @ H[np.ix_(C, A)] + qc @ H[np.ix_(A, C)].T + qc @ Xt[np.ix_(C, A)]
    return r


def coef_variance_adaptive(r_matrix, bundle, active: ActiveSet, center: bool = False) -> CoefficientVariance:
    """Sandwich variance for the active block.

    The middle factor is the uncentered second moment of the ``r`` rows
    unless ``center`` is set. Behavioral entries are left as NaN; see
    :func:`selection_aware_variance` for the combined estimator.
    """
    if len(active) == 0:
        raise EmptyActiveSetError("active set is empty; use the behavioral variance")
    A = list(active.indices)
    r = np.asarray(r_matrix, dtype=np.float64)
    block = _sandwich(bundle.H_n[np.ix_(A, A)], _second_moment(r, center))
    n = r.shape[0]
    se = np.full(active.K, np.nan)
    se[A] = np.sqrt(np.clip(np.diag(block), 0, None) / n)
    return CoefficientVariance(block, np.full(len(active.complement), np.nan), active, n, se)


def coef_variance_behavioral(fit: BehavioralFit, complement) -> np.ndarray:
    """``(I_1^{-1})_{kk}`` for each zero-based ``k`` in ``complement``."""
    complement = list(complement)
    if not complement:
        return np.zeros(0)
    return np.diag(fisher_inverse(fit))[complement].copy()


def coef_variance_baseline(bundle, q, z, center: bool = False) -> np.ndarray:
    """Full-index sandwich ``H^{-1} [(1/n) sum (z_i + X q_i)(z_i + X q_i)^T] H^{-T}``."""
    r = np.asarray(z) + np.asarray(q) @ bundle.X_n.T
    return _sandwich(bundle.H_n, _second_moment(r, center))


def selection_aware_variance(bundle, q, fit: BehavioralFit, active: ActiveSet, center: bool = False) -> CoefficientVariance:
    """Combine the active-block sandwich with behavioral MLE variances."""
    K, n = active.K, fit.n
    C = list(active.complement)
    beh = coef_variance_behavioral(fit, C)
    se = np.empty(K)
    if len(active):
        r = assemble_r(bundle, q, bundle.z_per_traj, active)
        part = coef_variance_adaptive(r, bundle, active, center)
        block = part.active_block
        se[list(active.indices)] = part.per_coordinate_se[list(active.indices)]
    else:
        block = np.zeros((0, 0))
    se[C] = np.sqrt(beh / n)
    return CoefficientVariance(block, beh, active, n, se)


def value_variance(dataset, beta, b_n, active, bundle=None, q=None, options=DEFAULT_OPTIONS) -> float:
    """Variance of the IS value estimate, ``(1/n^2) sum_i c_i^2`` with
    ``c_i = (rho_i G_i - V_n) + (dV_n/db)^T q_i``.

    ``bundle`` is accepted for interface symmetry and unused.
    """
    rho = importance_weights(dataset, beta, b_n, active, options)
    contrib = rho * dataset.returns()
    c = contrib - contrib.mean()
    if q is not None:
        c = c + np.asarray(q) @ value_grad_b(dataset, beta, b_n, active, options)
    n = dataset.n
    return float(np.sum(c * c) / n**2)
