"""Logistic policies, behavioral MLE and its per-trajectory influence function."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import linalg
from scipy.special import expit, log_expit

from .data import TrajectoryDataset
from .errors import (
    ConvergenceError,
    ParameterError,
    SeparationError,
    SingularDesignError,
    SingularInformationError,
)

BEHAVIORAL = "behavioral"
SUGGESTED = "suggested"


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    values: np.ndarray
    role: str = SUGGESTED

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ParameterError("coefficients must be finite")
        if self.role not in (BEHAVIORAL, SUGGESTED):
            raise ParameterError(f"unknown coefficient role {self.role!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, CoefficientVector):
            return NotImplemented
        return self.role == other.role and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class ActiveSet:
    """Zero-based coordinate indices whose coefficient departs from behavioral.

    Indices are stored zero-based; :meth:`one_based` gives the 1..K labels used
    in reports.
    """

    indices: tuple
    K: int
    tolerance: float = 0.0

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ParameterError(f"active indices must be strictly increasing, got {idx}")
        if idx and (idx[0] < 0 or idx[-1] >= self.K):
            raise ParameterError(f"active indices {idx} out of range for K={self.K}")
        if self.tolerance < 0:
            raise ParameterError("tolerance must be nonnegative")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def full(cls, K: int) -> "ActiveSet":
        return cls(tuple(range(K)), K)

    @classmethod
    def empty(cls, K: int) -> "ActiveSet":
        return cls((), K)

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.K, dtype=bool)
        m[list(self.indices)] = True
        return m

    @property
    def complement(self) -> tuple:
        return tuple(k for k in range(self.K) if k not in self.indices)

    @property
    def is_full(self) -> bool:
        return len(self.indices) == self.K

    def one_based(self) -> tuple:
        return tuple(i + 1 for i in self.indices)

    def __len__(self):
        return len(self.indices)

    def __contains__(self, k):
        return k in self.indices


def _vec(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def policy_prob(coeffs, state, action) -> float:
    """``expit(coeffs . state)`` for action 1, its complement for action 0."""
    eta = float(_vec(coeffs) @ _vec(state))
    return float(expit(eta)) if action == 1 else float(expit(-eta))


def hybrid_coefficients(beta, b, active: ActiveSet | None) -> np.ndarray:
    """Coefficient vector taking ``beta`` on active slots and ``b`` elsewhere."""
    beta = _vec(beta)
    if active is None or active.is_full:
        return beta
    return np.where(active.mask, beta, _vec(b))


def hybrid_policy_prob(beta, b, active: ActiveSet, state, action) -> float:
    return policy_prob(hybrid_coefficients(beta, b, active), state, action)


def log_policy(coeffs, states, actions) -> np.ndarray:
    """Elementwise ``log pi(a | s)`` for stacked states (..., K) and actions (...)."""
    eta = _vec(states) @ _vec(coeffs)
    return np.where(np.asarray(actions) == 1, log_expit(eta), log_expit(-eta))


@dataclass(frozen=True, eq=False)
class BehavioralFit:
    """Pooled logistic MLE of the behavioral policy.

    ``fisher_per_traj`` is the average per-trajectory information ``I_1`` and
    ``scores_per_traj`` holds one score vector per trajectory at ``b_n``.
    """

    b_n: CoefficientVector
    fisher_per_traj: np.ndarray
    scores_per_traj: np.ndarray
    converged: bool
    iterations: int
    loglik_trace: tuple = field(default=())

    @property
    def n(self) -> int:
        return self.scores_per_traj.shape[0]

    def se(self) -> np.ndarray:
        """Model-based standard error ``sqrt(diag(I_1^{-1}) / n)``."""
        return np.sqrt(np.diag(fisher_inverse(self)) / self.n)


def _loglik(b, X, y):
    eta = X @ b
    return float(np.sum(np.where(y == 1, log_expit(eta), log_expit(-eta))))


def fit_behavioral(
    dataset: TrajectoryDataset,
    max_iter: int = 100,
    tol: float = 1e-9,
    separation_cap: float = 30.0,
) -> BehavioralFit:
    """Damped Newton-Raphson for the pooled logistic likelihood over all (i, t).

    Stops when the infinity norm of the pooled score drops to ``tol``. Step
    halving keeps the log-likelihood non-decreasing.
    """
    X = dataset.states.reshape(-1, dataset.K)
    y = dataset.actions.reshape(-1)
    if y.min() == y.max():
        raise SeparationError(f"only action {y[0]} observed; likelihood has no maximizer")
    if np.linalg.matrix_rank(X) < dataset.K:
        raise SingularDesignError("state design matrix is rank deficient")

    b = np.zeros(dataset.K)
    ll = _loglik(b, X, y)
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(X @ b)
        score = X.T @ (y - p)
        if np.max(np.abs(score)) <= tol:
            converged = True
            it -= 1
            break
        info = (X * (p * (1 - p))[:, None]).T @ X
        try:
            step = linalg.solve(info, score, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            raise SeparationError(f"information matrix became singular at b={b}")
        for _ in range(60):
            cand = b + step
            ll_cand = _loglik(cand, X, y)
            if ll_cand >= ll:
                break
            step = step / 2
        else:
            raise ConvergenceError("step halving failed to increase the likelihood", last_iterate=b)
        b, ll = cand, ll_cand
        trace.append(ll)
        if np.max(np.abs(b)) > separation_cap:
            raise SeparationError(
                f"coefficient norm {np.max(np.abs(b)):.3g} exceeds {separation_cap}; data appear separated"
            )
    if not converged:
        raise ConvergenceError(f"Newton did not converge in {max_iter} iterations", last_iterate=b)

    eta = dataset.states @ b
    p = expit(eta)
    resid = dataset.actions - p
    scores = np.einsum("it,itk->ik", resid, dataset.states)
    w = p * (1 - p)
    fisher = np.einsum("it,itj,itk->jk", w, dataset.states, dataset.states) / dataset.n
    fisher = (fisher + fisher.T) / 2
    return BehavioralFit(
        b_n=CoefficientVector(b, BEHAVIORAL),
        fisher_per_traj=fisher,
        scores_per_traj=scores,
        converged=converged,
        iterations=it,
        loglik_trace=tuple(trace),
    )


def fisher_inverse(fit: BehavioralFit) -> np.ndarray:
    try:
        c = linalg.cho_factor(fit.fisher_per_traj)
    except linalg.LinAlgError:
        raise SingularInformationError("behavioral information matrix is not positive definite")
    inv = linalg.cho_solve(c, np.eye(fit.fisher_per_traj.shape[0]))
    return (inv + inv.T) / 2


def behavioral_influence(fit: BehavioralFit) -> np.ndarray:
    """Rows ``q_i = I_1^{-1} s_i(b_n)``: the linearization of ``sqrt(n)(b_n - b_0)``."""
    if not fit.converged:
        raise ConvergenceError("behavioral fit did not converge", last_iterate=fit.b_n.values)
    try:
        c = linalg.cho_factor(fit.fisher_per_traj)
    except linalg.LinAlgError:
        raise SingularInformationError("behavioral information matrix is not positive definite")
    return linalg.cho_solve(c, fit.scores_per_traj.T).T
