"""Importance-sampled value, KL penalty, the base objective and its derivatives.

The base objective is ``M_n(beta, b, gamma) = V_n(beta, b) - gamma * KL_n(beta, b)``
where both terms are per-trajectory sample means, so ``M_n = mean_i m_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .data import TrajectoryDataset
from .errors import ConfigError, PositivityError
from .policy import ActiveSet, CoefficientVector, hybrid_coefficients

FORWARD = "forward"
REVERSE = "reverse"


@dataclass(frozen=True)
class ObjectiveOptions:
    """Estimator switches.

    ``kl_direction`` ``"forward"`` is KL(pi_b || pi_beta); ``"reverse"`` swaps
    the arguments. ``weight_cap`` truncates importance weights and is for
    exploration only: derivatives refuse to run with it set.
    """

    kl_direction: str = FORWARD
    weight_cap: float | None = None
    positivity_floor: float = 1e-8
    is_variant: str = "trajectory"

    def __post_init__(self):
        if self.kl_direction not in (FORWARD, REVERSE):
            raise ConfigError(f"kl_direction must be 'forward' or 'reverse', got {self.kl_direction!r}")
        if self.is_variant != "trajectory":
            raise ConfigError(f"importance sampling variant {self.is_variant!r} is not supported; use 'trajectory'")
        if self.weight_cap is not None and not self.weight_cap > 0:
            raise ConfigError("weight_cap must be positive")
        if not 0 <= self.positivity_floor < 0.5:
            raise ConfigError("positivity_floor must lie in [0, 0.5)")


DEFAULT_OPTIONS = ObjectiveOptions()


def _vec(x):
    return np.asarray(x, dtype=np.float64)


def _log_sigmoids(x):
    """``(log expit(x), log expit(-x))`` sharing one softplus evaluation."""
    sp = np.log1p(np.exp(-np.abs(x)))
    return -(sp + np.maximum(-x, 0.0)), -(sp + np.maximum(x, 0.0))


def _check_positivity(eta_b, actions, floor):
    logp = np.where(actions == 1, log_expit(eta_b), log_expit(-eta_b))
    if floor > 0 and np.any(logp < np.log(floor)):
        i, t = np.argwhere(logp < np.log(floor))[0]
        raise PositivityError(
            f"behavioral probability {np.exp(logp[i, t]):.3g} below floor {floor:g} "
            f"at trajectory {i}, step {t}",
            index=(int(i), int(t)),
        )
    return logp


def importance_weights(dataset, beta, b_n, active=None, options=DEFAULT_OPTIONS) -> np.ndarray:
    """Trajectory-wise weights ``prod_t pi_{beta,b}(a|s) / pi_b(a|s)``."""
    coef = hybrid_coefficients(beta, b_n, active)
    S, A = dataset.states, dataset.actions
    logp_b = _check_positivity(S @ _vec(b_n), A, options.positivity_floor)
    eta = S @ coef
    logp = np.where(A == 1, log_expit(eta), log_expit(-eta))
    rho = np.exp(np.sum(logp - logp_b, axis=1))
    if options.weight_cap is not None:
        rho = np.minimum(rho, options.weight_cap)
    return rho


def value_is(dataset, beta, b_n, active=None, options=DEFAULT_OPTIONS) -> float:
    rho = importance_weights(dataset, beta, b_n, active, options)
    return float(np.mean(rho * dataset.returns()))


def bernoulli_kl(p, q):
    """``p ln(p/q) + (1-p) ln((1-p)/(1-q))``, elementwise."""
    p, q = _vec(p), _vec(q)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(p > 0, p * np.log(p / q), 0.0)
        b = np.where(p < 1, (1 - p) * np.log((1 - p) / (1 - q)), 0.0)
    return a + b


def _kl_terms(eta_beta, eta_b, direction, second_order=True, logs=None):
    """Bernoulli KL per (i, t) from logits, with its first and second
    derivatives in the suggested logit ``x`` and the cross derivative in ``x``
    and the behavioral logit ``y``.

    ``logs`` optionally supplies precomputed ``(log_expit(x), log_expit(-x),
    log_expit(y), log_expit(-y))``.
    """
    x, y = eta_beta, eta_b
    lx, lmx, ly, lmy = logs if logs is not None else (*_log_sigmoids(x), *_log_sigmoids(y))
    q, p = np.exp(lx), np.exp(ly)
    dxx = dxy = None
    if direction == FORWARD:
        # p ln p/q + (1-p) ln (1-p)/(1-q), written via log-sigmoids
        d = p * (ly - lx) + (1 - p) * (lmy - lmx)
        dx = q - p
        if second_order:
            dxx = q * (1 - q)
            dxy = -p * (1 - p)
    else:
        d = q * (lx - ly) + (1 - q) * (lmx - lmy)
        w = q * (1 - q)
        dx = w * (x - y)
        if second_order:
            dxx = w * (1 - 2 * q) * (x - y) + w
            dxy = -w
    return d, dx, dxx, dxy


def kl_est(dataset, beta, b_n, active=None, options=DEFAULT_OPTIONS) -> float:
    """Per-trajectory summed Bernoulli KL between behavioral and suggested
    action distributions, averaged over trajectories."""
    coef = hybrid_coefficients(beta, b_n, active)
    d = _kl_terms(dataset.states @ coef, dataset.states @ _vec(b_n), options.kl_direction)[0]
    return float(np.mean(d.sum(axis=1)))


def objective_m(dataset, beta, b_n, gamma, active=None, options=DEFAULT_OPTIONS) -> float:
    return value_is(dataset, beta, b_n, active, options) - gamma * kl_est(dataset, beta, b_n, active, options)


@dataclass(frozen=True, eq=False)
class DerivativeBundle:
    """Derivatives of ``M_n`` at ``(eval_beta, eval_b, gamma)``.

    ``X_n[j, k]`` is ``d^2 M_n / d beta_j d b_k``; row ``i`` of ``z_per_traj``
    is the beta-gradient of trajectory ``i``'s contribution.
    """

    eval_beta: CoefficientVector
    eval_b: CoefficientVector
    gamma: float
    J_n: np.ndarray
    H_n: np.ndarray
    X_n: np.ndarray
    z_per_traj: np.ndarray

    @property
    def n(self) -> int:
        return self.z_per_traj.shape[0]


def _components(dataset, coef, b, gamma, options, second_order=True):
    """Per-trajectory objective pieces at the (already hybridized) ``coef``."""
    S, A = dataset.states, dataset.actions
    eta_b, eta = S @ b, S @ coef
    (ly, lmy), (lx, lmx) = _log_sigmoids(eta_b), _log_sigmoids(eta)
    act = A == 1
    logp_b = np.where(act, ly, lmy)
    if options.positivity_floor > 0 and logp_b.min() < np.log(options.positivity_floor):
        _check_positivity(eta_b, A, options.positivity_floor)
    logp = np.where(act, lx, lmx)
    rho = np.exp(np.sum(logp - logp_b, axis=1))
    G = dataset.returns()
    p_beta = np.exp(lx)
    g = np.einsum("it,itk->ik", A - p_beta, S)
    h = np.einsum("it,itk->ik", A - np.exp(ly), S) if second_order else None
    kl, dx, dxx, dxy = _kl_terms(eta, eta_b, options.kl_direction, second_order, (lx, lmx, ly, lmy))
    return S, rho, G, p_beta, g, h, kl, dx, dxx, dxy


def derivatives(dataset, beta, b_n, gamma, active=None, options=DEFAULT_OPTIONS) -> DerivativeBundle:
    """Analytic gradient, Hessian and cross derivative of ``M_n`` in beta.

    With a partial ``active`` set the inactive coordinates of ``beta`` are
    replaced by those of ``b_n`` (the hybrid policy's behavioral slots) and the
    full K-dimensional derivatives are taken at that point.
    """
    if options.weight_cap is not None:
        raise ConfigError("derivatives require uncapped importance weights (weight_cap must be None)")
    b = _vec(b_n)
    coef = hybrid_coefficients(beta, b, active)
    S, rho, G, p_beta, g, h, kl, dx, dxx, dxy = _components(dataset, coef, b, gamma, options)
    n = dataset.n
    rg = rho * G

    z = rg[:, None] * g - gamma * np.einsum("it,itk->ik", dx, S)
    J = z.mean(axis=0)

    w_beta = p_beta * (1 - p_beta)
    outer_g = np.einsum("i,ij,ik->jk", rg, g, g)
    curv = np.einsum("i,it,itj,itk->jk", rg, w_beta, S, S)
    kl_hess = np.einsum("it,itj,itk->jk", dxx, S, S)
    H = (outer_g - curv) / n - gamma * kl_hess / n
    H = (H + H.T) / 2

    X = -np.einsum("i,ij,ik->jk", rg, g, h) / n - gamma * np.einsum("it,itj,itk->jk", dxy, S, S) / n
    return DerivativeBundle(
        eval_beta=CoefficientVector(coef),
        eval_b=CoefficientVector(b, "behavioral"),
        gamma=float(gamma),
        J_n=J,
        H_n=H,
        X_n=X,
        z_per_traj=z,
    )


def gradient_m(dataset, beta, b_n, gamma, options=DEFAULT_OPTIONS):
    """``(M_n, grad M_n)`` at ``beta`` with the full suggested policy; cheap path for solvers."""
    b = _vec(b_n)
    S, rho, G, p_beta, g, h, kl, dx, dxx, dxy = _components(dataset, _vec(beta), b, gamma, options, second_order=False)
    rg = rho * G
    m = float(np.mean(rg) - gamma * np.mean(kl.sum(axis=1)))
    grad = (rg @ g - gamma * np.einsum("it,itk->k", dx, S)) / dataset.n
    return m, grad


def value_grad_b(dataset, beta, b_n, active=None, options=DEFAULT_OPTIONS) -> np.ndarray:
    """``d V_n / d b`` through the behavioral densities and, for a partial
    active set, the hybrid policy's behavioral slots."""
    b = _vec(b_n)
    coef = hybrid_coefficients(beta, b, active)
    S, rho, G, p_beta, g, h, *_ = _components(dataset, coef, b, 0.0, options)
    slot = np.zeros(dataset.K, dtype=bool) if active is None else ~active.mask
    dlogrho = np.where(slot, g, 0.0) - h
    return (rho * G) @ dlogrho / dataset.n
