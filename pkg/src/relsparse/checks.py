"""Self-checks run by ``relsparse check``: finite differences, prox against
grid search, path endpoints and KL identities on a small built-in dataset."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inference import assemble_r, coef_variance_adaptive, coef_variance_baseline
from .objective import DEFAULT_OPTIONS, bernoulli_kl, derivatives, kl_est, objective_m
from .policy import ActiveSet, behavioral_influence, fit_behavioral
from .sim import SimConfig, simulate
from .solvers import adaptive_weights, active_set, maximize_m, maximize_w, prox_shifted, saturation_lambda

FD_RTOL = 1e-5


def builtin_dataset():
    return simulate(SimConfig(n=200, T=3, K=2, seed=0))


def fd_gradient(f, x, rel_step=1e-5):
    """Central differences with step ``rel_step * max(1, |x_k|)``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for k in range(len(x)):
        h = rel_step * max(1.0, abs(x[k]))
        e = np.zeros_like(x)
        e[k] = h
        out[k] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def fd_jacobian(grad, x, rel_step=1e-5):
    """Central differences of a vector function; column ``k`` is d grad / d x_k."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(len(x)):
        h = rel_step * max(1.0, abs(x[k]))
        e = np.zeros_like(x)
        e[k] = h
        cols.append((np.asarray(grad(x + e)) - np.asarray(grad(x - e))) / (2 * h))
    return np.column_stack(cols)


def relative_error(analytic, numeric):
    """Largest ``|a - f| / max(1, |f|)`` entry."""
    a, f = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(a - f) / np.maximum(1.0, np.abs(f))))


def derivative_errors(dataset, beta, b, gamma, perturb=0.0, options=DEFAULT_OPTIONS):
    """(J, H, X) relative errors against finite differences of ``objective_m``.

    ``J`` is differenced from the objective itself; ``H`` and ``X`` from the
    analytic gradient, whose own accuracy the first check establishes.
    """
    bundle = derivatives(dataset, beta, b, gamma, options=options)
    J = bundle.J_n + perturb
    J_fd = fd_gradient(lambda x: objective_m(dataset, x, b, gamma, options=options), beta)
    H_fd = fd_jacobian(lambda x: derivatives(dataset, x, b, gamma, options=options).J_n, beta)
    X_fd = fd_jacobian(lambda y: derivatives(dataset, beta, y, gamma, options=options).J_n, b)
    return relative_error(J, J_fd), relative_error(bundle.H_n, H_fd), relative_error(bundle.X_n, X_fd)


def prox_grid_argmin(xi, b, tau, resolution=1e-4):
    """Grid minimizer of ``0.5 (u - xi)^2 + tau |u - b|`` on ``b + resolution * j``."""
    lo, hi = min(xi, b), max(xi, b)
    j = np.arange(np.floor((lo - b) / resolution) - 1, np.ceil((hi - b) / resolution) + 2)
    u = b + resolution * j
    u[j == 0] = b
    obj = 0.5 * (u - xi) ** 2 + tau * np.abs(u - b)
    return float(u[np.argmin(obj)])


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def run_checks(perturb_gradient: float = 0.0, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    data = builtin_dataset()
    fit = fit_behavioral(data)
    b = fit.b_n.values
    results = []

    worst = 0.0
    for _ in range(10):
        beta = b + rng.normal(scale=0.5, size=b.shape)
        gamma = rng.uniform(0, 5)
        worst = max(worst, *derivative_errors(data, beta, b, gamma, perturb_gradient))
    results.append(CheckResult("derivatives vs finite differences", worst <= FD_RTOL, f"max rel err {worst:.2e}"))

    worst, dead_ok = 0.0, True
    for _ in range(200):
        xi, bk, tau = rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0, 2)
        p = prox_shifted(xi, bk, tau)
        worst = max(worst, abs(p - prox_grid_argmin(xi, bk, tau)))
        if abs(xi - bk) <= tau and p != bk:
            dead_ok = False
    results.append(CheckResult("prox vs grid search", worst <= 1e-4 and dead_ok, f"max abs err {worst:.2e}"))

    gamma = 1.0
    first = maximize_m(data, b, gamma)
    beta_g = first.solution.values
    w = adaptive_weights(beta_g, b)
    zero = maximize_w(data, b, gamma, 0.0, w, init=beta_g).solution.values
    gap = float(np.max(np.abs(zero - beta_g)))
    results.append(CheckResult("lambda=0 endpoint", gap <= 1e-6, f"max |diff| {gap:.2e}"))

    lam_sat = saturation_lambda(data, b, gamma, w, beta_g)
    sat = maximize_w(data, b, gamma, lam_sat, w, init=beta_g).solution.values
    tied = np.array_equal(sat, b) and len(active_set(sat, b)) == 0
    results.append(CheckResult("saturation endpoint", tied, f"lambda_sat {lam_sat:.6g}"))

    q = behavioral_influence(fit)
    bundle = derivatives(data, beta_g, b, gamma)
    full = ActiveSet.full(data.K)
    adaptive = coef_variance_adaptive(assemble_r(bundle, q, bundle.z_per_traj, full), bundle, full).active_block
    base = coef_variance_baseline(bundle, q, bundle.z_per_traj)
    gap = float(np.max(np.abs(adaptive - base)))
    results.append(CheckResult("full active set reduces to baseline", gap <= 1e-10, f"max |diff| {gap:.2e}"))

    k0 = kl_est(data, b, b)
    k1 = float(bernoulli_kl(0.5, 0.75))
    ok = k0 <= 1e-14 and abs(k1 - 0.5 * np.log(4 / 3)) <= 1e-12 and kl_est(data, beta_g, b) > 0
    results.append(CheckResult("KL identities", ok, f"KL(b,b)={k0:.1e}"))
    return results


def format_table(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}" for r in results]
    return "\n".join(lines)
