"""Two-stage estimation: smooth ascent on M_n, then proximal-gradient ascent on
the adaptive relative-sparsity objective W_n."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, ParameterError
from .objective import DEFAULT_OPTIONS, gradient_m
from .policy import ActiveSet, CoefficientVector

ARMIJO = 1e-4
MAX_HALVINGS = 60
STEP_BOUNDS = (1e-12, 1e4)


@dataclass(frozen=True, eq=False)
class SolveReport:
    solution: CoefficientVector
    objective_value: float
    iterations: int
    converged: bool
    final_step_size: float
    trace: tuple | None = None


def _bb_step(s, y, fallback):
    # Barzilai-Borwein trial step for ascent on a locally concave function.
    sy = float(s @ y)
    if sy < 0:
        return float(np.clip(-(s @ s) / sy, *STEP_BOUNDS))
    return float(np.clip(fallback * 2.0, *STEP_BOUNDS))


def _evaluate(dataset, beta, b_n, gamma, options, last):
    try:
        m, g = gradient_m(dataset, beta, b_n, gamma, options)
    except FloatingPointError:
        m, g = np.nan, None
    if not np.isfinite(m) or g is None or not np.all(np.isfinite(g)):
        raise DivergenceError("objective became non-finite", last_iterate=last)
    return m, g


def _ascend(dataset, b_n, gamma, init, options, grad_tol, max_iter, keep_trace):
    beta = np.array(init, dtype=np.float64)
    m, g = _evaluate(dataset, beta, b_n, gamma, options, beta)
    trace = [m]
    eta = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) <= grad_tol:
            converged = True
            it -= 1
            break
        step = eta
        for _ in range(MAX_HALVINGS):
            cand = beta + step * g
            try:
                m_c, g_c = _evaluate(dataset, cand, b_n, gamma, options, beta)
            except DivergenceError:
                step /= 2
                continue
            if m_c >= m + ARMIJO * step * float(g @ g):
                break
            step /= 2
        else:
            break  # no ascent possible at working precision
        eta = _bb_step(cand - beta, g_c - g, step)
        beta, m, g = cand, m_c, g_c
        trace.append(m)
    else:
        converged = np.max(np.abs(g)) <= grad_tol
    return beta, m, it, converged, eta, trace


def maximize_m(
    dataset,
    b_n,
    gamma: float,
    init=None,
    options=DEFAULT_OPTIONS,
    grad_tol: float = 1e-7,
    max_iter: int = 5000,
    restarts: int = 0,
    seed: int = 0,
    keep_trace: bool = True,
) -> SolveReport:
    """Gradient ascent with halving backtracking (sufficient increase 1e-4)
    until ``||J_n||_inf <= grad_tol``; yields ``beta_{n,gamma}``.

    ``init`` defaults to ``b_n``. ``restarts`` extra starts at
    ``b_n + N(0, I)`` (drawn from ``seed``) are tried and the best stationary
    point is kept.
    """
    b = np.asarray(b_n, dtype=np.float64)
    starts = [b.copy() if init is None else np.asarray(init, dtype=np.float64)]
    rng = np.random.default_rng(seed)
    starts += [b + rng.normal(size=b.shape) for _ in range(restarts)]

    best = None
    for x0 in starts:
        try:
            res = _ascend(dataset, b, gamma, x0, options, grad_tol, max_iter, keep_trace)
        except DivergenceError:
            if best is None and x0 is starts[-1]:
                raise
            continue
        if best is None or (res[3], res[1]) > (best[3], best[1]):
            best = res
    beta, m, it, converged, eta, trace = best
    return SolveReport(
        solution=CoefficientVector(beta),
        objective_value=m,
        iterations=it,
        converged=bool(converged),
        final_step_size=eta,
        trace=tuple(trace) if keep_trace else None,
    )


def adaptive_weights(beta_gamma, b_n, delta: float = 1.0, floor: float = 1e-10) -> np.ndarray:
    """``1 / |beta_gamma - b_n|^delta`` with the difference floored at ``floor``."""
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    diff = np.abs(np.asarray(beta_gamma, dtype=np.float64) - np.asarray(b_n, dtype=np.float64))
    return 1.0 / np.maximum(diff, floor) ** delta


def prox_shifted(xi, b_k, tau):
    """Proximal map of ``tau * |u - b_k|``: ``b_k + soft(xi - b_k, tau)``.

    Returns ``b_k`` itself (bitwise) whenever ``|xi - b_k| <= tau``. Works
    elementwise on arrays.
    """
    xi, b_k, tau = np.asarray(xi, float), np.asarray(b_k, float), np.asarray(tau, float)
    if np.any(tau < 0):
        raise ParameterError("tau must be nonnegative")
    d = xi - b_k
    shrunk = b_k + np.sign(d) * (np.abs(d) - tau)
    out = np.where(np.abs(d) <= tau, b_k, shrunk)
    return out if out.ndim else float(out)


def penalized_objective(m_value, beta, b_n, lam, weights) -> float:
    """``W_n = M_n - lambda * sum_k w_k |beta_k - b_k|``."""
    return float(m_value - lam * np.sum(np.asarray(weights) * np.abs(np.asarray(beta) - np.asarray(b_n))))


def maximize_w(
    dataset,
    b_n,
    gamma: float,
    lam: float,
    weights,
    init=None,
    options=DEFAULT_OPTIONS,
    step_tol: float = 1e-9,
    max_iter: int = 10000,
    keep_trace: bool = True,
) -> SolveReport:
    """Proximal-gradient ascent on ``W_n``; yields ``beta_{n,gamma,lambda}``.

    Each iteration takes a gradient step on ``M_n`` with a backtracked step
    ``eta`` and applies :func:`prox_shifted` with ``tau_k = eta * lam * w_k``.
    Stops once the iterate moves by at most ``step_tol`` in the infinity norm.
    """
    if lam < 0:
        raise ParameterError("lambda must be nonnegative")
    b = np.asarray(b_n, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    beta = b.copy() if init is None else np.array(init, dtype=np.float64)

    def wval(x, m):
        return penalized_objective(m, x, b, lam, w)

    m, g = _evaluate(dataset, beta, b, gamma, options, beta)
    W = wval(beta, m)
    trace = [W]
    eta = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        step = eta
        accepted = False
        for _ in range(MAX_HALVINGS):
            cand = prox_shifted(beta + step * g, b, step * lam * w)
            diff = cand - beta
            try:
                m_c, g_c = _evaluate(dataset, cand, b, gamma, options, beta)
            except DivergenceError:
                step /= 2
                continue
            # quadratic minorant condition for ascent; guarantees W increases
            if m_c >= m + float(g @ diff) - float(diff @ diff) / (2 * step):
                W_c = wval(cand, m_c)
                if W_c >= W:
                    accepted = True
                    break
            step /= 2
        if not accepted:
            converged = np.max(np.abs(prox_shifted(beta + eta * g, b, eta * lam * w) - beta)) <= step_tol
            it -= 1
            break
        eta = _bb_step(diff, g_c - g, step) if np.any(diff) else step
        beta, m, g, W = cand, m_c, g_c, W_c
        trace.append(W)
        if np.max(np.abs(diff)) <= step_tol:
            converged = True
            break
    return SolveReport(
        solution=CoefficientVector(beta),
        objective_value=W,
        iterations=it,
        converged=bool(converged),
        final_step_size=step,
        trace=tuple(trace) if keep_trace else None,
    )


def active_set(beta_solution, b_n, tol: float = 0.0) -> ActiveSet:
    """Coordinates with ``|beta_k - b_{n,k}| > tol`` (zero-based)."""
    beta = np.asarray(beta_solution, dtype=np.float64)
    b = np.asarray(b_n, dtype=np.float64)
    if beta.shape != b.shape:
        raise ParameterError("beta and b_n must have equal length")
    idx = np.flatnonzero(np.abs(beta - b) > tol)
    return ActiveSet(tuple(idx), len(b), tol)


def kkt_saturation(dataset, b_n, gamma, weights, options=DEFAULT_OPTIONS) -> float:
    """``max_k |dM_n/dbeta_k(b_n)| / w_k``: the smallest lambda for which
    ``b_n`` satisfies the first-order condition of ``W_n``."""
    _, g = gradient_m(dataset, b_n, b_n, gamma, options)
    return float(np.max(np.abs(g) / np.asarray(weights)))


def saturation_lambda(
    dataset,
    b_n,
    gamma: float,
    weights,
    init,
    options=DEFAULT_OPTIONS,
    rtol: float = 1e-6,
    max_doublings: int = 60,
) -> float:
    """Smallest lambda (to relative precision ``rtol``) at which
    :func:`maximize_w` started from ``init`` returns ``b_n`` exactly.

    Bisection between 0 and an upper bracket grown from the first-order
    bound. The returned value is the upper end of the final bracket, so it
    is always a verified tie point.
    """
    b = np.asarray(b_n, dtype=np.float64)

    def tied(lam):
        rep = maximize_w(dataset, b, gamma, lam, weights, init=init, options=options, keep_trace=False)
        return np.array_equal(rep.solution.values, b)

    hi = max(kkt_saturation(dataset, b, gamma, weights, options), 1e-12) * (1 + rtol)
    for _ in range(max_doublings):
        if tied(hi):
            break
        hi *= 2
    else:
        raise DivergenceError("no lambda up to the search limit ties every coordinate")
    lo = 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if tied(mid):
            hi = mid
        else:
            lo = mid
    return hi
