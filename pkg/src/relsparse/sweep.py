"""(gamma, lambda) sweeps and the Monte Carlo replicate harness."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg

from . import __version__
from .data import TrajectoryDataset
from .errors import ParameterError, RelSparseError
from .inference import (
    ESTIMATOR_TAGS,
    coef_variance_baseline,
    coef_variance_behavioral,
    selection_aware_variance,
    value_variance,
)
from .objective import DEFAULT_OPTIONS, ObjectiveOptions, derivatives, value_is
from .policy import ActiveSet, BehavioralFit, behavioral_influence, fit_behavioral
from .sim import SimConfig, simulate
from .solvers import active_set, adaptive_weights, maximize_m, maximize_w, saturation_lambda

log = logging.getLogger(__name__)

DEFAULT_GAMMAS = (0.1, 1.0, 10.0)


@dataclass(frozen=True)
class SweepConfig:
    """Knobs for :func:`sweep`; every field is echoed into the run manifest."""

    delta: float = 1.0
    restarts: int = 1
    seed: int = 0
    center: bool = False
    baseline: bool = False
    inference: bool = True
    active_tol: float = 0.0
    n_lambda: int = 40
    lambda_min_ratio: float = 1e-4
    include_zero: bool = True
    options: ObjectiveOptions = DEFAULT_OPTIONS

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class GridPoint:
    gamma: float
    lam: float
    beta: np.ndarray | None = None
    active: ActiveSet | None = None
    se: np.ndarray | None = None
    se_baseline: np.ndarray | None = None
    value: float = float("nan")
    value_se: float = float("nan")
    converged: bool = False
    variance: object = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(eq=False)
class SweepResult:
    gamma_grid: tuple
    lambda_grids: dict
    points: dict
    b_n: np.ndarray
    behavioral_se: np.ndarray
    beta_gamma: dict
    lambda_sat: dict
    metadata: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.b_n)

    def point(self, gamma, lam_index) -> GridPoint:
        return self.points[(float(gamma), lam_index)]

    def iter_points(self):
        for g in self.gamma_grid:
            for j in range(len(self.lambda_grids[g])):
                yield self.points[(g, j)]

    def failures(self) -> list:
        return [(p.gamma, p.lam, p.error) for p in self.iter_points() if not p.ok]


def _auto_lambdas(lam_sat, config: SweepConfig):
    grid = np.logspace(np.log10(config.lambda_min_ratio * lam_sat), np.log10(lam_sat), config.n_lambda)
    grid[-1] = lam_sat
    return np.concatenate([[0.0], grid]) if config.include_zero else grid


def _evaluate_point(dataset, fit, q, gamma, lam, sol, converged, config: SweepConfig) -> GridPoint:
    b = fit.b_n.values
    A = active_set(sol, b, config.active_tol)
    pt = GridPoint(gamma, lam, beta=sol, active=A, converged=converged)
    if not config.inference:
        pt.value = value_is(dataset, sol, b, A, config.options)
        return pt
    bundle = derivatives(dataset, sol, b, gamma, A, config.options)
    var = selection_aware_variance(bundle, q, fit, A, config.center)
    pt.variance = var
    pt.se = var.per_coordinate_se
    if config.baseline:
        try:
            pt.se_baseline = np.sqrt(np.diag(coef_variance_baseline(bundle, q, bundle.z_per_traj, config.center)) / dataset.n)
        except RelSparseError as exc:
            log.warning("baseline variance failed at gamma=%g lambda=%g: %s", gamma, lam, exc)
            pt.se_baseline = np.full(len(b), np.nan)
    pt.value = value_is(dataset, sol, b, A, config.options)
    pt.value_se = float(np.sqrt(value_variance(dataset, sol, b, A, bundle, q, config.options)))
    return pt


def _sweep_gamma(dataset, fit, q, gamma, lambdas, config: SweepConfig):
    b = fit.b_n.values
    if lambdas is not None:
        lambdas = np.sort(np.asarray(lambdas, dtype=np.float64))
        if np.any(lambdas < 0):
            raise ParameterError("lambda grid must be nonnegative")
    lam_sat = None
    try:
        first = maximize_m(dataset, b, gamma, options=config.options, restarts=config.restarts, seed=config.seed, keep_trace=False)
        beta_g = first.solution.values
        w = adaptive_weights(beta_g, b, config.delta)
        if lambdas is None:
            lam_sat = saturation_lambda(dataset, b, gamma, w, beta_g, config.options)
            lambdas = _auto_lambdas(lam_sat, config)
    except (RelSparseError, linalg.LinAlgError, FloatingPointError) as exc:
        msg = f"first stage failed: {type(exc).__name__}: {exc}"
        lambdas = np.zeros(1) if lambdas is None else lambdas
        points = [GridPoint(gamma, float(lam), error=msg) for lam in lambdas]
        return dict(gamma=gamma, lambdas=lambdas, points=points, beta_gamma=None, lam_sat=None, first_converged=False)

    points = []
    init = beta_g
    for lam in lambdas:
        try:
            rep = maximize_w(dataset, b, gamma, lam, w, init=init, options=config.options, keep_trace=False)
            sol = rep.solution.values
            if lam_sat is not None and lam >= lam_sat and not np.array_equal(sol, b):
                # warm path drifted to another stationary point; the cold solve is the verified tie
                rep = maximize_w(dataset, b, gamma, lam, w, init=beta_g, options=config.options, keep_trace=False)
                sol = rep.solution.values
            init = sol
            pt = _evaluate_point(dataset, fit, q, gamma, float(lam), sol, rep.converged and first.converged, config)
        except (RelSparseError, linalg.LinAlgError, FloatingPointError) as exc:
            pt = GridPoint(gamma, float(lam), error=f"{type(exc).__name__}: {exc}")
        points.append(pt)
    return dict(gamma=gamma, lambdas=lambdas, points=points, beta_gamma=beta_g, lam_sat=lam_sat, first_converged=first.converged)


def _sweep_gamma_job(args):
    return _sweep_gamma(*args)


def _map(fn, items, threads):
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def sweep(
    dataset: TrajectoryDataset,
    gamma_grid: Sequence[float] = DEFAULT_GAMMAS,
    lambda_grid=None,
    delta: float | None = None,
    config: SweepConfig | None = None,
    fit: BehavioralFit | None = None,
    threads: int = 1,
) -> SweepResult:
    """Fit the whole selection diagram for one dataset.

    ``lambda_grid`` may be ``None`` (auto: zero plus a log grid up to the
    saturation lambda of each gamma), one sequence shared by every gamma, or
    a mapping from gamma to its own sequence. Errors at single grid points
    are recorded on the point; only a failed behavioral fit aborts the sweep.
    """
    config = config or SweepConfig()
    if delta is not None:
        config = replace(config, delta=delta)
    gammas = tuple(sorted(float(g) for g in gamma_grid))
    if not gammas:
        raise ParameterError("gamma grid is empty")
    if any(g < 0 for g in gammas):
        raise ParameterError("gamma must be nonnegative")
    if lambda_grid is not None and not isinstance(lambda_grid, Mapping) and len(lambda_grid) == 0:
        raise ParameterError("lambda grid is empty")

    if isinstance(lambda_grid, Mapping):
        lambda_grid = {float(g): v for g, v in lambda_grid.items()}
    fit = fit or fit_behavioral(dataset)
    q = behavioral_influence(fit)

    def grid_for(g):
        if lambda_grid is None:
            return None
        if isinstance(lambda_grid, Mapping):
            return lambda_grid[g]
        return lambda_grid

    jobs = [(dataset, fit, q, g, grid_for(g), config) for g in gammas]
    out = _map(_sweep_gamma_job, jobs, threads)

    points, lambda_grids, beta_gamma, lam_sat = {}, {}, {}, {}
    for res in out:
        g = res["gamma"]
        lambda_grids[g] = res["lambdas"]
        beta_gamma[g] = res["beta_gamma"]
        lam_sat[g] = res["lam_sat"]
        for j, pt in enumerate(res["points"]):
            points[(g, j)] = pt

    beh_se = np.sqrt(coef_variance_behavioral(fit, range(dataset.K)) / dataset.n)
    meta = {
        "delta": config.delta,
        "seed": config.seed,
        "restarts": config.restarts,
        "dataset_fingerprint": dataset.fingerprint(),
        "n": dataset.n,
        "T_plus_1": dataset.T_plus_1,
        "K": dataset.K,
        "estimators": dict(ESTIMATOR_TAGS, kl_direction=config.options.kl_direction, importance_sampling="trajectory-wise"),
        "center_middle_factor": config.center,
        "version": __version__,
    }
    return SweepResult(gammas, lambda_grids, points, fit.b_n.values.copy(), beh_se, beta_gamma, lam_sat, meta)


@dataclass(eq=False)
class EmpiricalResult:
    """Across-replicate sample standard deviations (``ddof=1``).

    ``sd_coef[g][j, k]`` and ``sd_value[g][j]`` are indexed like the sweep's
    lambda grid for gamma ``g``; ``sd_b`` is the SD of the behavioral MLE.
    ``mean_se`` holds the replicate-averaged theoretical SEs when inference
    was run.
    """

    gamma_grid: tuple
    lambda_grids: dict
    sd_coef: dict
    sd_value: dict
    sd_b: np.ndarray
    n_success: dict
    replicates: int
    seeds: tuple
    mean_se: dict | None = None
    failures: list = field(default_factory=list)


def replicate_seeds(master_seed: int, replicates: int) -> tuple:
    children = np.random.SeedSequence(master_seed).spawn(replicates)
    return tuple(int(c.generate_state(1)[0]) for c in children)


def _replicate_job(args):
    sim_config, seed, gammas, grids, config = args
    try:
        data = simulate(sim_config.replace(seed=seed))
        res = sweep(data, gammas, grids, config=config)
    except (RelSparseError, linalg.LinAlgError, FloatingPointError) as exc:
        return {"seed": seed, "error": f"{type(exc).__name__}: {exc}"}
    K = sim_config.K
    coef, value, se = {}, {}, {}
    for g in res.gamma_grid:
        L = len(res.lambda_grids[g])
        coef[g] = np.full((L, K), np.nan)
        value[g] = np.full(L, np.nan)
        se[g] = np.full((L, K), np.nan)
        for j in range(L):
            p = res.points[(g, j)]
            if p.ok:
                coef[g][j] = p.beta
                value[g][j] = p.value
                if p.se is not None:
                    se[g][j] = p.se
    return {"seed": seed, "error": None, "coef": coef, "value": value, "se": se, "b_n": res.b_n}


def _sd(stack):
    stack = np.asarray(stack)
    count = np.sum(np.isfinite(stack), axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        sd = np.nanstd(stack, axis=0, ddof=1) if stack.shape[0] > 1 else np.full(stack.shape[1:], np.nan)
    return np.where(count >= 2, sd, np.nan), count


def empirical_variance(
    sim_config: SimConfig,
    gamma_grid: Sequence[float],
    lambda_grid,
    delta: float = 1.0,
    replicates: int = 100,
    master_seed: int = 0,
    config: SweepConfig | None = None,
    seeds: Sequence[int] | None = None,
    threads: int = 1,
) -> EmpiricalResult:
    """Run ``replicates`` independent simulate-and-sweep pipelines and return
    across-replicate SDs of every coefficient and of the value.

    The lambda grid must be explicit (shared or per gamma) so that replicates
    line up. Replicate seeds are spawned from ``master_seed`` unless ``seeds``
    is given.
    """
    if replicates < 2:
        raise ParameterError("at least 2 replicates are needed for a standard deviation")
    if lambda_grid is None:
        raise ParameterError("empirical_variance needs an explicit lambda grid")
    config = replace(config or SweepConfig(inference=False), delta=delta)
    gammas = tuple(sorted(float(g) for g in gamma_grid))
    if isinstance(lambda_grid, Mapping):
        grids = {float(g): np.sort(np.asarray(v, dtype=float)) for g, v in lambda_grid.items()}
    else:
        grids = {g: np.sort(np.asarray(lambda_grid, dtype=float)) for g in gammas}
    seeds = tuple(int(s) for s in seeds) if seeds is not None else replicate_seeds(master_seed, replicates)
    if len(seeds) != replicates:
        raise ParameterError(f"{len(seeds)} seeds for {replicates} replicates")

    jobs = [(sim_config, s, gammas, grids, config) for s in seeds]
    results = _map(_replicate_job, jobs, threads)
    ok = [r for r in results if r["error"] is None]
    failures = [(r["seed"], r["error"]) for r in results if r["error"] is not None]
    if len(ok) < 2:
        raise RelSparseError(f"only {len(ok)} of {replicates} replicates succeeded")

    sd_coef, sd_value, n_success, mean_se = {}, {}, {}, {}
    for g in gammas:
        sd_coef[g], n_success[g] = _sd([r["coef"][g] for r in ok])
        sd_value[g], _ = _sd([r["value"][g] for r in ok])
        if config.inference:
            mean_se[g] = np.nanmean(np.stack([r["se"][g] for r in ok]), axis=0)
    sd_b, _ = _sd([r["b_n"] for r in ok])
    return EmpiricalResult(
        gamma_grid=gammas,
        lambda_grids=grids,
        sd_coef=sd_coef,
        sd_value=sd_value,
        sd_b=sd_b,
        n_success=n_success,
        replicates=replicates,
        seeds=seeds,
        mean_se=mean_se if config.inference else None,
        failures=failures,
    )
