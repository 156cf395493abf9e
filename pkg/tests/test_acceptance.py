"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v``.
"""

import itertools
import time

import numpy as np
import pytest
from scipy.special import expit

from relsparse import (
    ActiveSet,
    SimConfig,
    SweepConfig,
    TrajectoryDataset,
    adaptive_weights,
    assemble_r,
    behavioral_influence,
    coef_variance_adaptive,
    coef_variance_baseline,
    derivatives,
    empirical_variance,
    fit_behavioral,
    kl_est,
    maximize_m,
    maximize_w,
    prox_shifted,
    saturation_lambda,
    simulate,
    sweep,
    value_is,
)
from relsparse.checks import derivative_errors, prox_grid_argmin
from relsparse.cli import main
from relsparse.objective import bernoulli_kl
from relsparse.policy import fisher_inverse
from relsparse.solvers import active_set


@pytest.fixture
def report(pytestconfig):
    reporter = pytestconfig.pluginmanager.get_plugin("terminalreporter")

    def emit(number, title, passed, detail):
        line = f"[acceptance {number:>2}] {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        else:
            print(line)
        assert passed, line

    return emit


def test_01_derivatives_match_finite_differences(report):
    start = time.perf_counter()
    data = simulate(SimConfig(n=200, T=3, K=2, seed=101))
    b = fit_behavioral(data).b_n.values
    rng = np.random.default_rng(1)
    worst = np.zeros(3)
    for _ in range(50):
        beta = b + rng.normal(scale=0.5, size=2)
        gamma = rng.uniform(0.0, 10.0)
        worst = np.maximum(worst, derivative_errors(data, beta, b, gamma))
    elapsed = time.perf_counter() - start
    ok = bool(np.all(worst <= 1e-5)) and elapsed < 30
    report(1, "derivatives vs central differences (50 points)", ok,
           f"max rel err J={worst[0]:.1e} H={worst[1]:.1e} X={worst[2]:.1e}, {elapsed:.1f}s")


def test_02_prox_matches_grid_search(report):
    rng = np.random.default_rng(2)
    worst, dead_zone_hits, dead_zone_exact = 0.0, 0, True
    for _ in range(1000):
        xi, bk, tau = rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0, 2)
        p = prox_shifted(xi, bk, tau)
        worst = max(worst, abs(p - prox_grid_argmin(xi, bk, tau)))
        if abs(xi - bk) <= tau:
            dead_zone_hits += 1
            dead_zone_exact &= p == bk
    ok = worst <= 1e-4 and dead_zone_exact and dead_zone_hits > 0
    report(2, "prox vs grid argmin (1000 triples)", ok,
           f"max |err| {worst:.1e}, {dead_zone_hits} dead-zone cases exact={dead_zone_exact}")


def test_03_path_endpoints(report):
    gamma = 1.0
    worst_zero, all_tied = 0.0, True
    for seed in range(1, 6):
        data = simulate(SimConfig(seed=seed))
        b = fit_behavioral(data).b_n.values
        beta_g = maximize_m(data, b, gamma).solution.values
        w = adaptive_weights(beta_g, b)
        zero = maximize_w(data, b, gamma, 0.0, w).solution.values  # cold start at b_n
        worst_zero = max(worst_zero, float(np.max(np.abs(zero - beta_g))))
        lam_sat = saturation_lambda(data, b, gamma, w, beta_g)
        for lam in (lam_sat, 2 * lam_sat, 100 * lam_sat):
            sol = maximize_w(data, b, gamma, lam, w, init=beta_g).solution.values
            all_tied &= np.array_equal(sol, b) and len(active_set(sol, b)) == 0
    ok = worst_zero <= 1e-6 and all_tied
    report(3, "path endpoints on 5 datasets", ok,
           f"lambda=0 max |diff| {worst_zero:.1e}; saturated solutions bitwise b_n: {all_tied}")


def test_04_full_active_set_reduces_to_baseline(report):
    data = simulate(SimConfig(seed=4))
    fit = fit_behavioral(data)
    b, q = fit.b_n.values, behavioral_influence(fit)
    full = ActiveSet.full(2)
    rng = np.random.default_rng(4)
    worst = 0.0
    for gamma in (0.1, 1.0, 10.0):
        for beta in [maximize_m(data, b, gamma).solution.values] + [b + rng.normal(scale=0.3, size=2) for _ in range(3)]:
            bundle = derivatives(data, beta, b, gamma)
            r = assemble_r(bundle, q, bundle.z_per_traj, full)
            adaptive = coef_variance_adaptive(r, bundle, full).active_block
            base = coef_variance_baseline(bundle, q, bundle.z_per_traj)
            worst = max(worst, float(np.max(np.abs(adaptive - base))))
    report(4, "full active set equals baseline sandwich", worst <= 1e-10, f"max |diff| {worst:.1e}")


@pytest.fixture(scope="module")
def default_sweep():
    data = simulate(SimConfig(seed=0))
    fit = fit_behavioral(data)
    return data, fit, sweep(data, config=SweepConfig(baseline=True), fit=fit)


def test_05_sandwich_symmetric_psd(report, default_sweep):
    _, _, res = default_sweep
    worst_sym, worst_eig, count = 0.0, np.inf, 0
    for p in res.iter_points():
        assert p.ok, p.error
        block = p.variance.active_block
        if block.size == 0:
            continue
        count += 1
        scale = max(1.0, float(np.max(np.abs(block))))
        worst_sym = max(worst_sym, float(np.max(np.abs(block - block.T))) / scale)
        worst_eig = min(worst_eig, float(np.min(np.linalg.eigvalsh(block)) / np.trace(block)))
    ok = worst_sym <= 1e-10 and worst_eig >= -1e-10 and count > 0
    report(5, f"sandwich symmetric and PSD ({count} active blocks)", ok,
           f"max asymmetry {worst_sym:.1e}, min eigenvalue/trace {worst_eig:.1e}")


@pytest.mark.slow
def test_06_monte_carlo_calibration(report):
    start = time.perf_counter()
    gamma = 1.0
    sim = SimConfig()
    data = simulate(sim)
    fit = fit_behavioral(data)
    base = sweep(data, [gamma], config=SweepConfig(n_lambda=2), fit=fit)
    lam_sat = base.lambda_sat[gamma]
    at_sat = base.point(gamma, len(base.lambda_grids[gamma]) - 1)
    behavioral_se = np.sqrt(np.diag(fisher_inverse(fit)) / fit.n)
    exact = np.array_equal(at_sat.se, behavioral_se) and len(at_sat.active) == 0

    emp = empirical_variance(sim, [gamma], [0.0, lam_sat], replicates=200, master_seed=2024,
                             config=SweepConfig(inference=True), threads=4)
    sd_zero = emp.sd_coef[gamma][0]
    se_zero = emp.mean_se[gamma][0]
    ratio_zero = se_zero / sd_zero
    ratio_sat = at_sat.se / emp.sd_b
    elapsed = time.perf_counter() - start
    ok = (
        exact
        and bool(np.all((ratio_zero >= 0.5) & (ratio_zero <= 2.0)))
        and bool(np.all((ratio_sat >= 0.5) & (ratio_sat <= 2.0)))
        and elapsed < 15 * 60
    )
    report(6, "Monte Carlo calibration (200 replicates, gamma=1)", ok,
           f"lambda=0 SE/SD {np.round(ratio_zero, 3).tolist()}; saturation SE==behavioral SE: {exact}, "
           f"SE/SD(b_n) {np.round(ratio_sat, 3).tolist()}; failures {len(emp.failures)}; {elapsed:.0f}s")


def test_07_behavioral_region_control(report, default_sweep, tmp_path):
    data, fit, res = default_sweep
    beh_max = float(np.max(fit.se()))
    worst = -np.inf
    for g in res.gamma_grid:
        p = res.point(g, len(res.lambda_grids[g]) - 1)
        worst = max(worst, float(np.max(p.se)) - beh_max)

    from relsparse.data import write_trajectories
    from relsparse.report import read_diagram

    write_trajectories(data, tmp_path / "d.csv")
    assert main(["sweep", "--data", str(tmp_path / "d.csv"), "--out", str(tmp_path / "out"),
                 "--gammas", "1", "--n-lambda", "10", "--baseline-variance", "--formats", "csv", "--threads", "1"]) == 0
    rows = [r for r in read_diagram(tmp_path / "out" / "diagram.csv") if r["k"] > 0]
    has_columns = all("se_theoretical" in r and "se_baseline" in r for r in rows)
    lam_max = max(r["lambda"] for r in rows)
    full_rows = [r for r in rows if r["lambda"] == 0.0]
    sat_rows = [r for r in rows if r["lambda"] == lam_max]
    agree_full = all(abs(r["se_theoretical"] - r["se_baseline"]) <= 1e-10 for r in full_rows)
    tighter_sat = all(r["se_theoretical"] < r["se_baseline"] for r in sat_rows)
    ok = worst <= 1e-12 and has_columns and agree_full and tighter_sat
    detail = (f"max SE - max behavioral SE at saturation {worst:.1e}; "
              f"saturation SE adaptive {[round(r['se_theoretical'], 4) for r in sat_rows]} "
              f"vs baseline {[round(r['se_baseline'], 4) for r in sat_rows]}")
    report(7, "behavioral-region variance control", ok, detail)


def _toy_states():
    # two point-mass states; the reward -s_2 * a is +a in state A and -a in state B
    return np.array([[1.0, -1.0], [1.0, 1.0]])


def _toy_exact(beta, b, p_a0, p_next_b):
    states = _toy_states()
    total = 0.0
    for s0, a0, s1, a1 in itertools.product(range(2), range(2), range(2), range(2)):
        def pi(c, s, a):
            p1 = expit(states[s] @ c)
            return p1 if a == 1 else 1 - p1

        p_s0 = p_a0 if s0 == 0 else 1 - p_a0
        p_s1 = p_next_b[a0] if s1 == 1 else 1 - p_next_b[a0]
        prob_b = p_s0 * pi(b, s0, a0) * p_s1 * pi(b, s1, a1)
        rho = pi(beta, s0, a0) * pi(beta, s1, a1) / (pi(b, s0, a0) * pi(b, s1, a1))
        G = -states[s0][1] * a0 - states[s1][1] * a1
        total += prob_b * rho * G
    return total


def test_08_importance_sampling_oracle(report):
    beta, b = np.array([0.5, -1.0]), np.array([0.2, 0.5])
    p_a0, p_next_b = 0.4, (0.3, 0.8)
    exact = _toy_exact(beta, b, p_a0, p_next_b)

    rng = np.random.default_rng(8)
    states = _toy_states()
    n_sets, n = 10_000, 20
    s0 = (rng.random((n_sets, n)) >= p_a0).astype(int)
    a0 = (rng.random((n_sets, n)) < expit(states[s0] @ b)).astype(int)
    s1 = (rng.random((n_sets, n)) < np.where(a0 == 1, p_next_b[1], p_next_b[0])).astype(int)
    a1 = (rng.random((n_sets, n)) < expit(states[s1] @ b)).astype(int)
    S = np.stack([states[s0], states[s1]], axis=2)
    A = np.stack([a0, a1], axis=2)
    R = -S[..., 1] * A
    values = np.array([value_is(TrajectoryDataset(S[j], A[j], R[j]), beta, b) for j in range(n_sets)])
    mc_se = values.std(ddof=1) / np.sqrt(n_sets)
    z = abs(values.mean() - exact) / mc_se
    report(8, "IS value on enumerable toy MDP (10,000 datasets)", z <= 3,
           f"mean V_n {values.mean():.5f} vs exact {exact:.5f} ({z:.2f} MC SEs)")


def test_09_kl_identities(report):
    data = simulate(SimConfig(n=200, seed=9))
    b = fit_behavioral(data).b_n.values
    at_b = kl_est(data, b, b)
    rng = np.random.default_rng(9)
    min_kl = np.inf
    for j in range(1000):
        d = simulate(SimConfig(n=20, seed=1000 + j))
        beta = rng.normal(scale=2.0, size=2)
        min_kl = min(min_kl, kl_est(d, beta, rng.normal(scale=0.5, size=2)))
    pair = float(bernoulli_kl(0.5, 0.75))
    ok = abs(at_b) <= 1e-14 and min_kl >= 0 and abs(pair - 0.5 * np.log(4 / 3)) <= 1e-12
    report(9, "KL identities", ok, f"KL(b_n,b_n)={at_b:.1e}, min over 1000 draws {min_kl:.2e}, pair {pair:.12f}")


def test_10_end_to_end_determinism(report, tmp_path):
    cfg = tmp_path / "sim.json"
    cfg.write_text('{"n": 200, "T": 3, "K": 2, "seed": 3}')
    digests = []
    for name in ("first", "second"):
        root = tmp_path / name
        root.mkdir()
        assert main(["simulate", "--config", str(cfg), "--out", str(root / "d.csv")]) == 0
        assert main(["sweep", "--data", str(root / "d.csv"), "--out", str(root / "out"), "--n-lambda", "6",
                     "--formats", "csv", "--threads", "2"]) == 0
        assert main(["replicate", "--sim-config", str(cfg), "--diagram-dir", str(root / "out"),
                     "--replicates", "3", "--master-seed", "1", "--threads", "2"]) == 0
        digests.append([(root / f).read_bytes() for f in ("d.csv", "out/diagram.csv", "out/empirical.csv")])
    same = digests[0] == digests[1]
    report(10, "simulate -> sweep -> replicate byte-identical CSVs", same,
           "d.csv, diagram.csv, empirical.csv identical" if same else "outputs differ")
