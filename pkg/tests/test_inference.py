import numpy as np
import pytest

from relsparse.checks import fd_gradient, relative_error
from relsparse.data import TrajectoryDataset
from relsparse.errors import EmptyActiveSetError, SingularHessianError
from relsparse.objective import DerivativeBundle, derivatives, value_grad_b, value_is
from relsparse.policy import ActiveSet, CoefficientVector, behavioral_influence, fisher_inverse
from relsparse.inference import (
    assemble_r,
    coef_variance_adaptive,
    coef_variance_baseline,
    coef_variance_behavioral,
    selection_aware_variance,
    value_variance,
)
from relsparse.solvers import maximize_m


def bundle_from(H, X, z):
    K = H.shape[0]
    zero = CoefficientVector(np.zeros(K))
    return DerivativeBundle(zero, zero, 1.0, z.mean(axis=0), H, X, z)


@pytest.fixture(scope="module")
def stage(small_data, small_fit):
    b = small_fit.b_n.values
    beta = maximize_m(small_data, b, 1.0).solution.values
    bundle = derivatives(small_data, beta, b, 1.0)
    return small_data, small_fit, b, beta, bundle, behavioral_influence(small_fit)


def test_hand_expanded_r_for_k2():
    H = np.array([[-3.0, 1.0], [2.0, -5.0]])
    X = np.array([[4.0, -1.0], [2.0, 3.0]])
    z = np.array([[0.5, -2.0]])
    q = np.array([[1.5, -0.5]])
    r = assemble_r(bundle_from(H, X, z), q, z, ActiveSet((0,), 2))
    # z_1 + q_1 X_11 + q_2 H_21 + q_2 H_12 + q_2 X_12
    expected = 0.5 + 1.5 * 4.0 + (-0.5) * 2.0 + (-0.5) * 1.0 + (-0.5) * (-1.0)
    assert r.shape == (1, 1)
    assert r[0, 0] == pytest.approx(expected, abs=1e-14)


def test_full_active_set_block_reduction(stage):
    *_, bundle, q = stage
    full = ActiveSet.full(2)
    r = assemble_r(bundle, q, bundle.z_per_traj, full)
    np.testing.assert_allclose(r, bundle.z_per_traj + q @ bundle.X_n.T, rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("center", [False, True])
def test_full_active_set_equals_baseline(stage, center):
    *_, bundle, q = stage
    full = ActiveSet.full(2)
    adaptive = coef_variance_adaptive(assemble_r(bundle, q, bundle.z_per_traj, full), bundle, full, center).active_block
    base = coef_variance_baseline(bundle, q, bundle.z_per_traj, center)
    assert np.max(np.abs(adaptive - base)) <= 1e-10


def test_empty_active_set_errors(stage):
    *_, bundle, q = stage
    with pytest.raises(EmptyActiveSetError):
        assemble_r(bundle, q, bundle.z_per_traj, ActiveSet.empty(2))
    with pytest.raises(EmptyActiveSetError):
        coef_variance_adaptive(np.zeros((3, 0)), bundle, ActiveSet.empty(2))


def test_singular_hessian_reports_condition():
    H = np.array([[1.0, 1.0], [1.0, 1.0]])
    z = np.ones((3, 2))
    with pytest.raises(SingularHessianError):
        coef_variance_baseline(bundle_from(H, np.eye(2), z), np.zeros((3, 2)), z)


def test_behavioral_variance(small_fit):
    assert coef_variance_behavioral(small_fit, ()).shape == (0,)
    diag = coef_variance_behavioral(small_fit, (0, 1))
    assert np.all(diag >= 0)
    np.testing.assert_allclose(np.sqrt(diag / small_fit.n), small_fit.se(), rtol=1e-14)
    np.testing.assert_allclose(diag, np.diag(np.linalg.inv(small_fit.fisher_per_traj)), rtol=1e-10)


@pytest.mark.parametrize("indices", [(0,), (1,), (0, 1)])
def test_symmetric_psd(stage, indices):
    data, fit, b, beta, _, q = stage
    active = ActiveSet(indices, 2)
    bundle = derivatives(data, beta, b, 1.0, active)
    var = selection_aware_variance(bundle, q, fit, active)
    block = var.active_block
    assert np.max(np.abs(block - block.T)) <= 1e-10 * max(1.0, np.max(np.abs(block)))
    assert np.min(np.linalg.eigvalsh(block)) >= -1e-10 * np.trace(block)
    assert np.all(np.isfinite(var.per_coordinate_se)) and np.all(var.per_coordinate_se > 0)
    for k in active.complement:
        assert var.per_coordinate_se[k] == pytest.approx(fit.se()[k], rel=1e-14)


def test_selection_aware_empty_active_is_behavioral(stage):
    data, fit, b, beta, bundle, q = stage
    var = selection_aware_variance(bundle, q, fit, ActiveSet.empty(2))
    np.testing.assert_allclose(var.per_coordinate_se, fit.se(), rtol=1e-14)


def test_value_grad_b_at_behavioral(stage):
    data, fit, b, *_ = stage
    analytic = value_grad_b(data, b, b, ActiveSet.full(2))
    numeric = fd_gradient(lambda y: value_is(data, b, y, ActiveSet.full(2)), b)
    assert relative_error(analytic, numeric) <= 1e-5


def test_value_variance_nonnegative_and_scales(stage):
    data, fit, b, beta, _, q = stage
    v = value_variance(data, beta, b, ActiveSet.full(2), q=q)
    assert v >= 0
    doubled = TrajectoryDataset(
        np.concatenate([data.states] * 2), np.concatenate([data.actions] * 2), np.concatenate([data.rewards] * 2)
    )
    v2 = value_variance(doubled, beta, b, ActiveSet.full(2), q=np.concatenate([q, q]))
    assert v2 == pytest.approx(v / 2, rel=1e-10)


def test_value_variance_reordering(stage):
    data, fit, b, beta, _, q = stage
    perm = np.random.default_rng(1).permutation(data.n)
    a = value_variance(data, beta, b, ActiveSet((1,), 2), q=q)
    p = value_variance(data.take(perm), beta, b, ActiveSet((1,), 2), q=q[perm])
    assert p == pytest.approx(a, rel=1e-12)


def test_model_se_consistent_with_fisher(stage):
    _, fit, *_ = stage
    np.testing.assert_allclose(fisher_inverse(fit) @ fit.fisher_per_traj, np.eye(2), atol=1e-12)
