import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import A1, B1, A2, B2, K0_EX2, horizon_for, random_stable_instance
from structlqr import (
    CostWeights,
    DimensionError,
    ExcitationCovariance,
    ExperimentRig,
    SimConfig,
    StateSpaceModel,
    UnsupportedConfigurationError,
    ZeroPattern,
    analytic_cost,
    analytic_gradient,
    entrywise_mask,
    estimate_gradient,
    finite_diff_gradient,
    gradient_multi,
    gradient_single,
    impulse_response,
)
from structlqr.estimator import input_jacobian_multi, state_jacobians_multi, state_jacobians_single
from structlqr.rig import ExperimentRecordsMulti

MODEL1 = StateSpaceModel(A1, B1)
MODEL2 = StateSpaceModel(A2, B2)
W1 = CostWeights(np.eye(2), [[0.1]])
W2 = CostWeights(np.diag([1.0, 0.0, 1.0, 0.0]), np.eye(2))


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def _fd_state_jacobian(model, k, cfg, amplitude=1.0, h=1e-5):
    """Central differences of the impulse-equivalent trajectory w.r.t. each gain entry."""
    k = np.asarray(k, dtype=float)
    out = np.zeros((cfg.n_samples, model.n) + k.shape)
    for idx in np.ndindex(k.shape):
        kp, km = k.copy(), k.copy()
        kp[idx] += h
        km[idx] -= h
        xp = impulse_response(model, kp, cfg, amplitude).states.values
        xm = impulse_response(model, km, cfg, amplitude).states.values
        out[(slice(None), slice(None)) + idx] = ((xp - xm) / (2 * h)).T
    return out


# --- Jacobians ----------------------------------------------------------------

def test_single_jacobian_matches_trajectory_finite_differences():
    cfg = SimConfig(1e-3, 10.0)
    k = np.array([[0.3, -0.7]])
    recs = ExperimentRig(MODEL1, cfg).run_single_input_schedule(k)
    jac = state_jacobians_single(recs).values
    fd = _fd_state_jacobian(MODEL1, k, cfg)
    assert np.abs(jac - fd).max() <= 1e-3


def test_multi_jacobian_matches_trajectory_finite_differences():
    cfg = SimConfig(1e-3, 8.0)
    recs = ExperimentRig(MODEL2, cfg).run_multi_input_schedule(K0_EX2)
    jac = state_jacobians_multi(recs)
    assert jac.at(0).shape == (4, 2, 4)
    fd = _fd_state_jacobian(MODEL2, K0_EX2, cfg, h=1e-4)
    assert np.abs(jac.values - fd).max() <= 1e-3 * max(1.0, np.abs(fd).max())


def test_input_jacobian_matches_trajectory_finite_differences():
    cfg = SimConfig(1e-3, 2.0)
    s = 500                                                    # t = 0.5 s
    recs = ExperimentRig(MODEL2, cfg).run_multi_input_schedule(K0_EX2)
    jac = state_jacobians_multi(recs).at(s)
    x = recs.exp3_dot.values[:, s]
    h = 1e-4
    for j in range(2):
        got = input_jacobian_multi(K0_EX2, x, jac, j)
        fd = np.zeros((2, 4))
        for idx in np.ndindex(2, 4):
            kp, km = K0_EX2.copy(), K0_EX2.copy()
            kp[idx] += h
            km[idx] -= h
            up = kp[j] @ impulse_response(MODEL2, kp, cfg).states.values[:, s]
            um = km[j] @ impulse_response(MODEL2, km, cfg).states.values[:, s]
            fd[idx] = (up - um) / (2 * h)
        assert np.abs(got - fd).max() <= 1e-3 * max(1.0, np.abs(fd).max())


def test_input_jacobian_trivial_cases():
    x = np.array([1.0, 2.0, 3.0])
    jac = np.random.default_rng(0).normal(size=(3, 2, 3))
    out = input_jacobian_multi(np.zeros((2, 3)), x, jac, 1)
    np.testing.assert_array_equal(out, [[0, 0, 0], [1, 2, 3]])
    np.testing.assert_array_equal(input_jacobian_multi(np.ones((2, 3)), np.zeros(3), np.zeros((3, 2, 3)), 0), 0)
    with pytest.raises(DimensionError):
        input_jacobian_multi(np.zeros((2, 3)), x, jac, 2)


def test_zero_records_give_zero_jacobians():
    rig = ExperimentRig(MODEL2, SimConfig(1e-2, 2.0), amplitude=0.0)
    assert np.all(state_jacobians_multi(rig.run_multi_input_schedule(K0_EX2)).values == 0)
    rig1 = ExperimentRig(MODEL1, SimConfig(1e-2, 2.0), amplitude=0.0)
    assert np.all(state_jacobians_single(rig1.run_single_input_schedule([[0.0, 0.0]])).values == 0)


def test_missing_sub_experiment_is_named():
    recs = ExperimentRig(MODEL2, SimConfig(1e-2, 2.0)).run_multi_input_schedule(K0_EX2)
    partial = dict(recs.exp2)
    del partial[(2, 1)]
    broken = ExperimentRecordsMulti(recs.exp1, recs.exp1_dot, partial, recs.exp3, recs.exp3_dot, 10)
    with pytest.raises(DimensionError, match=r"2\.3\.2"):
        state_jacobians_multi(broken)


# --- gradients ------------------------------------------------------------------

def test_gradient_single_example1():
    recs = ExperimentRig(MODEL1, SimConfig(1e-3, 40.0)).run_single_input_schedule([[0.0, 0.0]])
    est = gradient_single(recs, [[0.0, 0.0]], W1)
    assert _rel(est.matrix, np.array([[1 / (2 * np.sqrt(2)), 0.5]])) <= 0.02
    assert est.metadata["experiment_count"] == 3 and est.metadata["tail_ok"]


def test_gradient_single_zero_q_zero_gain():
    recs = ExperimentRig(MODEL1, SimConfig(1e-3, 40.0)).run_single_input_schedule([[0.0, 0.0]])
    est = gradient_single(recs, [[0.0, 0.0]], CostWeights(np.zeros((2, 2)), [[1.0]]))
    np.testing.assert_array_equal(est.matrix, 0.0)


def test_gradient_single_dominant_term_example1():
    # with R's contribution removed, only the x'Q dx/dK integral remains
    recs = ExperimentRig(MODEL1, SimConfig(1e-3, 40.0)).run_single_input_schedule([[0.0, 0.0]])
    q_only = gradient_single(recs, [[0.0, 0.0]], CostWeights(np.eye(2), [[1e-12]])).matrix
    full = np.array([[1 / (2 * np.sqrt(2)), 0.5]])
    assert _rel(q_only, full) <= 0.02      # at K = 0, u = 0 so the R-term vanishes


def test_gradient_multi_example2():
    recs = ExperimentRig(MODEL2, SimConfig(1e-3, 16.0)).run_multi_input_schedule(K0_EX2)
    est = gradient_multi(recs, K0_EX2, W2)
    ref = analytic_gradient(MODEL2, K0_EX2, W2, ExcitationCovariance.impulse(MODEL2))
    assert _rel(est.matrix, ref) <= 0.02
    assert est.metadata["experiment_count"] == 11
    pat = ZeroPattern.from_one_based((2, 4), [[1, 3], [1, 4], [2, 1], [2, 2]])
    assert np.all(np.abs(est.matrix[pat.zero_mask]) > 0.1)
    assert np.abs(entrywise_mask(est.matrix, pat)[pat.zero_mask]).max() == 0


def test_gradient_multi_rejects_non_diagonal_weights():
    recs = ExperimentRig(MODEL2, SimConfig(1e-2, 2.0)).run_multi_input_schedule(K0_EX2)
    q = np.eye(4)
    q[0, 1] = q[1, 0] = 0.1
    with pytest.raises(UnsupportedConfigurationError, match="analytic_gradient"):
        gradient_multi(recs, K0_EX2, CostWeights(q, np.eye(2)))


def test_gradient_multi_zero_q_zero_gain():
    model = StateSpaceModel(-np.eye(3), np.ones((3, 2)))
    recs = ExperimentRig(model, SimConfig(1e-2, 20.0)).run_multi_input_schedule(np.zeros((2, 3)))
    est = gradient_multi(recs, np.zeros((2, 3)), CostWeights(np.zeros((3, 3)), np.eye(2)))
    np.testing.assert_array_equal(est.matrix, 0.0)


def test_estimate_gradient_dispatch_and_type_error():
    with pytest.raises(TypeError):
        estimate_gradient(object(), [[0.0]], W1)


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 4))
def test_gradient_single_random_matches_finite_differences(seed, n):
    rng = np.random.default_rng(seed)
    model, w, k, margin = random_stable_instance(rng, n, 1)
    exc = ExcitationCovariance.impulse(model)
    recs = ExperimentRig(model, SimConfig(1e-3, horizon_for(margin))).run_single_input_schedule(k)
    est = gradient_single(recs, k, w)
    fd = finite_diff_gradient(lambda kk: analytic_cost(model, kk, w, exc), k, h=1e-5)
    assert _rel(est.matrix, fd) <= 0.02


def test_scale_equivariance():
    cfg = SimConfig(1e-3, 16.0)
    g1 = gradient_multi(ExperimentRig(MODEL2, cfg).run_multi_input_schedule(K0_EX2), K0_EX2, W2).matrix
    g2 = gradient_multi(ExperimentRig(MODEL2, cfg, amplitude=2.0).run_multi_input_schedule(K0_EX2), K0_EX2, W2).matrix
    assert _rel(g2, 4 * g1) <= 1e-6


def test_single_multi_consistency():
    # a second, disconnected input with a zero gain row reproduces the single-input gradient
    b = np.hstack([B1, np.zeros((2, 1))])
    k = np.array([[0.3, -0.7], [0.0, 0.0]])
    cfg = SimConfig(1e-3, 30.0)
    multi = gradient_multi(
        ExperimentRig(StateSpaceModel(A1, b), cfg).run_multi_input_schedule(k), k, CostWeights(np.eye(2), np.diag([0.1, 1.0]))
    ).matrix
    single = gradient_single(ExperimentRig(MODEL1, cfg).run_single_input_schedule(k[:1]), k[:1], W1).matrix
    assert _rel(multi[:1], single) <= 1e-6
