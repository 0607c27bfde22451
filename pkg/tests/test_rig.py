import numpy as np
import pytest
from scipy.linalg import expm
from scipy.signal import StateSpace, lsim

from conftest import A1, B1, A2, B2, K0_EX2
from structlqr import (
    DimensionError,
    ExperimentRig,
    SimConfig,
    StateSpaceModel,
    UnstableGainError,
    perturb_plant,
)
from structlqr.rig import run_impulse_experiment, run_multi_input_schedule, run_single_input_schedule

MODEL1 = StateSpaceModel(A1, B1)
MODEL2 = StateSpaceModel(A2, B2)
CFG = SimConfig(1e-3, 16.0)


def test_single_schedule_steady_state_example1():
    recs = run_single_input_schedule(ExperimentRig(MODEL1, SimConfig(1e-3, 30.0)), [[0.0, 0.0]])
    np.testing.assert_allclose(recs.x1.values[:, -1], [1.0, 0.0], atol=1e-4)


def test_single_schedule_counts_and_grids():
    recs = run_single_input_schedule(ExperimentRig(MODEL1, CFG), [[0.0, 0.0]])
    assert recs.experiment_count == 1 + 2
    assert len(recs.x2) == 2
    for sig in (recs.x1, recs.x1_dot, recs.u1, *recs.x2):
        assert sig.n_samples == CFG.n_samples and sig.dt == CFG.dt
    np.testing.assert_array_equal(recs.u1.values, 1.0)


def test_multi_schedule_counts_example2():
    recs = run_multi_input_schedule(ExperimentRig(MODEL2, CFG), K0_EX2)
    assert recs.experiment_count == 2 + 8 + 1
    assert len(recs.exp1) == 2 and len(recs.exp1_dot) == 2
    assert len(recs.exp2) == 8
    assert set(recs.exp2) == {(i, k) for i in range(4) for k in range(2)}
    assert all(sig.n_channels == 4 for sig in recs.exp2.values())


@pytest.mark.parametrize("model,gain", [(MODEL1, [[0.0, 0.0]]), (MODEL2, K0_EX2)])
def test_zero_amplitude_gives_zero_records(model, gain):
    rig = ExperimentRig(model, CFG, amplitude=0.0)
    recs = run_single_input_schedule(rig, gain) if model.m == 1 else run_multi_input_schedule(rig, gain)
    sigs = [recs.x1, *recs.x2] if model.m == 1 else [*recs.exp1, *recs.exp2.values(), recs.exp3]
    assert all(np.all(s.values == 0.0) for s in sigs)


def test_schedules_are_bit_identical_without_noise():
    rig = ExperimentRig(MODEL2, CFG)
    a = run_multi_input_schedule(rig, K0_EX2)
    b = run_multi_input_schedule(rig, K0_EX2)
    assert all(np.array_equal(a.exp2[key].values, b.exp2[key].values) for key in a.exp2)
    assert np.array_equal(a.exp3_dot.values, b.exp3_dot.values)


def test_noise_is_seeded_and_validated():
    r1 = ExperimentRig(MODEL1, CFG, noise_std=0.01, seed=4)
    r2 = ExperimentRig(MODEL1, CFG, noise_std=0.01, seed=4)
    x1 = run_impulse_experiment(r1, [[0.0, 0.0]]).states.values
    x2 = run_impulse_experiment(r2, [[0.0, 0.0]]).states.values
    assert np.array_equal(x1, x2)
    clean = run_impulse_experiment(ExperimentRig(MODEL1, CFG), [[0.0, 0.0]]).states.values
    assert 0.005 < np.std(x1 - clean) < 0.02
    with pytest.raises(ValueError):
        ExperimentRig(MODEL1, CFG, noise_std=-1.0)


def test_impulse_experiment_starts_at_b_times_amplitude():
    traj = run_impulse_experiment(ExperimentRig(MODEL2, CFG, amplitude=0.5), K0_EX2)
    np.testing.assert_allclose(traj.states.values[:, 0], B2 @ [0.5, 0.5])
    assert np.all(traj.inputs.values == 0.0)


def test_divergence_names_sub_experiment():
    rig = ExperimentRig(MODEL1, SimConfig(1e-2, 400.0))
    with pytest.raises(UnstableGainError, match="Experiment 1"):
        run_single_input_schedule(rig, [[3.0, 3.0]])


def test_schedule_input_count_checks():
    with pytest.raises(DimensionError):
        run_single_input_schedule(ExperimentRig(MODEL2, CFG), K0_EX2)
    with pytest.raises(DimensionError):
        run_multi_input_schedule(ExperimentRig(MODEL1, CFG), [[0.0, 0.0]])


def test_rig_hides_plant_matrices():
    rig = ExperimentRig(MODEL2, CFG)
    public = {name for name in dir(rig) if not name.startswith("_")}
    assert public == {
        "cfg", "amplitude", "noise_std", "n_states", "n_inputs",
        "run_single_input_schedule", "run_multi_input_schedule", "run_impulse_experiment",
    }
    assert "a_matrix" not in repr(rig) and "9.8" not in repr(rig)


@pytest.mark.parametrize("i,k", [(0, 0), (1, 1), (3, 0)])
def test_replay_record_matches_lsim_oracle(i, k):
    # sub-experiment 2.i.k: inject d/dt of state i under a step on channel k, on every input
    cfg = SimConfig(1e-3, 6.0)
    recs = run_multi_input_schedule(ExperimentRig(MODEL2, cfg), K0_EX2)
    a_cl = A2 + B2 @ K0_EX2
    t = np.arange(cfg.n_samples) * cfg.dt
    # exact derivative of the step response is the free response from B e_k
    v = np.array([(expm(a_cl * tt) @ B2[:, k])[i] for tt in t])
    sys = StateSpace(a_cl, B2 @ np.ones((2, 1)), np.eye(4), np.zeros((4, 1)))
    _, y, _ = lsim(sys, v, t)
    got = recs.exp2[(i, k)].values.T
    assert np.abs(got - y).max() <= 1e-3 * np.abs(y).max()


# --- plant perturbation -----------------------------------------------------

def test_perturb_is_deterministic_and_bounded():
    p1 = perturb_plant(MODEL2, 0.1, seed=7)
    p2 = perturb_plant(MODEL2, 0.1, seed=7)
    np.testing.assert_array_equal(p1.a_matrix, p2.a_matrix)
    ratio = np.divide(p1.a_matrix, A2, out=np.ones_like(A2), where=A2 != 0)
    assert np.all(np.abs(ratio - 1) <= 0.1)
    assert np.all(p1.a_matrix[A2 == 0] == 0)
    assert not np.array_equal(p1.a_matrix, perturb_plant(MODEL2, 0.1, seed=8).a_matrix)


def test_perturb_zero_magnitude_is_identity():
    p = perturb_plant(MODEL2, 0.0, seed=3)
    np.testing.assert_array_equal(p.a_matrix, A2)
    np.testing.assert_array_equal(p.b_matrix, B2)
    with pytest.raises(ValueError):
        perturb_plant(MODEL2, -0.1, seed=3)
