"""Structured synthesis on the second-order plant with k1 fixed at zero."""
import numpy as np

from structlqr import CostWeights, ExperimentRig, SimConfig, StateSpaceModel, SynthesisConfig, ZeroPattern, synthesize

A = np.array([[0.0, 1.0], [-1.0, -np.sqrt(2)]])
B = np.array([[0.0], [1.0]])
rig = ExperimentRig(StateSpaceModel(A, B), SimConfig(1e-3, 40.0))
w = CostWeights(np.eye(2), [[0.1]])
pattern = ZeroPattern((1, 2), [(0, 0)])


def show(rec):
    if rec.iteration <= 5 or rec.iteration % 10 == 0:
        print(f"{rec.iteration:3d}  J={rec.cost:.6f}  |D|={rec.proj_norm:.2e}  K={rec.gain.ravel().round(4)}")


res = synthesize(rig, [[0.0, 0.0]], w, pattern, SynthesisConfig(step_size=5.0, epsilon=1e-4, max_iterations=500), sink=show)
print(f"stopped on {res.reason} after {len(res) - 1} iterations")
print(f"final k2 = {res.final_gain.k_matrix[0, 1]:.5f} (optimum {np.sqrt(2) - np.sqrt(22):.5f})")
print(f"J*/J0 = {res.costs[-1] / res.costs[0]:.4f}")
