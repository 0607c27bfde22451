"""Decentralized design for the four-state, two-input plant (about half a minute).

Input 1 may only use states 1-2 and input 2 only states 3-4.
"""
import time

import numpy as np

from structlqr import CostWeights, ExperimentRig, SimConfig, StateSpaceModel, SynthesisConfig, ZeroPattern, synthesize

A = np.array([[0, 1, 0, 0], [9.8, 0, -9.8, 1], [0, 0, 0, 1], [-9.8, 0, 29.4, 0]], dtype=float)
B = np.array([[0, 0], [1, -2], [0, 0], [-2, 5]], dtype=float)
w = CostWeights(np.diag([1.0, 0.0, 1.0, 0.0]), np.eye(2))
pattern = ZeroPattern.from_one_based((2, 4), [[1, 3], [1, 4], [2, 1], [2, 2]])
k0 = np.array([[-50.0, -20.0, 0.0, 0.0], [0.0, 0.0, -20.0, -6.0]])

rig = ExperimentRig(StateSpaceModel(A, B), SimConfig(2e-3, 16.0))
t0 = time.perf_counter()
res = synthesize(rig, k0, w, pattern, SynthesisConfig(step_size=8.0, epsilon=1e-3, max_iterations=3000),
                 sink=lambda r: r.iteration % 200 == 0 and print(f"{r.iteration:5d}  J={r.cost:.5f}  |D|={r.proj_norm:.2e}"))
print(f"{res.reason} after {len(res) - 1} iterations, {time.perf_counter() - t0:.1f} s")
print("K =\n", res.final_gain.k_matrix.round(4))
print(f"J*/J0 = {res.costs[-1] / res.costs[0]:.4f}")
