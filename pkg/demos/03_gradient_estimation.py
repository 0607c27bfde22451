"""Gradient of the LQR cost from experiments alone.

The rig hides A and B; the estimator only sees recorded trajectories.
"""
import numpy as np

from structlqr import CostWeights, ExcitationCovariance, ExperimentRig, SimConfig, StateSpaceModel
from structlqr import analytic_gradient, estimate_gradient

A = np.array([[0, 1, 0, 0], [9.8, 0, -9.8, 1], [0, 0, 0, 1], [-9.8, 0, 29.4, 0]], dtype=float)
B = np.array([[0, 0], [1, -2], [0, 0], [-2, 5]], dtype=float)
model = StateSpaceModel(A, B)
w = CostWeights(np.diag([1.0, 0.0, 1.0, 0.0]), np.eye(2))
k0 = np.array([[-50.0, -20.0, 0.0, 0.0], [0.0, 0.0, -20.0, -6.0]])

ref = analytic_gradient(model, k0, w, ExcitationCovariance.impulse(model))
for dt in (2e-3, 1e-3, 5e-4):
    rig = ExperimentRig(model, SimConfig(dt, 16.0))
    recs = rig.run_multi_input_schedule(k0)
    est = estimate_gradient(recs, k0, w)
    err = np.linalg.norm(est.matrix - ref) / np.linalg.norm(ref)
    print(f"dt={dt:.0e}: {recs.experiment_count} experiments, relative error {err:.2e}")

print("data-driven:\n", est.matrix.round(4))
print("analytic:\n", ref.round(4))
