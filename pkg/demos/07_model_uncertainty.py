"""Data-driven design versus a design from a wrong model.

The true plant differs from the nominal model by up to 10% per entry.  The
nominal design is the Riccati gain of the nominal model with the forbidden
entry masked out; the data-driven design never sees any model.
"""
import numpy as np

from structlqr import CostWeights, ExcitationCovariance, ExperimentRig, SimConfig, StateSpaceModel, SynthesisConfig
from structlqr import ZeroPattern, analytic_cost, entrywise_mask, perturb_plant, riccati_gain, synthesize

nominal = StateSpaceModel(np.array([[0.0, 1.0], [-1.0, -np.sqrt(2)]]), np.array([[0.0], [1.0]]))
w = CostWeights(np.eye(2), [[0.1]])
pattern = ZeroPattern((1, 2), [(0, 0)])
k_nominal = entrywise_mask(riccati_gain(nominal, w).k_matrix, pattern)

for seed in range(5):
    true = perturb_plant(nominal, 0.1, seed)
    exc = ExcitationCovariance.impulse(true)
    res = synthesize(ExperimentRig(true, SimConfig(1e-3, 40.0)), [[0.0, 0.0]], w, pattern, SynthesisConfig(5.0, 1e-4, 2000))
    j_data = analytic_cost(true, res.final_gain, w, exc)
    j_nom = analytic_cost(true, k_nominal, w, exc)
    print(f"seed {seed}: data-driven {j_data:.6f}  nominal design {j_nom:.6f}")
