"""Model-based ground truth: cost, exact gradient and Riccati gain.

These are the references the data-driven pipeline is checked against.
"""
import numpy as np

from structlqr import CostWeights, ExcitationCovariance, StateSpaceModel
from structlqr import analytic_cost, analytic_gradient, finite_diff_gradient, riccati_gain

A = np.array([[0.0, 1.0], [-1.0, -np.sqrt(2)]])
B = np.array([[0.0], [1.0]])
model = StateSpaceModel(A, B)
w = CostWeights(np.eye(2), [[0.1]])
exc = ExcitationCovariance.impulse(model)

k0 = np.zeros((1, 2))
print("J(0) =", analytic_cost(model, k0, w, exc))           # 1/sqrt(2)
g = analytic_gradient(model, k0, w, exc)
fd = finite_diff_gradient(lambda k: analytic_cost(model, k, w, exc), k0)
print("gradient:", g, " finite differences:", fd)

k_lqr = riccati_gain(model, w)
print("Riccati gain:", k_lqr.k_matrix)
print("gradient there:", analytic_gradient(model, k_lqr, w, exc))

# cost along the structured line K = [0, k2]; the minimum sits at sqrt(2) - sqrt(22)
for k2 in (-1.0, -2.0, np.sqrt(2) - np.sqrt(22), -5.0):
    print(f"k2 = {k2:8.4f}  J = {analytic_cost(model, [[0.0, k2]], w, exc):.6f}")
