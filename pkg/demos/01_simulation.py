"""Closed-loop simulation and sampled-signal calculus on the second-order plant.

Shows that the time derivative of a step response reproduces the response
to an impulse-equivalent initial condition x(0) = B, and that the quadrature
cost of that response matches the Lyapunov value.
"""
import numpy as np

from structlqr import CostWeights, ExcitationCovariance, SimConfig, StateSpaceModel, analytic_cost
from structlqr import differentiate, impulse_response, quadratic_cost, simulate, stability_margin, step_signal

A = np.array([[0.0, 1.0], [-1.0, -np.sqrt(2)]])
B = np.array([[0.0], [1.0]])
model = StateSpaceModel(A, B)
k = np.array([[0.0, -1.0]])
cfg = SimConfig(dt=1e-3, horizon=30.0)

print("closed-loop margin:", stability_margin(A + B @ k))

step = simulate(model, k, step_signal(1, cfg), cfg)
impulse = impulse_response(model, k, cfg)
gap = np.abs(differentiate(step.states).values - impulse.states.values).max()
print(f"max |d/dt step - impulse| = {gap:.2e}")
print("step response settles at", step.states.values[:, -1].round(6))

w = CostWeights(np.eye(2), [[0.1]])
quad = quadratic_cost(impulse, w, k)
exact = analytic_cost(model, k, w, ExcitationCovariance.impulse(model))
print(f"cost: quadrature {quad.value:.8f}, Lyapunov {exact:.8f}, tail energy {quad.tail_energy:.1e}")
