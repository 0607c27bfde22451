"""Data-driven cost gradient from experiment records.

The gradient is reported in the convention of the undivided cost
``J = integral of (x'Qx + u'Ru)``, i.e. twice the integral of
``x'Q dx/dK + u'R du/dK`` (a half-weighted cost would give exactly that
integral; the factor 2 only rescales the step size).

The impulse-response signals x(t) needed by the integrand are the time
derivatives of the recorded step responses; u = K x is recomputed from them.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError, UnsupportedConfigurationError
from .lti import GainMatrix
from .rig import ExperimentRecordsMulti, ExperimentRecordsSingle

__all__ = [
    "StateJacobianSeries",
    "GradientEstimate",
    "state_jacobians_single",
    "gradient_single",
    "state_jacobians_multi",
    "input_jacobian_multi",
    "gradient_multi",
    "estimate_gradient",
]


@dataclass(frozen=True)
class StateJacobianSeries:
    """Sampled state sensitivities; ``values[s, i]`` is d x_i / dK (m×n) at ``s*dt``."""

    dt: float
    values: np.ndarray

    @property
    def n_samples(self):
        return self.values.shape[0]

    def at(self, s):
        return self.values[s]


@dataclass(frozen=True)
class GradientEstimate:
    matrix: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.matrix)):
            raise FloatingPointError("gradient estimate is not finite")


def _k(gain):
    return gain.k_matrix if isinstance(gain, GainMatrix) else np.atleast_2d(np.asarray(gain, dtype=float))


def _check_grid(ref, signals):
    for sig in signals:
        if not ref.same_grid(sig):
            raise DimensionError("experiment records do not share one sampling grid")


def _metadata(records, integrand_cost, dt, tail_energy_tol):
    tail = float(np.max(integrand_cost[-max(2, integrand_cost.size // 20):]))
    return {
        "horizon": dt * (integrand_cost.size - 1),
        "tail_energy": tail,
        "tail_ok": tail <= tail_energy_tol,
        "experiment_count": records.experiment_count,
    }


def state_jacobians_single(records):
    """d x_i / dK at every sample is the transposed Experiment-2 measurement x_i^(2)."""
    _check_grid(records.x1, records.x2)
    if len(records.x2) != records.n:
        raise DimensionError(f"expected {records.n} playback records, got {len(records.x2)}")
    stacked = np.stack([sig.values for sig in records.x2])      # (i, g, s)
    return StateJacobianSeries(records.x1.dt, stacked.transpose(2, 0, 1)[:, :, None, :])


def gradient_single(records, gain, weights, tail_energy_tol=1e-8):
    """Single-input gradient ``2 * integral of x'Q dx/dK + u R (x' + K dx/dK)``.

    Works with a general Q; R is the 1×1 input weight.
    """
    k = _k(gain)
    n = records.n
    if k.shape != (1, n):
        raise DimensionError(f"single-input gradient needs a 1x{n} gain, got {k.shape}")
    jac = state_jacobians_single(records).values[:, :, 0, :]    # (s, i, g)
    x = records.x1_dot.values.T                                 # (s, n)
    q, r = weights.q_matrix, float(weights.r_matrix[0, 0])
    u = x @ k[0]
    integrand = np.einsum("si,ij,sjg->sg", x, q, jac)
    integrand += (r * u)[:, None] * (x + np.einsum("i,sig->sg", k[0], jac))
    grad = 2.0 * np.trapezoid(integrand, dx=records.x1.dt, axis=0)[None, :]
    cost_density = np.einsum("si,ij,sj->s", x, q, x) + r * u**2
    return GradientEstimate(grad, _metadata(records, cost_density, records.x1.dt, tail_energy_tol))


def state_jacobians_multi(records):
    """Row k of d x_i / dK is the playback record of sub-experiment ``2.{i+1}.{k+1}``."""
    n, m = records.n, records.m
    rows = []
    for i in range(n):
        for k in range(m):
            if (i, k) not in records.exp2:
                raise DimensionError(f"missing record of sub-experiment 2.{i + 1}.{k + 1}")
            rows.append(records.exp2[(i, k)])
    _check_grid(records.exp3, rows)
    stacked = np.stack([sig.values for sig in rows]).reshape(n, m, n, -1)   # (i, k, g, s)
    return StateJacobianSeries(records.exp3.dt, stacked.transpose(3, 0, 1, 2))


def input_jacobian_multi(gain, states_at_sample, jacobians_at_sample, j):
    """d u_j / dK at one sample (0-based input index ``j``).

    Entry (f, g) is ``sum_i k_ji d x_i / d k_fg``, plus ``x_g`` on row ``f == j``.
    """
    k = _k(gain)
    m, n = k.shape
    if not 0 <= j < m:
        raise DimensionError(f"input index {j} outside 0..{m - 1}")
    x = np.asarray(states_at_sample, dtype=float)
    jac = np.asarray(jacobians_at_sample, dtype=float)
    if x.shape != (n,) or jac.shape != (n, m, n):
        raise DimensionError(f"expected states ({n},) and jacobians ({n}, {m}, {n})")
    out = np.tensordot(k[j], jac, axes=(0, 0))
    out[j] += x
    return out


def gradient_multi(records, gain, weights, tail_energy_tol=1e-8):
    """Multi-input gradient ``2 * integral of sum_i q_i x_i dx_i/dK + sum_j r_j u_j du_j/dK``.

    Only the diagonal weights q_i, r_j enter, so Q and R must be diagonal.

    Raises
    ------
    UnsupportedConfigurationError
        For non-diagonal Q or R (use the analytic oracle for those).
    """
    if not weights.is_diagonal:
        raise UnsupportedConfigurationError(
            "the data-driven multi-input gradient needs diagonal Q and R; "
            "use oracle.analytic_gradient for general weights"
        )
    k = _k(gain)
    n, m = records.n, records.m
    if k.shape != (m, n):
        raise DimensionError(f"gain shape {k.shape} does not match records (m={m}, n={n})")
    jac = state_jacobians_multi(records).values                 # (s, i, f, g)
    x = records.exp3_dot.values.T                               # (s, n)
    q, r = np.diag(weights.q_matrix), np.diag(weights.r_matrix)
    u = x @ k.T                                                 # (s, m)
    ru = r * u
    # sum_j r_j u_j du_j/dK = (r u) x' + sum_i (K' r u)_i dx_i/dK
    integrand = np.einsum("si,sifg->sfg", q * x + ru @ k, jac)
    integrand += ru[:, :, None] * x[:, None, :]
    grad = 2.0 * np.trapezoid(integrand, dx=records.exp3.dt, axis=0)
    cost_density = (q * x**2).sum(axis=1) + (r * u**2).sum(axis=1)
    return GradientEstimate(grad, _metadata(records, cost_density, records.exp3.dt, tail_energy_tol))


def estimate_gradient(records, gain, weights, tail_energy_tol=1e-8):
    """Dispatch on the record type."""
    if isinstance(records, ExperimentRecordsSingle):
        return gradient_single(records, gain, weights, tail_energy_tol)
    if isinstance(records, ExperimentRecordsMulti):
        return gradient_multi(records, gain, weights, tail_energy_tol)
    raise TypeError(f"unknown record type {type(records).__name__}")
