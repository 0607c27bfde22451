"""Model-based ground truth: Lyapunov costs, exact gradients, Riccati gains.

Everything here reads the plant matrices directly, so it is only used by
tests, the verification command and the model-uncertainty study; the
synthesis loop never touches it.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, StructLQRError, UnstableGainError
from .lti import GainMatrix, closed_loop, stability_margin

__all__ = [
    "ExcitationCovariance",
    "lyapunov_solve",
    "analytic_cost",
    "analytic_gradient",
    "riccati_gain",
    "finite_diff_gradient",
    "stabilizing_gain",
]


@dataclass(frozen=True)
class ExcitationCovariance:
    """Initial-state second moment ``sigma`` produced by the excitation.

    For an impulse of amplitude vector ``c`` through B, ``sigma = B c c^T B^T``.
    """

    sigma: np.ndarray

    def __post_init__(self):
        s = np.array(self.sigma, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise DimensionError(f"sigma must be square, got {s.shape}")
        if np.max(np.abs(s - s.T)) > 1e-12:
            raise ValueError("sigma must be symmetric")
        if np.linalg.eigvalsh(s).min() < -1e-10 * max(1.0, np.abs(s).max()):
            raise ValueError("sigma must be positive semidefinite")
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @classmethod
    def impulse(cls, model, amplitude=1.0):
        c = np.broadcast_to(np.asarray(amplitude, dtype=float), (model.m,))
        x0 = model.b_matrix @ c
        return cls(np.outer(x0, x0))


def _as_k(gain):
    return gain.k_matrix if isinstance(gain, GainMatrix) else np.atleast_2d(np.asarray(gain, dtype=float))


def lyapunov_solve(a_cl, rhs):
    """Solve ``a_cl^T P + P a_cl + rhs = 0`` for symmetric P.

    Uses the vectorized n²×n² Kronecker system; meant for small n.

    Raises
    ------
    UnstableGainError
        If ``a_cl`` is not Hurwitz.
    """
    a_cl = np.asarray(a_cl, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = a_cl.shape[0]
    if a_cl.shape != (n, n) or rhs.shape != (n, n):
        raise DimensionError(f"incompatible shapes {a_cl.shape} and {rhs.shape}")
    margin = stability_margin(a_cl)
    if margin >= 0:
        raise UnstableGainError(f"closed loop is not Hurwitz (max real eigenvalue {margin:.6g})")
    eye = np.eye(n)
    # vec(A^T P + P A) = (I kron A^T + A^T kron I) vec(P), column-major vec
    op = np.kron(eye, a_cl.T) + np.kron(a_cl.T, eye)
    p = np.linalg.solve(op, -rhs.ravel(order="F")).reshape((n, n), order="F")
    return 0.5 * (p + p.T)


def _value_and_sensitivity(model, gain, weights, exc):
    k = _as_k(gain)
    a_cl = closed_loop(model, k)
    p = lyapunov_solve(a_cl, weights.q_matrix + k.T @ weights.r_matrix @ k)
    return a_cl, k, p


def analytic_cost(model, gain, weights, exc):
    """``J = Tr(P sigma)`` with ``(A+BK)^T P + P (A+BK) + Q + K^T R K = 0``."""
    _, _, p = _value_and_sensitivity(model, gain, weights, exc)
    return float(np.trace(p @ exc.sigma))


def analytic_gradient(model, gain, weights, exc):
    """Exact ``dJ/dK = 2 (R K + B^T P) L`` with ``(A+BK) L + L (A+BK)^T + sigma = 0``."""
    a_cl, k, p = _value_and_sensitivity(model, gain, weights, exc)
    l = lyapunov_solve(a_cl.T, exc.sigma)
    return 2.0 * (weights.r_matrix @ k + model.b_matrix.T @ p) @ l


def stabilizing_gain(model, shift=1.0):
    """A stabilizing gain for a controllable pair (Bass's shifted-Lyapunov construction).

    Returns ``K = 0`` when A is already Hurwitz.
    """
    a, b = model.a_matrix, model.b_matrix
    margin = stability_margin(a)
    if margin < 0:
        return np.zeros((model.m, model.n))
    beta = max(-float(np.min(np.linalg.eigvals(a).real)), 0.0) + shift
    shifted = -(a + beta * np.eye(model.n))
    # (A + beta I) X + X (A + beta I)^T = 2 B B^T, so that A - B B^T X^{-1} is Hurwitz
    x = lyapunov_solve(shifted.T, 2.0 * b @ b.T)
    return -b.T @ np.linalg.inv(x)


def riccati_gain(model, weights, k0=None, tol=1e-12, max_iter=100):
    """Unconstrained LQR gain ``K = -R^{-1} B^T P`` by Kleinman-Newton iteration.

    Parameters
    ----------
    k0 : array-like, optional
        Stabilizing initial gain. Falls back to :func:`stabilizing_gain`.

    Raises
    ------
    StructLQRError
        If the iteration does not converge in ``max_iter`` steps.
    """
    a, b = model.a_matrix, model.b_matrix
    q, r = weights.q_matrix, weights.r_matrix
    k = stabilizing_gain(model) if k0 is None else _as_k(k0)
    p_prev, change_prev = None, np.inf
    for _ in range(max_iter):
        p = lyapunov_solve(a + b @ k, q + k.T @ r @ k)
        k = -np.linalg.solve(r, b.T @ p)
        if p_prev is not None:
            change = np.max(np.abs(p - p_prev)) / max(1.0, np.max(np.abs(p)))
            # quadratic convergence ends in a rounding-noise floor; stop there too
            if change <= tol or (change <= 1e-8 and change >= change_prev):
                return GainMatrix(k)
            change_prev = change
        p_prev = p
    raise StructLQRError(f"Kleinman iteration did not converge in {max_iter} steps")


def finite_diff_gradient(cost_evaluator, k, h=1e-5):
    """Central-difference gradient of ``cost_evaluator`` at ``k``, entry by entry.

    Raises
    ------
    UnstableGainError
        If the evaluator fails (e.g. unstable closed loop) at a perturbed
        gain; the message names the entry.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    k = np.array(_as_k(k), dtype=float)
    grad = np.zeros_like(k)
    for idx in np.ndindex(k.shape):
        vals = []
        for sign in (1.0, -1.0):
            kp = k.copy()
            kp[idx] += sign * h
            try:
                vals.append(float(cost_evaluator(kp)))
            except UnstableGainError as exc:
                raise UnstableGainError(f"perturbing entry {idx} by {sign * h:+g}: {exc}") from exc
        grad[idx] = (vals[0] - vals[1]) / (2.0 * h)
    return grad
