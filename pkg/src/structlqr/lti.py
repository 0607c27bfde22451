"""Plant representation, closed-loop simulation and sampled-signal calculus.

Simulation uses classic fixed-step 4th-order Runge-Kutta.  Because the plant
is linear, one RK4 step collapses to an affine map
``x[s+1] = Phi x[s] + E0 v[s] + E1 v[s+1]`` which is built once per closed
loop and then propagated in blocks of samples with dense matrix products.
Between grid samples the exogenous input is linearly interpolated (the RK4
midpoint stages need a value halfway between samples).
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError, DivergenceError, PatternViolationError, StructLQRError
from .projection import ZeroPattern

__all__ = [
    "StateSpaceModel",
    "CostWeights",
    "GainMatrix",
    "SampledSignal",
    "Trajectory",
    "SimConfig",
    "CostEvaluation",
    "closed_loop",
    "stability_margin",
    "simulate",
    "impulse_response",
    "step_signal",
    "differentiate",
    "quadratic_cost",
    "default_horizon",
    "estimate_decay_rate",
    "integrate_batch",
]


def _frozen(x, ndim=2):
    a = np.array(x, dtype=float)
    if a.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StateSpaceModel:
    """Continuous-time plant ``dx/dt = A x + B u``."""

    a_matrix: np.ndarray
    b_matrix: np.ndarray

    def __post_init__(self):
        a = _frozen(self.a_matrix)
        b = np.array(self.b_matrix, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        b = _frozen(b)
        if a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise DimensionError(f"A must be square and non-empty, got {a.shape}")
        if b.shape[0] != a.shape[0] or b.shape[1] < 1:
            raise DimensionError(f"B must have {a.shape[0]} rows and at least one column, got {b.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("model matrices must be finite")
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "b_matrix", b)

    @property
    def n(self):
        return self.a_matrix.shape[0]

    @property
    def m(self):
        return self.b_matrix.shape[1]


@dataclass(frozen=True)
class CostWeights:
    """Quadratic cost weights, Q symmetric PSD (n×n) and R symmetric PD (m×m)."""

    q_matrix: np.ndarray
    r_matrix: np.ndarray

    def __post_init__(self):
        q = _frozen(np.atleast_2d(self.q_matrix))
        r = _frozen(np.atleast_2d(self.r_matrix))
        for name, w in (("Q", q), ("R", r)):
            if w.shape[0] != w.shape[1]:
                raise DimensionError(f"{name} must be square, got {w.shape}")
            if not np.allclose(w, w.T, rtol=0.0, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
        if np.linalg.eigvalsh(q).min() < -1e-10:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(r).min() <= 0.0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "q_matrix", q)
        object.__setattr__(self, "r_matrix", r)

    @property
    def is_diagonal(self):
        return bool(
            np.all(self.q_matrix == np.diag(np.diag(self.q_matrix)))
            and np.all(self.r_matrix == np.diag(np.diag(self.r_matrix)))
        )


@dataclass(frozen=True)
class GainMatrix:
    """State-feedback gain ``u = K x`` with its zero pattern.

    Patterned entries must be exactly zero.
    """

    k_matrix: np.ndarray
    pattern: ZeroPattern = None

    def __post_init__(self):
        k = np.array(self.k_matrix, dtype=float)
        if k.ndim == 1:
            k = k[None, :]
        k = _frozen(k)
        pattern = self.pattern if self.pattern is not None else ZeroPattern(k.shape)
        if pattern.shape != k.shape:
            raise DimensionError(f"pattern shape {pattern.shape} does not match gain {k.shape}")
        bad = pattern.violations(k)
        if bad:
            raise PatternViolationError(f"gain has nonzero patterned entries at (row, col) {bad}")
        object.__setattr__(self, "k_matrix", k)
        object.__setattr__(self, "pattern", pattern)

    @property
    def shape(self):
        return self.k_matrix.shape


@dataclass(frozen=True)
class SampledSignal:
    """Uniformly sampled multichannel signal; sample ``s`` is at time ``s*dt``.

    ``values`` has shape (channels, samples).
    """

    dt: float
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if v.ndim != 2 or v.shape[1] < 3:
            raise DimensionError(f"a signal needs at least 3 samples, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("signal values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "values", v)

    @property
    def n_channels(self):
        return self.values.shape[0]

    @property
    def n_samples(self):
        return self.values.shape[1]

    @property
    def times(self):
        return self.dt * np.arange(self.n_samples)

    def same_grid(self, other):
        return self.n_samples == other.n_samples and np.isclose(self.dt, other.dt, rtol=1e-12, atol=0)


@dataclass(frozen=True)
class Trajectory:
    """Recorded experiment: states x (n channels) and exogenous input v (m channels)."""

    states: SampledSignal
    inputs: SampledSignal

    def __post_init__(self):
        if not self.states.same_grid(self.inputs):
            raise DimensionError("states and inputs must share one sampling grid")


@dataclass(frozen=True)
class SimConfig:
    """Integration step, horizon (seconds) and the accepted tail integrand."""

    dt: float = 1e-3
    horizon: float = 20.0
    tail_energy_tol: float = 1e-8

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon < 100 * self.dt * (1 - 1e-12):
            raise ValueError(f"horizon must cover at least 100 steps (horizon={self.horizon}, dt={self.dt})")
        if self.tail_energy_tol <= 0:
            raise ValueError("tail_energy_tol must be positive")

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt))

    @property
    def n_samples(self):
        return self.n_steps + 1


@dataclass(frozen=True)
class CostEvaluation:
    """Truncated quadratic cost together with its tail diagnostics."""

    value: float
    tail_energy: float
    tail_ok: bool
    horizon: float = field(default=float("nan"))

    def __float__(self):
        return float(self.value)


def closed_loop(model, gain):
    """Return ``A + B K``."""
    k = gain.k_matrix if isinstance(gain, GainMatrix) else np.atleast_2d(np.asarray(gain, dtype=float))
    if k.shape != (model.m, model.n):
        raise DimensionError(f"gain shape {k.shape} incompatible with model (m={model.m}, n={model.n})")
    return model.a_matrix + model.b_matrix @ k


def stability_margin(a_cl):
    """Largest real part among the eigenvalues of ``a_cl`` (negative iff Hurwitz)."""
    a_cl = np.asarray(a_cl, dtype=float)
    if a_cl.ndim != 2 or a_cl.shape[0] != a_cl.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a_cl.shape}")
    if not np.all(np.isfinite(a_cl)):
        raise ValueError("matrix has non-finite entries")
    try:
        eig = np.linalg.eigvals(a_cl)
    except np.linalg.LinAlgError as exc:
        raise StructLQRError(f"eigenvalue iteration did not converge for matrix\n{a_cl}") from exc
    return float(np.max(eig.real))


def default_horizon(margin, factor=20.0):
    """Horizon ``factor / |margin|`` for a known stable margin."""
    if margin >= 0:
        raise ValueError(f"default horizon needs a negative stability margin, got {margin}")
    return factor / abs(margin)


def _rk4_step(a, b, x, v0, vh, v1, dt):
    k1 = a @ x + b @ v0
    k2 = a @ (x + 0.5 * dt * k1) + b @ vh
    k3 = a @ (x + 0.5 * dt * k2) + b @ vh
    k4 = a @ (x + dt * k3) + b @ v1
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_maps(a, b, dt):
    """Affine one-step RK4 map: x+ = phi x + e0 v[s] + e1 v[s+1] (linear interpolation)."""
    n, p = b.shape
    eye, zx, zv, iv = np.eye(n), np.zeros((n, p)), np.zeros((p, p)), np.eye(p)
    phi = _rk4_step(a, b, eye, np.zeros((p, n)), np.zeros((p, n)), np.zeros((p, n)), dt)
    g0 = _rk4_step(a, b, zx, iv, zv, zv, dt)
    gh = _rk4_step(a, b, zx, zv, iv, zv, dt)
    g1 = _rk4_step(a, b, zx, zv, zv, iv, dt)
    return phi, g0 + 0.5 * gh, 0.5 * gh + g1


def _propagate(phi, x0, w, block=32):
    """Solve ``x[s+1] = phi x[s] + w[s]`` for a batch of runs.

    ``x0`` is (runs, n) and ``w`` is (runs, steps, n); returns
    (runs, steps + 1, n).  Steps are grouped into blocks: the forced
    response inside every block comes from one block-Toeplitz product and
    only the block-boundary states are swept sequentially.
    """
    nb, n_steps, n = w.shape
    out = np.empty((nb, n_steps + 1, n))
    out[:, 0] = x0
    if n_steps == 0:
        return out
    length = min(block, n_steps)
    n_blocks = -(-n_steps // length)
    powers = [np.eye(n)]
    for _ in range(length):
        powers.append(phi @ powers[-1])
    powers = np.stack(powers)
    lag = np.subtract.outer(np.arange(length), np.arange(length))
    toeplitz = np.where((lag >= 0)[:, :, None, None], powers[np.clip(lag, 0, None)], 0.0)
    toeplitz = toeplitz.transpose(0, 2, 1, 3).reshape(length * n, length * n)
    lead = powers[1:].reshape(length * n, n)

    if n_blocks * length != n_steps:
        w = np.concatenate([w, np.zeros((nb, n_blocks * length - n_steps, n))], axis=1)
    forced = w.reshape(nb * n_blocks, length * n) @ toeplitz.T
    forced = forced.reshape(nb, n_blocks, length * n)

    starts = np.empty((nb, n_blocks, n))
    x = np.asarray(x0, dtype=float)
    phi_t, forced_end = powers[length].T, forced[:, :, -n:]
    for k in range(n_blocks):
        starts[:, k] = x
        x = x @ phi_t + forced_end[:, k]
    forced += (starts.reshape(nb * n_blocks, n) @ lead.T).reshape(nb, n_blocks, length * n)
    out[:, 1:] = forced.reshape(nb, n_blocks * length, n)[:, :n_steps]
    return out


def integrate_batch(a_cl, b_in, dt, x0=None, inputs=None, n_steps=None):
    """Integrate ``dx/dt = a_cl x + b_in v`` for a batch of independent runs.

    Parameters
    ----------
    a_cl : (n, n) array
    b_in : (n, p) array
    dt : float
    x0 : (runs, n) array, optional
        Initial states, zero when omitted.
    inputs : (runs, samples, p) array, optional
        Exogenous input samples on the integration grid.
    n_steps : int, optional
        Required when ``inputs`` is omitted.

    Returns
    -------
    (runs, samples, n) array of states.
    """
    a_cl = np.asarray(a_cl, dtype=float)
    b_in = np.asarray(b_in, dtype=float)
    n = a_cl.shape[0]
    if inputs is not None:
        inputs = np.asarray(inputs, dtype=float)
        nb, n_samples, _ = inputs.shape
        n_steps = n_samples - 1
    else:
        nb = 1 if x0 is None else np.asarray(x0).shape[0]
    x0 = np.zeros((nb, n)) if x0 is None else np.asarray(x0, dtype=float).reshape(nb, n)
    phi, e0, e1 = _rk4_maps(a_cl, b_in, dt)
    if inputs is None:
        w = np.zeros((nb, n_steps, n))
    else:
        w = np.einsum("rsp,np->rsn", inputs[:, :-1], e0) + np.einsum("rsp,np->rsn", inputs[:, 1:], e1)
    with np.errstate(over="ignore", invalid="ignore"):
        out = _propagate(phi, x0, w)
    finite = np.isfinite(out).all(axis=(0, 2))
    if not finite.all():
        first = int(np.argmin(finite))
        raise DivergenceError(f"simulation diverged: non-finite state at t={first * dt:.6g} s", time=first * dt)
    return out


def step_signal(n_channels, cfg, amplitude=1.0, channels=None):
    """Step of ``amplitude`` on ``channels`` (all channels when None), starting at t=0."""
    values = np.zeros((n_channels, cfg.n_samples))
    idx = range(n_channels) if channels is None else channels
    for c in idx:
        values[c] = amplitude
    return SampledSignal(cfg.dt, values)


def simulate(model, gain, excitation, cfg, x0=None):
    """Closed-loop response ``dx/dt = (A + B K) x + B v`` from ``x0`` (default 0).

    ``excitation`` is the exogenous injection v (m channels) sampled on the
    ``cfg`` grid.  The returned trajectory stores v as its inputs, not the
    total actuator signal ``K x + v``.

    Raises
    ------
    DivergenceError
        If any state becomes non-finite; carries the first bad time.
    """
    a_cl = closed_loop(model, gain)
    if excitation.n_channels != model.m:
        raise DimensionError(f"excitation has {excitation.n_channels} channels, model has m={model.m}")
    if not np.isclose(excitation.dt, cfg.dt, rtol=1e-12, atol=0) or excitation.n_samples != cfg.n_samples:
        raise DimensionError(
            f"excitation grid (dt={excitation.dt}, {excitation.n_samples} samples) does not match "
            f"config (dt={cfg.dt}, {cfg.n_samples} samples)"
        )
    x_init = None if x0 is None else np.asarray(x0, dtype=float).reshape(1, model.n)
    states = integrate_batch(a_cl, model.b_matrix, cfg.dt, x0=x_init, inputs=excitation.values.T[None])
    return Trajectory(SampledSignal(cfg.dt, states[0].T), excitation)


def impulse_response(model, gain, cfg, amplitude=1.0):
    """Impulse-equivalent experiment: start from ``x(0) = B c`` with no input.

    ``amplitude`` is a scalar (same on every channel) or an m-vector ``c``.
    """
    c = np.broadcast_to(np.asarray(amplitude, dtype=float), (model.m,))
    zero = SampledSignal(cfg.dt, np.zeros((model.m, cfg.n_samples)))
    return simulate(model, gain, zero, cfg, x0=model.b_matrix @ c)


def differentiate(signal):
    """Time derivative: central differences inside, one-sided 2nd order at the ends."""
    if signal.n_samples < 3:
        raise DimensionError("differentiation needs at least 3 samples")
    return SampledSignal(signal.dt, np.gradient(signal.values, signal.dt, axis=1, edge_order=2))


def _tail_window(n_samples):
    return max(2, n_samples // 20)


def quadratic_cost(traj, weights, gain, tail_energy_tol=1e-8):
    """Trapezoidal ``integral of x'Qx + u'Ru`` with ``u = K x`` recomputed from states.

    The returned evaluation carries ``tail_energy`` (largest integrand over
    the last 5% of the record) and ``tail_ok`` (tail below tolerance).
    """
    x = traj.states.values
    q, r = weights.q_matrix, weights.r_matrix
    k = gain.k_matrix if isinstance(gain, GainMatrix) else np.atleast_2d(gain)
    if x.shape[0] != q.shape[0] or k.shape != (r.shape[0], q.shape[0]):
        raise DimensionError(f"trajectory with {x.shape[0]} states does not match weights/gain")
    u = k @ x
    integrand = np.einsum("is,ij,js->s", x, q, x) + np.einsum("is,ij,js->s", u, r, u)
    if not np.all(np.isfinite(integrand)):
        raise DivergenceError("cost integrand is not finite")
    tail = float(np.max(integrand[-_tail_window(integrand.size):]))
    value = float(np.trapezoid(integrand, dx=traj.states.dt))
    return CostEvaluation(
        value=max(value, 0.0),
        tail_energy=tail,
        tail_ok=tail <= tail_energy_tol,
        horizon=traj.states.dt * (integrand.size - 1),
    )


def estimate_decay_rate(signal, n_windows=10):
    """Data-driven estimate of the slowest exponential rate of a free response.

    Compares the peak magnitude in the last two non-underflowed windows of
    the record.  Negative for a decaying response; approximates the
    stability margin of the closed loop that produced it.
    """
    mag = np.linalg.norm(signal.values, axis=0)
    width = max(1, signal.n_samples // n_windows)
    peaks = np.array([mag[i:i + width].max() for i in range(0, signal.n_samples - width + 1, width)])
    valid = np.flatnonzero(peaks > 1e-250)
    if valid.size < 2:
        return -np.inf
    last, prev = valid[-1], valid[-2]
    return float(np.log(peaks[last] / peaks[prev]) / ((last - prev) * width * signal.dt))
