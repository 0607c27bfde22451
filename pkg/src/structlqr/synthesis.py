"""Projected-gradient synthesis of a structured gain from experiment data.

Every iteration runs the experiment schedule at the current gain, turns
the records into a gradient estimate, projects it onto the zero-pattern
subspace and steps ``K <- K - alpha D``.  The cost of a gain is measured by
one impulse-equivalent experiment on the rig, so the loop never sees the
plant matrices.  With backtracking on, a trial step is accepted only when
its probe stays bounded and its measured cost decreases; otherwise the step
is halved until a floor is reached.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .estimator import estimate_gradient
from .exceptions import PatternViolationError, SynthesisError, UnstableGainError
from .lti import GainMatrix, estimate_decay_rate, quadratic_cost
from .projection import ZeroPattern, pattern_to_selectors, project

__all__ = [
    "SynthesisConfig",
    "IterationRecord",
    "StopDecision",
    "SynthesisResult",
    "should_stop",
    "update_gain",
    "synthesize",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynthesisConfig:
    """Step size, stopping rule and backtracking settings.

    Parameters
    ----------
    step_size : float
        Initial step ``alpha`` tried at every iteration.
    epsilon : float
        Stop once the projected gradient has Frobenius norm <= epsilon.
    max_iterations : int
        Budget of gain updates.
    backtracking : bool
        Shrink rejected steps by ``shrink`` until ``min_step_factor * step_size``.
        When False every step is taken at ``step_size`` unconditionally.
    """

    step_size: float
    epsilon: float
    max_iterations: int
    backtracking: bool = True
    shrink: float = 0.5
    min_step_factor: float = 1e-6

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError(f"max_iterations must be an integer >= 1, got {self.max_iterations}")
        if not 0 < self.shrink < 1:
            raise ValueError(f"shrink must lie in (0, 1), got {self.shrink}")
        if not 0 < self.min_step_factor <= 1:
            raise ValueError(f"min_step_factor must lie in (0, 1], got {self.min_step_factor}")


@dataclass(frozen=True)
class IterationRecord:
    """State of the loop after ``iteration`` accepted updates (0 is the initial gain).

    ``stability_margin`` is the decay rate measured on the cost probe, an
    estimate of the largest real closed-loop eigenvalue; ``step_size`` is the
    step that produced this gain (0 for the initial gain).
    """

    iteration: int
    gain: np.ndarray
    cost: float
    grad_norm: float
    proj_norm: float
    stability_margin: float
    step_size: float = 0.0
    tail_ok: bool = True


@dataclass(frozen=True)
class StopDecision:
    stop: bool
    reason: str = None


@dataclass(frozen=True)
class SynthesisResult:
    """Records of iterations 0..N, why the loop ended, and the final gain."""

    records: tuple
    reason: str
    final_gain: GainMatrix
    experiment_count: int = 0

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    @property
    def costs(self):
        return np.array([r.cost for r in self.records])


def should_stop(d_norm, iteration, cfg):
    """Stop on a small projected gradient, else on an exhausted budget."""
    if d_norm <= cfg.epsilon:
        return StopDecision(True, "epsilon")
    if iteration >= cfg.max_iterations:
        return StopDecision(True, "budget")
    return StopDecision(False)


def update_gain(k, d, alpha, pattern=None):
    """Return ``K - alpha D`` with the patterned entries written as exact zeros.

    Raises
    ------
    PatternViolationError
        If ``d`` has a patterned entry larger than 1e-12 in magnitude.
    """
    if isinstance(k, GainMatrix):
        pattern = k.pattern if pattern is None else pattern
        k = k.k_matrix
    k = np.atleast_2d(np.asarray(k, dtype=float))
    d = np.atleast_2d(np.asarray(d, dtype=float))
    pattern = ZeroPattern(k.shape) if pattern is None else pattern
    if d.shape != k.shape:
        raise PatternViolationError(f"direction shape {d.shape} does not match gain {k.shape}")
    bad = pattern.violations(d, tol=1e-12)
    if bad:
        raise PatternViolationError(f"direction has nonzero patterned entries at (row, col) {bad}")
    out = k - alpha * d
    out[pattern.zero_mask] = 0.0
    return GainMatrix(out, pattern)


def _schedule(rig, gain):
    if rig.n_inputs == 1:
        return rig.run_single_input_schedule(gain)
    return rig.run_multi_input_schedule(gain)


def _probe(rig, gain, weights):
    """Measured cost, tail flag and decay rate of one impulse-equivalent experiment."""
    traj = rig.run_impulse_experiment(gain)
    ev = quadratic_cost(traj, weights, gain, rig.cfg.tail_energy_tol)
    return ev, estimate_decay_rate(traj.states)


def synthesize(rig, k0, weights, pattern, cfg, sink=None):
    """Run the data-driven projected-gradient loop from ``k0``.

    Parameters
    ----------
    rig : object
        Provides ``n_states``, ``n_inputs``, ``cfg`` and the experiment
        methods ``run_single_input_schedule`` / ``run_multi_input_schedule``
        / ``run_impulse_experiment``; see :class:`structlqr.rig.ExperimentRig`.
    k0 : GainMatrix or array-like
        Stabilizing initial gain satisfying ``pattern``.
    weights : CostWeights
    pattern : ZeroPattern
    cfg : SynthesisConfig
    sink : callable, optional
        Called with every :class:`IterationRecord` as soon as it exists.

    Returns
    -------
    SynthesisResult
        ``reason`` is ``"epsilon"``, ``"budget"`` or ``"stalled"`` (no
        decreasing step above the backtracking floor).

    Raises
    ------
    PatternViolationError
        If ``k0`` has nonzero patterned entries.
    UnstableGainError
        If the probe experiment at ``k0`` diverges or does not decay.
    SynthesisError
        If every backtracking trial diverges; carries the last record.
    """
    k_arr = k0.k_matrix if isinstance(k0, GainMatrix) else k0
    gain = GainMatrix(k_arr, pattern)
    constraints = pattern_to_selectors(pattern)
    try:
        ev, margin = _probe(rig, gain, weights)
    except UnstableGainError as exc:
        raise UnstableGainError(f"initial gain is not stabilizing: {exc}") from exc
    if not margin < 0:
        raise UnstableGainError(f"initial gain is not stabilizing: probe response does not decay (rate {margin:.3g})")
    if not ev.tail_ok:
        log.warning("tail integrand %.3g exceeds tolerance; consider a longer horizon", ev.tail_energy)

    records, experiments, step, reason = [], 1, 0.0, None
    iteration = 0
    while True:
        recs = _schedule(rig, gain)
        experiments += recs.experiment_count
        grad = estimate_gradient(recs, gain, weights, rig.cfg.tail_energy_tol).matrix
        d = project(grad, constraints) if constraints else grad
        d[pattern.zero_mask] = 0.0
        d_norm = float(np.linalg.norm(d))
        record = IterationRecord(
            iteration=iteration,
            gain=np.array(gain.k_matrix),
            cost=ev.value,
            grad_norm=float(np.linalg.norm(grad)),
            proj_norm=d_norm,
            stability_margin=margin,
            step_size=step,
            tail_ok=ev.tail_ok,
        )
        records.append(record)
        if sink is not None:
            sink(record)
        log.debug("iter %d cost %.10g |D| %.3g", iteration, ev.value, d_norm)
        decision = should_stop(d_norm, iteration, cfg)
        if decision.stop:
            reason = decision.reason
            break

        step, floor, all_diverged = cfg.step_size, cfg.min_step_factor * cfg.step_size, True
        while True:
            trial = update_gain(gain, d, step)
            experiments += 1
            try:
                t_ev, t_margin = _probe(rig, trial, weights)
                diverged = not t_margin < 0
            except UnstableGainError:
                diverged = True
            all_diverged &= diverged
            if not cfg.backtracking:
                if diverged:
                    raise SynthesisError(
                        f"fixed step {step:g} at iteration {iteration + 1} gives an unstable closed loop",
                        last_record=record,
                    )
                break
            if not diverged and t_ev.value < ev.value:
                break
            step *= cfg.shrink
            if step < floor:
                break
        if cfg.backtracking and step < floor:
            if all_diverged:
                raise SynthesisError(
                    f"every trial step down to {floor:g} diverged at iteration {iteration + 1}",
                    last_record=record,
                )
            reason = "stalled"
            break
        gain, ev, margin = trial, t_ev, t_margin
        iteration += 1

    log.info("synthesis stopped (%s) after %d updates, cost %.10g", reason, iteration, ev.value)
    return SynthesisResult(tuple(records), reason, gain, experiments)
