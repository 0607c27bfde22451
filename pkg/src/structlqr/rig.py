"""Simulated laboratory: runs the experiment schedules against a hidden plant.

The rig owns the true plant and only exposes injection/measurement
experiments.  Consumers (gradient estimation, the synthesis loop) receive
measurement records and never the plant matrices.

Sub-experiment naming follows the usual table layout, 1-based:
``1`` / ``1.k`` step experiments, ``2.i`` / ``2.i.k`` playback experiments,
``3`` the all-channel step.  Internally records are indexed 0-based, so the
multi-input record ``exp2[(i, k)]`` is sub-experiment ``2.{i+1}.{k+1}``: the
derivative of state i under a step on channel k, replayed on every input
channel at once.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, DivergenceError, UnstableGainError
from .lti import SampledSignal, SimConfig, Trajectory, closed_loop, differentiate, integrate_batch

__all__ = [
    "ExperimentRig",
    "ExperimentRecordsSingle",
    "ExperimentRecordsMulti",
    "run_single_input_schedule",
    "run_multi_input_schedule",
    "run_impulse_experiment",
    "perturb_plant",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentRecordsSingle:
    """Measurements of the single-input schedule (1 + n simulations).

    x1, x1_dot : Experiment 1 step response of all states and its derivative.
    x2 : x2[i] holds every state measured while replaying ``x1_dot`` channel i.
    u1 : the injected step (exogenous part of the input).
    """

    x1: SampledSignal
    x1_dot: SampledSignal
    x2: tuple
    u1: SampledSignal
    experiment_count: int = 0

    @property
    def n(self):
        return self.x1.n_channels


@dataclass(frozen=True)
class ExperimentRecordsMulti:
    """Measurements of the multi-input schedule (m + n*m + 1 simulations).

    exp1[k], exp1_dot[k] : states under a step on channel k, and derivative.
    exp2[(i, k)] : states while replaying ``exp1_dot[k]`` channel i on every
        input channel (sub-experiment ``2.{i+1}.{k+1}``).
    exp3, exp3_dot : states under a step on all channels, and derivative.
    """

    exp1: tuple
    exp1_dot: tuple
    exp2: dict
    exp3: SampledSignal
    exp3_dot: SampledSignal
    experiment_count: int = 0

    @property
    def n(self):
        return self.exp3.n_channels

    @property
    def m(self):
        return len(self.exp1)


class ExperimentRig:
    """The plant in the lab.

    Parameters
    ----------
    true_model : StateSpaceModel
        Plant the experiments run on. Stored privately; the rig exposes
        only its dimensions and the experiment methods.
    cfg : SimConfig
        Sampling step and record length of every experiment.
    amplitude : float
        Step / impulse amplitude, the same on every channel.
    noise_std : float or array of n floats
        Standard deviation of additive Gaussian noise on measured states.
    seed : int
        Seed of the measurement-noise generator.
    """

    def __init__(self, true_model, cfg=None, amplitude=1.0, noise_std=0.0, seed=0):
        self._model = true_model
        self.cfg = SimConfig() if cfg is None else cfg
        self.amplitude = float(amplitude)
        noise = np.broadcast_to(np.asarray(noise_std, dtype=float), (true_model.n,)).copy()
        if np.any(noise < 0):
            raise ValueError("noise_std must be nonnegative")
        self.noise_std = noise
        self._rng = np.random.default_rng(seed)

    def __repr__(self):
        return (f"ExperimentRig(n={self.n_states}, m={self.n_inputs}, cfg={self.cfg}, "
                f"amplitude={self.amplitude})")

    @property
    def n_states(self):
        return self._model.n

    @property
    def n_inputs(self):
        return self._model.m

    def _measure(self, states):
        if np.any(self.noise_std > 0):
            states = states + self._rng.normal(size=states.shape) * self.noise_std
        return states

    def _run(self, gain, label, b_in=None, x0=None, inputs=None):
        a_cl = closed_loop(self._model, gain)
        b_in = self._model.b_matrix if b_in is None else b_in
        try:
            out = integrate_batch(a_cl, b_in, self.cfg.dt, x0=x0, inputs=inputs, n_steps=self.cfg.n_steps)
        except DivergenceError as exc:
            raise UnstableGainError(f"{label} diverged at t={exc.time:.6g} s; the gain is not stabilizing") from exc
        return self._measure(out)

    def _signal(self, values):
        return SampledSignal(self.cfg.dt, values)

    def run_single_input_schedule(self, gain):
        if self.n_inputs != 1:
            raise DimensionError(f"single-input schedule needs m == 1, plant has m={self.n_inputs}")
        n, cfg = self.n_states, self.cfg
        step = np.full((1, cfg.n_samples, 1), float(self.amplitude))
        x1 = self._run(gain, "Experiment 1", inputs=step)[0].T
        x1_sig = self._signal(x1)
        x1_dot = differentiate(x1_sig)
        # Experiment 2: sub-experiment 2.i replays the derivative of state i
        replay = x1_dot.values[:, :, None]
        x2 = self._run(gain, "Experiment 2", inputs=replay)
        log.debug("single-input schedule: %d simulations", 1 + n)
        return ExperimentRecordsSingle(
            x1=x1_sig,
            x1_dot=x1_dot,
            x2=tuple(self._signal(x2[i].T) for i in range(n)),
            u1=self._signal(step[0].T),
            experiment_count=1 + n,
        )

    def run_multi_input_schedule(self, gain):
        n, m, cfg = self.n_states, self.n_inputs, self.cfg
        if m < 2:
            raise DimensionError(f"multi-input schedule needs m >= 2, plant has m={m}")
        a = float(self.amplitude)
        # Experiment 1 (step on channel k, runs 0..m-1) and Experiment 3 (all channels, run m)
        steps = np.zeros((m + 1, cfg.n_samples, m))
        for k in range(m):
            steps[k, :, k] = a
        steps[m] = a
        first = self._run(gain, "Experiments 1 and 3", inputs=steps)
        exp1 = tuple(self._signal(first[k].T) for k in range(m))
        exp1_dot = tuple(differentiate(s) for s in exp1)
        exp3 = self._signal(first[m].T)
        # Experiment 2: one scalar signal replicated on all m channels
        replicate = self._model.b_matrix @ np.ones((m, 1))
        keys = [(i, k) for i in range(n) for k in range(m)]
        replay = np.stack([exp1_dot[k].values[i] for i, k in keys])[:, :, None]
        second = self._run(gain, "Experiment 2", b_in=replicate, inputs=replay)
        log.debug("multi-input schedule: %d simulations", m + n * m + 1)
        return ExperimentRecordsMulti(
            exp1=exp1,
            exp1_dot=exp1_dot,
            exp2={key: self._signal(second[r].T) for r, key in enumerate(keys)},
            exp3=exp3,
            exp3_dot=differentiate(exp3),
            experiment_count=m + n * m + 1,
        )

    def run_impulse_experiment(self, gain):
        """Free response from ``x(0) = B c`` (impulse of the rig amplitude on every channel)."""
        x0 = (self._model.b_matrix @ np.full(self.n_inputs, float(self.amplitude)))[None, :]
        states = self._run(gain, "impulse experiment", x0=x0)[0].T
        zero = self._signal(np.zeros((self.n_inputs, self.cfg.n_samples)))
        return Trajectory(self._signal(states), zero)


def run_single_input_schedule(rig, gain):
    """Experiment 1 (unit step) and Experiment 2 (n derivative replays) for m == 1."""
    return rig.run_single_input_schedule(gain)


def run_multi_input_schedule(rig, gain):
    """Experiments 1 (m steps), 2 (n*m replays) and 3 (all-channel step) for m >= 2."""
    return rig.run_multi_input_schedule(gain)


def run_impulse_experiment(rig, gain):
    return rig.run_impulse_experiment(gain)


def perturb_plant(model, relative_magnitude, seed):
    """Scale every entry of A and B by ``1 + delta``, delta ~ U[-mag, mag], seeded."""
    if relative_magnitude < 0:
        raise ValueError("relative_magnitude must be nonnegative")
    rng = np.random.default_rng(seed)
    da = rng.uniform(-relative_magnitude, relative_magnitude, size=model.a_matrix.shape)
    db = rng.uniform(-relative_magnitude, relative_magnitude, size=model.b_matrix.shape)
    return type(model)(model.a_matrix * (1 + da), model.b_matrix * (1 + db))
