"""Data-driven synthesis of structured LQR state-feedback gains.

The package simulates a laboratory plant, estimates the gradient of the
quadratic regulator cost from step-response experiments, projects it onto a
zero-pattern constraint subspace and iterates projected gradient descent.
Model-based oracles (Lyapunov cost, exact gradient, Riccati gain) serve as
independent ground truth.
"""

from .estimator import GradientEstimate, StateJacobianSeries, estimate_gradient, gradient_multi, gradient_single
from .exceptions import (
    ConfigError,
    DimensionError,
    DivergenceError,
    PatternViolationError,
    SingularConstraintError,
    StructLQRError,
    SynthesisError,
    UnstableGainError,
    UnsupportedConfigurationError,
)
from .lti import (
    CostEvaluation,
    CostWeights,
    GainMatrix,
    SampledSignal,
    SimConfig,
    StateSpaceModel,
    Trajectory,
    closed_loop,
    differentiate,
    impulse_response,
    quadratic_cost,
    simulate,
    stability_margin,
    step_signal,
)
from .oracle import (
    ExcitationCovariance,
    analytic_cost,
    analytic_gradient,
    finite_diff_gradient,
    lyapunov_solve,
    riccati_gain,
)
from .projection import SelectorConstraint, ZeroPattern, entrywise_mask, pattern_to_selectors, project
from .rig import ExperimentRig, perturb_plant
from .synthesis import IterationRecord, SynthesisConfig, SynthesisResult, should_stop, synthesize, update_gain

__version__ = "0.1.0"
