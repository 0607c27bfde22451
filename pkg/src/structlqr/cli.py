"""Batch front end: ``structlqr {synthesize,gradient,verify} --config FILE``.

Run configurations are JSON documents validated against :data:`CONFIG_SCHEMA`.
Matrices are given either as nested row lists or as flat row-major lists
(sizes follow from the declared ``n`` and ``m``).  Zero-pattern entries use
1-based ``[row, col]`` indices; everything past :func:`load_config` is
0-based.

``--config`` also accepts the names of the shipped configurations
(``example1``, ``example2``).
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import oracle
from .estimator import estimate_gradient
from .exceptions import ConfigError, StructLQRError
from .lti import CostWeights, GainMatrix, SimConfig, StateSpaceModel, differentiate, impulse_response, quadratic_cost, simulate, step_signal
from .projection import ZeroPattern, constraint_residual, pattern_to_selectors, project
from .rig import ExperimentRig, perturb_plant
from .synthesis import SynthesisConfig, synthesize

__all__ = ["CONFIG_SCHEMA", "RunConfig", "load_config", "parse_config", "run_command", "main"]

log = logging.getLogger(__name__)

_MATRIX = {
    "oneOf": [
        {"type": "array", "items": {"type": "number"}, "minItems": 1},
        {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 1}, "minItems": 1},
    ]
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["n", "m", "A", "B", "Q", "R", "K0", "pattern", "step_size", "epsilon", "max_iterations", "dt", "horizon"],
    "properties": {
        "name": {"type": "string"},
        "n": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 1},
        "A": _MATRIX,
        "B": _MATRIX,
        "Q": _MATRIX,
        "R": _MATRIX,
        "K0": _MATRIX,
        "pattern": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
        },
        "perturbation": {
            "type": "object",
            "additionalProperties": False,
            "required": ["relative_magnitude", "seed"],
            "properties": {
                "relative_magnitude": {"type": "number", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "step_size": {"type": "number", "exclusiveMinimum": 0},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "max_iterations": {"type": "integer", "minimum": 1},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "tail_energy_tol": {"type": "number", "exclusiveMinimum": 0},
        "amplitude": {"type": "number", "exclusiveMinimum": 0},
        "backtracking": {"type": "boolean"},
        "output_dir": {"type": "string"},
        "write_trajectories": {"type": "boolean"},
    },
}

SHIPPED_CONFIGS = ("example1", "example2")


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration (0-based pattern, numpy matrices)."""

    model: StateSpaceModel
    weights: CostWeights
    k0: GainMatrix
    pattern: ZeroPattern
    synthesis: SynthesisConfig
    sim: SimConfig
    amplitude: float = 1.0
    perturbation: tuple = None
    output_dir: str = "out"
    write_trajectories: bool = False
    name: str = ""
    source: dict = field(default=None, repr=False, compare=False)

    def true_model(self):
        """The plant the rig runs on: the nominal model, perturbed if configured."""
        if self.perturbation is None:
            return self.model
        mag, seed = self.perturbation
        return perturb_plant(self.model, mag, seed)

    def make_rig(self):
        return ExperimentRig(self.true_model(), self.sim, amplitude=self.amplitude)

    def replace(self, **changes):
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return RunConfig(**fields)


def _matrix(doc, key, rows, cols):
    raw = doc[key]
    arr = np.array(raw, dtype=float)
    if arr.ndim == 1:
        if arr.size != rows * cols:
            raise ConfigError(f"$.{key}: flat list has {arr.size} entries, expected {rows}*{cols}={rows * cols}")
        return arr.reshape(rows, cols)
    if arr.ndim != 2 or arr.shape != (rows, cols):
        shape = arr.shape if arr.ndim == 2 else "ragged"
        raise ConfigError(f"$.{key}: expected a {rows}x{cols} matrix, got {shape}")
    return arr


def parse_config(doc):
    """Validate a decoded JSON document and build a :class:`RunConfig`.

    Raises
    ------
    ConfigError
        With the JSON path of the first offending element.
    """
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{exc.json_path}: {exc.message}") from exc
    n, m = doc["n"], doc["m"]
    a = _matrix(doc, "A", n, n)
    b = _matrix(doc, "B", n, m)
    q = _matrix(doc, "Q", n, n)
    r = _matrix(doc, "R", m, m)
    k0 = _matrix(doc, "K0", m, n)
    for idx, (row, col) in enumerate(doc["pattern"]):
        if row > m or col > n:
            raise ConfigError(f"$.pattern[{idx}]: entry [{row}, {col}] outside a {m}x{n} gain")
    pairs = [tuple(p) for p in doc["pattern"]]
    if len(set(pairs)) != len(pairs):
        raise ConfigError("$.pattern: duplicate entries")
    pattern = ZeroPattern.from_one_based((m, n), pairs)
    for idx, (row, col) in enumerate(doc["pattern"]):
        if k0[row - 1, col - 1] != 0:
            raise ConfigError(
                f"$.K0: entry [{row}, {col}] is {k0[row - 1, col - 1]:g} but $.pattern[{idx}] requires it to be 0"
            )
    try:
        model = StateSpaceModel(a, b)
        weights = CostWeights(q, r)
        syn = SynthesisConfig(
            step_size=float(doc["step_size"]),
            epsilon=float(doc["epsilon"]),
            max_iterations=int(doc["max_iterations"]),
            backtracking=bool(doc.get("backtracking", True)),
        )
        sim = SimConfig(float(doc["dt"]), float(doc["horizon"]), float(doc.get("tail_energy_tol", 1e-8)))
    except ValueError as exc:
        raise ConfigError(f"$: {exc}") from exc
    pert = doc.get("perturbation")
    return RunConfig(
        model=model,
        weights=weights,
        k0=GainMatrix(k0, pattern),
        pattern=pattern,
        synthesis=syn,
        sim=sim,
        amplitude=float(doc.get("amplitude", 1.0)),
        perturbation=None if pert is None else (float(pert["relative_magnitude"]), int(pert["seed"])),
        output_dir=doc.get("output_dir", "out"),
        write_trajectories=bool(doc.get("write_trajectories", False)),
        name=doc.get("name", ""),
        source=doc,
    )


def resolve_config_path(path):
    """Map a shipped configuration name to its packaged file; other paths pass through."""
    p = Path(path)
    if not p.exists() and p.stem in SHIPPED_CONFIGS and p.suffix in ("", ".json"):
        return resources.files("structlqr") / "configs" / f"{p.stem}.json"
    return p


def load_config(path):
    """Read and validate a JSON run configuration."""
    p = resolve_config_path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"$: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_config(doc)


def _fmt(x):
    return "%.17g" % x


def _history_header(m, n):
    gains = [f"k_{j}_{i}" for j in range(1, m + 1) for i in range(1, n + 1)]
    return ["iter", "cost", "grad_norm", "proj_norm", "stability_margin"] + gains


def _signal_dump(sig):
    return {"dt": sig.dt, "values": sig.values.tolist()}


def _records_dump(recs):
    if hasattr(recs, "x2"):
        return {
            "x1": _signal_dump(recs.x1),
            "x1_dot": _signal_dump(recs.x1_dot),
            "x2": [_signal_dump(s) for s in recs.x2],
            "u1": _signal_dump(recs.u1),
        }
    return {
        "exp1": [_signal_dump(s) for s in recs.exp1],
        "exp1_dot": [_signal_dump(s) for s in recs.exp1_dot],
        "exp2": {f"2.{i + 1}.{k + 1}": _signal_dump(s) for (i, k), s in sorted(recs.exp2.items())},
        "exp3": _signal_dump(recs.exp3),
        "exp3_dot": _signal_dump(recs.exp3_dot),
    }


def _schedule(rig, gain):
    if rig.n_inputs == 1:
        return rig.run_single_input_schedule(gain)
    return rig.run_multi_input_schedule(gain)


def _cmd_synthesize(cfg, out=None):
    rig = cfg.make_rig()
    m, n = cfg.k0.shape
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "history.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_history_header(m, n))

        def sink(rec):
            writer.writerow(
                [rec.iteration] + [_fmt(v) for v in (rec.cost, rec.grad_norm, rec.proj_norm, rec.stability_margin)]
                + [_fmt(v) for v in rec.gain.ravel()]
            )

        result = synthesize(rig, cfg.k0, cfg.weights, cfg.pattern, cfg.synthesis, sink=sink)
    final = result.final_gain
    summary = {
        "final_gain": final.k_matrix.tolist(),
        "termination_reason": result.reason,
        "iterations": len(result) - 1,
        "initial_cost": result.records[0].cost,
        "final_cost": result.records[-1].cost,
        "final_proj_norm": result.records[-1].proj_norm,
        "experiment_count": result.experiment_count,
    }
    (out_dir / "result.json").write_text(json.dumps(summary, indent=2) + "\n")
    if cfg.write_trajectories:
        dump = {
            "gain": final.k_matrix.tolist(),
            "schedule": _records_dump(_schedule(rig, final)),
            "impulse": _signal_dump(rig.run_impulse_experiment(final).states),
        }
        (out_dir / "trajectories.json").write_text(json.dumps(dump) + "\n")
    print(json.dumps({"out": str(out_dir), **{k: summary[k] for k in ("termination_reason", "iterations", "final_cost")}}), file=out)
    return 0


def _gradient_report(cfg):
    rig = cfg.make_rig()
    true = cfg.true_model()
    est = estimate_gradient(_schedule(rig, cfg.k0), cfg.k0, cfg.weights, cfg.sim.tail_energy_tol)
    exc = oracle.ExcitationCovariance.impulse(true, cfg.amplitude)
    ref = oracle.analytic_gradient(true, cfg.k0, cfg.weights, exc)
    err = float(np.linalg.norm(est.matrix - ref) / max(np.linalg.norm(ref), np.finfo(float).tiny))
    return est, ref, err


def _cmd_gradient(cfg, out=None):
    est, ref, err = _gradient_report(cfg)
    report = {
        "gain": cfg.k0.k_matrix.tolist(),
        "data_driven": est.matrix.tolist(),
        "oracle": ref.tolist(),
        "relative_error": err,
        "tail_energy": est.metadata["tail_energy"],
        "tail_ok": est.metadata["tail_ok"],
        "experiment_count": est.metadata["experiment_count"],
    }
    print(json.dumps(report, indent=2), file=out)
    return 0


def verify_checks(cfg):
    """Invariant checks on the configured system; yields ``(name, passed, detail)``."""
    true = cfg.true_model()
    k0, w = cfg.k0, cfg.weights
    exc = oracle.ExcitationCovariance.impulse(true, cfg.amplitude)
    a_cl = true.a_matrix + true.b_matrix @ k0.k_matrix

    p = oracle.lyapunov_solve(a_cl, w.q_matrix + k0.k_matrix.T @ w.r_matrix @ k0.k_matrix)
    rhs = w.q_matrix + k0.k_matrix.T @ w.r_matrix @ k0.k_matrix
    res = np.linalg.norm(a_cl.T @ p + p @ a_cl + rhs) / max(np.linalg.norm(rhs), 1e-300)
    yield "lyapunov residual", res <= 1e-10, f"{res:.3g} (<= 1e-10)"

    ga = oracle.analytic_gradient(true, k0, w, exc)
    gf = oracle.finite_diff_gradient(lambda k: oracle.analytic_cost(true, k, w, exc), k0, h=1e-6 * max(1.0, np.abs(k0.k_matrix).max()))
    err = np.linalg.norm(ga - gf) / max(np.linalg.norm(ga), 1e-300)
    yield "analytic vs finite-difference gradient", err <= 1e-6, f"{err:.3g} (<= 1e-6)"

    traj = impulse_response(true, k0, cfg.sim, cfg.amplitude)
    ev = quadratic_cost(traj, w, k0, cfg.sim.tail_energy_tol)
    ja = oracle.analytic_cost(true, k0, w, exc)
    err = abs(ev.value - ja) / max(abs(ja), 1e-300)
    yield "quadrature vs Lyapunov cost", err <= 5e-3, f"{err:.3g} (<= 5e-3), tail {ev.tail_energy:.3g}"

    step = step_signal(true.m, cfg.sim, cfg.amplitude)
    deriv = differentiate(simulate(true, k0, step, cfg.sim).states).values
    scale = max(np.abs(traj.states.values).max(), 1e-300)
    err = np.abs(deriv - traj.states.values).max() / scale
    # second-order differencing: the relative gap scales like (|fastest pole| dt)^2
    yield "step derivative vs impulse-equivalent response", err <= 1e-2, f"{err:.3g} relative (<= 1e-2)"

    rig = cfg.make_rig()
    recs = _schedule(rig, k0)
    expected = 1 + true.n if true.m == 1 else true.m + true.n * true.m + 1
    yield "experiment count", recs.experiment_count == expected, f"{recs.experiment_count} (expected {expected})"

    if true.m == 1 or w.is_diagonal:
        est = estimate_gradient(recs, k0, w, cfg.sim.tail_energy_tol)
        err = np.linalg.norm(est.matrix - ga) / max(np.linalg.norm(ga), 1e-300)
        yield "data-driven vs analytic gradient", err <= 0.02, f"{err:.3g} (<= 0.02)"
        g = est.matrix
    else:
        yield "data-driven vs analytic gradient", True, "skipped: multi-input estimator needs diagonal Q and R"
        g = ga

    cs = pattern_to_selectors(cfg.pattern)
    d = project(g, cs)
    idem = np.abs(project(d, cs) - d).max() if cs else 0.0
    yield "projection idempotence", idem <= 1e-12, f"{idem:.3g} (<= 1e-12)"
    feas = constraint_residual(d, cs)
    yield "projection feasibility", feas <= 1e-12, f"{feas:.3g} (<= 1e-12)"
    gap = float(np.sum(g * d) - 0.5 * np.sum(d * d))
    yield "descent inequality", gap >= -1e-12, f"<g, D> - |D|^2/2 = {gap:.3g} (>= 0)"

    k_lqr = oracle.riccati_gain(true, w)
    stat = np.linalg.norm(oracle.analytic_gradient(true, k_lqr, w, exc))
    yield "Riccati stationarity", stat <= 1e-8, f"{stat:.3g} (<= 1e-8)"


def _cmd_verify(cfg, out=None):
    failed = 0
    for name, ok, detail in verify_checks(cfg):
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}", file=out)
    print(f"{'all checks passed' if not failed else f'{failed} check(s) failed'}", file=out)
    return 1 if failed else 0


_COMMANDS = {"synthesize": _cmd_synthesize, "gradient": _cmd_gradient, "verify": _cmd_verify}


def run_command(cfg, command, out=None):
    """Execute ``command`` on a validated configuration; returns the exit status."""
    if command not in _COMMANDS:
        raise ValueError(f"unknown command {command!r}; choose from {sorted(_COMMANDS)}")
    return _COMMANDS[command](cfg, out=sys.stdout if out is None else out)


def _parser():
    parser = argparse.ArgumentParser(prog="structlqr", description="Data-driven structured LQR synthesis.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("synthesize", "run the projected-gradient loop, write history.csv and result.json"),
        ("gradient", "one-shot data-driven gradient next to the analytic oracle"),
        ("verify", "run the invariant checks on the configured system"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON run configuration (or example1 / example2)")
        p.add_argument("--perturb", type=float, metavar="MAG", help="true-plant relative perturbation magnitude")
        p.add_argument("--seed", type=int, default=None, help="perturbation seed (default 0 with --perturb)")
        if name == "synthesize":
            p.add_argument("--out", help="output directory (overrides output_dir)")
            p.add_argument("--fixed-step", action="store_true", help="disable backtracking")
            p.add_argument("--trajectories", action="store_true", help="also write trajectories.json")
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        changes = {}
        if args.perturb is not None or args.seed is not None:
            if args.perturb is not None and args.perturb < 0:
                raise ConfigError("--perturb must be nonnegative")
            mag = args.perturb if args.perturb is not None else (cfg.perturbation or (0.0, 0))[0]
            seed = args.seed if args.seed is not None else (cfg.perturbation or (0.0, 0))[1]
            changes["perturbation"] = (float(mag), int(seed))
        if args.command == "synthesize":
            if args.out:
                changes["output_dir"] = args.out
            if args.fixed_step:
                s = cfg.synthesis
                changes["synthesis"] = SynthesisConfig(s.step_size, s.epsilon, s.max_iterations, False, s.shrink, s.min_step_factor)
            if args.trajectories:
                changes["write_trajectories"] = True
        if changes:
            cfg = cfg.replace(**changes)
        return run_command(cfg, args.command)
    except ConfigError as exc:
        print(f"structlqr: config error: {exc}", file=sys.stderr)
        return 2
    except (StructLQRError, ValueError, FloatingPointError, OSError) as exc:
        print(f"structlqr: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
