"""Command-line runner: presets, config parsing, sweep orchestration, and
CSV/JSON emission.

Exit codes: 0 all requested checks passed; 1 a check failed; 2 invalid
configuration; 3 integrator failure.  Failures always leave a
machine-readable ``error.json`` in the output directory.

Output files are deterministic: identical configurations produce bitwise
identical CSV and JSON (fixed sampling, fixed key order, no time-based
seeding).  The trajectory CSV schema is versioned; see the README.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import analysis, example_xy
from .dynamics import GradientFlowProblem, HeavyBallProblem, simulate
from .errors import ConfigError, IntegrationError
from .objectives import get_objective
from .ode import ConvergenceHalt, arc_length

CSV_SCHEMA = "trajectory-csv/1"
EPSILON_RANGE = (1e-4, 1.0)
PRESETS = ("figure1", "epsilon-sweep", "claims", "diagnostics", "custom")
OUT_ENV_VAR = "HEAVYBALL_LAB_OUT"

_FIELD_ORDER = [
    "preset", "objective", "a", "b", "gamma", "epsilon", "epsilons",
    "horizon", "tracking_horizon", "rel_tol", "abs_tol", "claims_tol",
    "n_dirs", "seed", "out",
]


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "diagnostics"
    objective: str = "xy"
    a: float = 1.0
    b: float = 0.1
    gamma: float = 0.5
    epsilon: float = 0.01
    epsilons: tuple = (0.1, 0.03, 0.01, 0.003, 0.001)
    horizon: float = 200.0
    tracking_horizon: float = 5.0
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    claims_tol: float = 1e-6
    n_dirs: int = 8
    seed: int = 0
    out: str = "out"

    def canonical_text(self) -> str:
        """Flat key = value serialization; parsing it back round-trips."""
        lines = []
        for name in _FIELD_ORDER:
            value = getattr(self, name)
            if name == "epsilons":
                value = ",".join(repr(float(e)) for e in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{name} = {value}")
        return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> dict:
    """Parse the flat key = value format (comments start with '#')."""
    values = {}
    names = {f.name for f in fields(ExperimentConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in names:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = val
    return values


def _coerce(values: dict) -> dict:
    out = {}
    for key, val in values.items():
        if isinstance(val, str):
            if key in ("preset", "objective", "out"):
                out[key] = val
            elif key == "epsilons":
                out[key] = tuple(float(p) for p in val.split(","))
            elif key in ("n_dirs", "seed"):
                out[key] = int(val)
            else:
                out[key] = float(val)
        else:
            out[key] = val
    return out


def validate(config: ExperimentConfig) -> tuple:
    """Return (canonical config, echo of derived constants).

    Raises :class:`ConfigError` with aggregated field-level messages.  The
    echo makes runs auditable: every derived constant used downstream is
    computed here from the same closed forms.
    """
    errors = []
    if config.preset not in PRESETS:
        errors.append(f"unknown preset {config.preset!r}; choose from {PRESETS}")
    if config.gamma <= 0:
        errors.append("gamma must be positive")
    if config.a <= 0:
        errors.append("a must be positive")
    if config.b <= 0:
        errors.append("b must be positive")
    if config.horizon <= 0:
        errors.append("horizon must be positive")
    if not (config.rel_tol > 0 and config.abs_tol > 0):
        errors.append("tolerances must be positive")
    eps_all = (config.epsilon,) + (tuple(config.epsilons)
                                   if config.preset == "epsilon-sweep" else ())
    for e in eps_all:
        if not (EPSILON_RANGE[0] <= e <= EPSILON_RANGE[1]):
            errors.append(
                f"epsilon {e:g} outside supported range "
                f"[{EPSILON_RANGE[0]:g}, {EPSILON_RANGE[1]:g}]"
            )
    try:
        get_objective(config.objective)
    except Exception as exc:
        errors.append(str(exc))

    if config.preset == "claims" and not errors:
        thr = config.gamma**2 / (8 * config.a**2 + 8)
        if config.epsilon >= thr:
            errors.append(
                f"epsilon exceeds gamma^2/(8a^2+8)={thr:g} "
                f"for a={config.a:g}, gamma={config.gamma:g}"
            )
    if errors:
        raise ConfigError("; ".join(errors))

    echo = {"epsilon_threshold": config.gamma**2 / (8 * config.a**2 + 8)}
    init = example_xy.ExampleInit(config.a, config.b, config.gamma,
                                  config.epsilon)
    if config.objective == "xy" and config.epsilon < init.epsilon_max:
        env = example_xy.envelope_constants(init)
        echo["envelope"] = {k: getattr(env, k) for k in
                            ("c1", "c2", "c3", "r1", "r2", "r3", "r4",
                             "r5", "r6")}
    return config, echo


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2)
                    + "\n")


def write_trajectory_csv(path: Path, traj, problem, n_samples: int = 2000
                         ) -> None:
    """Sample the run at ``n_samples`` uniform times via dense output.

    Columns: t, positions, velocities, mechanical energy F, gradient norm.
    The fixed sample count makes files comparable across masses.
    """
    obj = problem.objective
    n = obj.dim
    ts = np.linspace(0.0, traj.t_end, n_samples)
    states = traj.eval(ts)
    pos = states[:, :n]
    if isinstance(problem, HeavyBallProblem):
        vel = states[:, n:]
        eps = problem.epsilon
    else:
        vel = -obj.grad(pos) / problem.gamma
        eps = 0.0
    F = obj.eval(pos) + 0.5 * eps * np.sum(vel * vel, axis=-1)
    gn = np.linalg.norm(obj.grad(pos), axis=-1)

    header = ",".join(
        ["t"] + [f"x{i+1}" for i in range(n)] + [f"v{i+1}" for i in range(n)]
        + ["F", "grad_norm"]
    )
    rows = [f"# {CSV_SCHEMA}", header]
    for i in range(n_samples):
        cells = [ts[i], *pos[i], *vel[i], F[i], gn[i]]
        rows.append(",".join(repr(float(c)) for c in cells))
    path.write_text("\n".join(rows) + "\n")


def _resolve_out(config: ExperimentConfig, flag_out) -> Path:
    if flag_out is not None:
        return Path(flag_out)
    env = os.environ.get(OUT_ENV_VAR)
    if env:
        return Path(env)
    return Path(config.out)


def _write_error(outdir: Path, code: int, kind: str, message: str,
                 extra=None) -> None:
    payload = {"exit_code": code, "kind": kind, "message": message}
    if extra:
        payload.update(extra)
    write_json(outdir / "error.json", payload)


def _checks_exit(outdir: Path, checks: dict) -> int:
    failed = sorted(name for name, c in checks.items() if not c.passed)
    if failed:
        _write_error(outdir, 1, "check_failure",
                     f"{len(failed)} check(s) failed",
                     {"failed_checks": failed})
        return 1
    return 0


def _run_figure1(config: ExperimentConfig, outdir: Path, echo: dict) -> int:
    init = example_xy.ExampleInit(config.a, config.b, config.gamma,
                                  config.epsilon)
    halt = ConvergenceHalt()
    hb = init.heavy_ball()
    gf = init.gradient_flow()
    tr_hb = simulate(hb, t_end=config.horizon, rel_tol=config.rel_tol,
                     abs_tol=config.abs_tol, halt=halt)
    tr_gf = simulate(gf, t_end=config.horizon, rel_tol=config.rel_tol,
                     abs_tol=config.abs_tol, halt=halt)
    write_trajectory_csv(outdir / "heavy_ball.csv", tr_hb, hb)
    write_trajectory_csv(outdir / "gradient_flow.csv", tr_gf, gf)

    lim_hb = analysis.limit_point(tr_hb, hb)
    lim_gf = analysis.limit_point(tr_gf, gf)
    checks = {
        "hb_dissipation": analysis.dissipation_check(tr_hb, hb),
        "gf_dissipation": analysis.dissipation_check(tr_gf, gf),
        "hb_energy_monotone": analysis.energy_monotone_check(tr_hb, hb),
        "gf_energy_monotone": analysis.energy_monotone_check(tr_gf, gf),
        "limit_splitting": analysis.Check(
            "limit_splitting",
            lim_hb.kind is analysis.CriticalPointKind.HYPERBOLA
            and lim_gf.kind is analysis.CriticalPointKind.ORIGIN,
            {"heavy_ball_limit": lim_hb.to_dict(),
             "gradient_flow_limit": lim_gf.to_dict()},
        ),
    }
    write_json(outdir / "diagnostics.json", {
        "schema": "diagnostics-json/1",
        "preset": "figure1",
        "derived_constants": echo,
        "checks": {k: v.to_dict() for k, v in checks.items()},
        "runs": {
            "heavy_ball": {"stop_reason": tr_hb.stop_reason,
                           "t_final": tr_hb.t_end,
                           "n_nodes": len(tr_hb.times)},
            "gradient_flow": {"stop_reason": tr_gf.stop_reason,
                              "t_final": tr_gf.t_end,
                              "n_nodes": len(tr_gf.times)},
        },
    })
    return _checks_exit(outdir, checks)


def _run_diagnostics(config: ExperimentConfig, outdir: Path, echo: dict) -> int:
    obj = get_objective(config.objective)
    hb = HeavyBallProblem(obj, epsilon=config.epsilon, gamma=config.gamma,
                          x0=np.array([config.a, -config.a]),
                          v0=np.array([config.b, config.b]))
    options = analysis.DiagnosticsOptions(
        horizon=config.horizon, rel_tol=config.rel_tol,
        abs_tol=config.abs_tol, seed=config.seed)
    tr = simulate(hb, t_end=config.horizon, rel_tol=config.rel_tol,
                  abs_tol=config.abs_tol, halt=options.halt)
    report = analysis.full_diagnostics(hb, options, traj=tr)
    write_trajectory_csv(outdir / "heavy_ball.csv", tr, hb)
    payload = report.to_dict()
    payload["derived_constants"] = echo
    write_json(outdir / "diagnostics.json", payload)
    return _checks_exit(outdir, report.checks)


def _run_claims(config: ExperimentConfig, outdir: Path, echo: dict) -> int:
    init = example_xy.ExampleInit(config.a, config.b, config.gamma,
                                  config.epsilon)
    env = example_xy.envelope_constants(init)
    hb = init.heavy_ball()
    # fixed horizon, no early stop: the verification window must stay dense
    tr = simulate(hb, t_end=min(20.0, config.horizon),
                  rel_tol=config.rel_tol, abs_tol=config.abs_tol)
    write_trajectory_csv(outdir / "heavy_ball.csv", tr, hb)
    report = example_xy.claims_check(tr, init, env, tol=config.claims_tol)
    identity_gap = abs((2 * init.a + env.c3) * env.r5 - env.c3 * env.r6)
    checks = {name: analysis.Check(name, v.passed, {
        "margin": v.margin, "first_violation": v.first_violation})
        for name, v in report.verdicts.items()}
    checks["envelope_identity"] = analysis.Check(
        "envelope_identity", identity_gap <= 1e-12,
        {"gap": identity_gap, "slack": 1e-12})
    write_json(outdir / "claims.json", {
        "schema": "claims-json/1",
        "derived_constants": echo,
        "window": {"end": report.window_end, "t_cross": report.t_cross,
                   "t_u_turn": report.t_u_turn, "t_v_zero": report.t_v_zero,
                   "sample_step": report.sample_step},
        "checks": {k: v.to_dict() for k, v in checks.items()},
    })
    return _checks_exit(outdir, checks)


def _run_sweep(config: ExperimentConfig, outdir: Path, echo: dict) -> int:
    init = example_xy.ExampleInit(config.a, config.b, config.gamma,
                                  config.epsilon)
    options = analysis.DiagnosticsOptions(
        horizon=config.horizon, rel_tol=config.rel_tol,
        abs_tol=config.abs_tol, seed=config.seed)
    sweep = analysis.epsilon_sweep(
        init, config.epsilons, options,
        tracking_horizon=config.tracking_horizon, n_dirs=config.n_dirs)
    for eps in config.epsilons:
        hb = init.with_epsilon(eps).heavy_ball()
        tr = simulate(hb, t_end=config.horizon, rel_tol=config.rel_tol,
                      abs_tol=config.abs_tol, halt=options.halt)
        write_trajectory_csv(outdir / f"heavy_ball_eps{eps!r}.csv", tr, hb)
    payload = sweep.to_dict()
    payload["derived_constants"] = echo
    write_json(outdir / "sweep.json", payload)
    checks = {}
    for eps, rep in sweep.reports.items():
        for name, c in rep.checks.items():
            checks[f"eps{eps!r}:{name}"] = c
    for eps, row in sweep.lengths.items():
        checks[f"eps{eps!r}:length_tail"] = analysis.Check(
            "length_tail", row["tail"] <= 1e-3,
            {"tail": row["tail"], "slack": 1e-3})
    lengths = [row["total"] for row in sweep.lengths.values()]
    med = float(np.median(lengths))
    checks["sigma_spread"] = analysis.Check(
        "sigma_spread", sweep.sigma.sigma <= 3.0 * med,
        {"sigma": sweep.sigma.sigma, "median_length": med, "factor": 3.0})
    return _checks_exit(outdir, checks)


def _run_custom(config: ExperimentConfig, outdir: Path, echo: dict) -> int:
    obj = get_objective(config.objective)
    hb = HeavyBallProblem(obj, epsilon=config.epsilon, gamma=config.gamma,
                          x0=np.array([config.a, -config.a]),
                          v0=np.array([config.b, config.b]))
    tr = simulate(hb, t_end=config.horizon, rel_tol=config.rel_tol,
                  abs_tol=config.abs_tol, halt=ConvergenceHalt())
    write_trajectory_csv(outdir / "heavy_ball.csv", tr, hb)
    n = obj.dim
    write_json(outdir / "run.json", {
        "schema": "run-json/1",
        "derived_constants": echo,
        "stop_reason": tr.stop_reason,
        "t_final": tr.t_end,
        "length": arc_length(tr, components=np.arange(n)),
        "terminal": [float(v) for v in tr.states[-1]],
    })
    return 0


_RUNNERS = {
    "figure1": _run_figure1,
    "diagnostics": _run_diagnostics,
    "claims": _run_claims,
    "epsilon-sweep": _run_sweep,
    "custom": _run_custom,
}


def run(config: ExperimentConfig, flag_out=None) -> int:
    """Validate, execute the preset, and write artifacts; returns the exit
    status (see module docstring for the code map)."""
    outdir = _resolve_out(config, flag_out)
    try:
        config, echo = validate(config)
    except ConfigError as exc:
        outdir.mkdir(parents=True, exist_ok=True)
        _write_error(outdir, 2, "config_error", str(exc))
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.txt").write_text(config.canonical_text())
    try:
        return _RUNNERS[config.preset](config, outdir, echo)
    except IntegrationError as exc:
        _write_error(outdir, 3, type(exc).__name__, str(exc))
        print(f"integrator failure: {exc}", file=sys.stderr)
        return 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hblab",
        description="Simulate damped descent dynamics and certify their "
                    "energy/length bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None,
                       help="flat key = value config file; flags win")
        p.add_argument("--preset", choices=PRESETS, default=None)
        p.add_argument("--objective", default=None)
        p.add_argument("--a", type=float, default=None)
        p.add_argument("--b", type=float, default=None)
        p.add_argument("--gamma", type=float, default=None)
        p.add_argument("--epsilon", type=float, default=None)
        p.add_argument("--epsilons", default=None,
                       help="comma-separated mass ladder for epsilon-sweep")
        p.add_argument("--horizon", type=float, default=None)
        p.add_argument("--tracking-horizon", dest="tracking_horizon",
                       type=float, default=None)
        p.add_argument("--rel-tol", dest="rel_tol", type=float, default=None)
        p.add_argument("--abs-tol", dest="abs_tol", type=float, default=None)
        p.add_argument("--claims-tol", dest="claims_tol", type=float,
                       default=None)
        p.add_argument("--n-dirs", dest="n_dirs", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
    return parser


def config_from_args(args) -> tuple:
    values = {}
    if args.config is not None:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        values.update(parse_config_text(text))
    for f in fields(ExperimentConfig):
        flag = getattr(args, f.name, None)
        if flag is not None and f.name != "out":
            values[f.name] = flag
    flag_out = args.out
    if "out" in values and flag_out is None:
        pass  # file-provided out; env still wins unless --out given
    return ExperimentConfig(**_coerce(values)), flag_out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config, flag_out = config_from_args(args)
    except (ConfigError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        try:
            config, echo = validate(config)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        print(json.dumps(_jsonable({"config": config.canonical_text(),
                                    "derived_constants": echo}),
                         sort_keys=True, indent=2))
        return 0
    return run(config, flag_out=flag_out)


if __name__ == "__main__":
    sys.exit(main())
