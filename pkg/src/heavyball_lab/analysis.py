"""Cross-cutting diagnostics: dissipation residuals, bound certification,
tracking distance, limit points, and the length-supremum estimator.

Conventions for the inequality checks (recorded in every report):
identity-type residuals get slack 1e-5 scaled by the natural magnitude of
the quantities involved (dense-output-limited); inequality checks get
additive slack 1e-6 (quadrature-limited) unless the source bound is exact,
in which case no slack is added.  Derivatives of scalar functionals along a
run are computed by symmetric differences of dense output with a step that
never leaves the adjacent integration segments; accelerations always come
algebraically from the field, never from differencing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .dynamics import (
    HeavyBallProblem,
    LengthLemmaConstants,
    length_lemma_constants,
    simulate,
    speed_bound,
)
from .errors import SpanMismatch
from .objectives import (
    CriticalPointKind,
    classify_critical_point,
    lipschitz_bound_on_box,
)
from .ode import ConvergenceHalt, Trajectory, arc_length, quad_dense

__all__ = [
    "Check",
    "SpeedVerdict",
    "LimitPointResult",
    "DiagnosticsReport",
    "DiagnosticsOptions",
    "SigmaResult",
    "SweepResult",
    "tracking_distance",
    "l2_velocity_check",
    "certify_speed_bound",
    "limit_point",
    "sigma_estimate",
    "full_diagnostics",
    "dissipation_check",
    "energy_monotone_check",
    "h_alpha_dissipation_check",
    "grad_h_bound_check",
    "epsilon_sweep",
]

DEFAULT_BOX = ((-2.0, 2.0), (-2.0, 2.0))


@dataclass(frozen=True)
class Check:
    """One verified inequality; ``passed`` is recomputable from ``data``."""

    name: str
    passed: bool
    data: dict

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), **self.data}


@dataclass(frozen=True)
class SpeedVerdict:
    sup_velocity: float
    bound: float
    status: str  # "pass" | "fail" | "vacuous" (left the certified box)

    def to_dict(self):
        return {"sup_velocity": self.sup_velocity, "bound": self.bound,
                "status": self.status}


@dataclass(frozen=True)
class LimitPointResult:
    position: np.ndarray
    kind: Optional[CriticalPointKind]
    converged: bool

    def to_dict(self):
        return {
            "position": [float(v) for v in self.position],
            "kind": self.kind.value if self.kind is not None else None,
            "converged": bool(self.converged),
        }


def _split_state(traj: Trajectory, problem):
    n = problem.objective.dim
    if isinstance(problem, HeavyBallProblem):
        return traj.states[:, :n], traj.states[:, n:]
    return traj.states, traj.derivs  # gradient flow: x' is the field value


def _fd_step(traj: Trajectory):
    """Symmetric-difference step per interior node, capped at 1e-6 and at a
    quarter of the adjacent segment widths."""
    t = traj.times
    dt = np.diff(t)
    return np.minimum(1e-6, 0.25 * np.minimum(dt[:-1], dt[1:]))


def dissipation_check(traj: Trajectory, problem, slack: float = 1e-5) -> Check:
    """|dF/dt + gamma |x'|^2| <= slack * (1 + |x'|^2) at interior nodes,
    with F the mechanical energy and dF/dt from dense output."""
    obj = problem.objective
    n = obj.dim
    eps = problem.epsilon if isinstance(problem, HeavyBallProblem) else 0.0

    def energy(ts):
        y = traj.eval(ts)
        if isinstance(problem, HeavyBallProblem):
            return obj.eval(y[:, :n]) + 0.5 * eps * np.sum(y[:, n:] ** 2, axis=-1)
        return obj.eval(y)

    t = traj.times[1:-1]
    h = _fd_step(traj)
    dF = (energy(t + h) - energy(t - h)) / (2.0 * h)
    _, vel = _split_state(traj, problem)
    v_sq = np.sum(vel[1:-1] ** 2, axis=-1)
    resid = np.abs(dF + problem.gamma * v_sq) / (1.0 + v_sq)
    worst = float(np.max(resid)) if resid.size else 0.0
    return Check("dissipation_identity", worst <= slack,
                 {"max_normalized_residual": worst, "slack": slack})


def energy_monotone_check(traj: Trajectory, problem,
                          slack: float = 1e-9) -> Check:
    """F(t_{i+1}) <= F(t_i) + slack at all stored nodes."""
    obj = problem.objective
    pos, vel = _split_state(traj, problem)
    eps = problem.epsilon if isinstance(problem, HeavyBallProblem) else 0.0
    F = obj.eval(pos) + 0.5 * eps * np.sum(vel * vel, axis=-1)
    worst = float(np.max(np.diff(F))) if len(F) > 1 else 0.0
    return Check("energy_monotone", worst <= slack,
                 {"max_increase": worst, "slack": slack})


def _position_velocity_layout(traj: Trajectory):
    """(position indices, dense velocity evaluator) for a trajectory.

    Heavy-ball states carry the velocity block directly (interpolated);
    first-order trajectories fall back to the interpolant's derivative.
    """
    problem = getattr(traj.field, "problem", None)
    if isinstance(problem, HeavyBallProblem):
        n = problem.objective.dim
        return np.arange(n), lambda ts: traj.eval(ts)[:, n:]
    return np.arange(traj.dim), lambda ts: traj.derivative(ts)


def l2_velocity_check(traj: Trajectory, epsilon: float, gamma: float,
                      sup_f_x0: float, inf_f: float, r0: float,
                      slack: float = 1e-6) -> Check:
    """Velocity L2 budget: integral of |x'|^2 against (sup_{X0} f - inf f +
    epsilon r0^2 / 2) / gamma."""
    _, velocity = _position_velocity_layout(traj)

    def vel_sq(ts):
        v = velocity(ts)
        return np.sum(v * v, axis=-1)

    lhs = quad_dense(traj, vel_sq, 0.0, traj.t_end, rel_tol=1e-8)
    rhs = (sup_f_x0 - inf_f + epsilon * r0 * r0 / 2.0) / gamma
    return Check("l2_velocity_bound", lhs <= rhs + slack,
                 {"lhs": float(lhs), "rhs": float(rhs), "slack": slack})


def certify_speed_bound(traj: Trajectory, r: float, box) -> SpeedVerdict:
    """sup over nodes of |x'| against the uniform bound r (no slack: the
    bound is strict).  If the trajectory left the box on which r was
    computed, the certificate is vacuous rather than failed."""
    box = np.asarray(box, dtype=float)
    n = box.shape[0]
    pos = traj.states[:, :n]
    vel = traj.states[:, n:] if traj.states.shape[1] == 2 * n else traj.derivs
    sup_v = float(np.max(np.linalg.norm(vel, axis=-1)))
    inside = np.all(pos >= box[:, 0] - 1e-12) and np.all(pos <= box[:, 1] + 1e-12)
    if not inside:
        return SpeedVerdict(sup_v, r, "vacuous")
    return SpeedVerdict(sup_v, r, "pass" if sup_v <= r else "fail")


def h_alpha_dissipation_check(traj: Trajectory, problem: HeavyBallProblem,
                              consts: LengthLemmaConstants,
                              slack: float = 1e-5) -> Check:
    """d/dt H_alpha(u, x) <= -a |x'|^2 - b |x''|^2 up to slack * (1 + |x'|^2
    + |x''|^2), with u = x + beta x' and dH/dt from dense output."""
    obj = problem.objective
    n = obj.dim
    beta, alpha = consts.beta, consts.alpha

    def H(ts):
        y = traj.eval(ts)
        x, v = y[:, :n], y[:, n:]
        u = x + beta * v
        return obj.eval(u) + alpha * beta * beta * np.sum(v * v, axis=-1)

    t = traj.times[1:-1]
    h = _fd_step(traj)
    dH = (H(t + h) - H(t - h)) / (2.0 * h)
    x, v = traj.states[1:-1, :n], traj.states[1:-1, n:]
    acc = -(problem.gamma * v + obj.grad(x)) / problem.epsilon
    v_sq = np.sum(v * v, axis=-1)
    a_sq = np.sum(acc * acc, axis=-1)
    resid = (dH + consts.a_diss * v_sq + consts.b_diss * a_sq) / (1.0 + v_sq + a_sq)
    worst = float(np.max(resid)) if resid.size else 0.0
    return Check("h_alpha_dissipation", worst <= slack,
                 {"max_normalized_residual": worst, "slack": slack,
                  "beta": beta, "alpha": alpha,
                  "a_diss": consts.a_diss, "b_diss": consts.b_diss})


def grad_h_bound_check(traj: Trajectory, problem: HeavyBallProblem,
                       consts: LengthLemmaConstants,
                       slack: float = 1e-7) -> Check:
    """|grad H_alpha(u, x)| <= c |x'| + epsilon |x''| + slack at interior
    nodes, with the gradient taken on the doubled space."""
    obj = problem.objective
    n = obj.dim
    beta, alpha = consts.beta, consts.alpha
    x, v = traj.states[1:-1, :n], traj.states[1:-1, n:]
    u = x + beta * v
    acc = -(problem.gamma * v + obj.grad(x)) / problem.epsilon
    block_x = obj.grad(u) + 2.0 * alpha * beta * v
    block_y = -2.0 * alpha * beta * v
    lhs = np.sqrt(np.sum(block_x**2, axis=-1) + np.sum(block_y**2, axis=-1))
    rhs = consts.c_grad * np.linalg.norm(v, axis=-1) \
        + problem.epsilon * np.linalg.norm(acc, axis=-1)
    resid = lhs - rhs
    worst = float(np.max(resid)) if resid.size else 0.0
    i = int(np.argmax(resid)) if resid.size else 0
    return Check("grad_h_bound", worst <= slack,
                 {"max_residual": worst, "slack": slack,
                  "c_grad": consts.c_grad,
                  "worst_time": float(traj.times[1:-1][i]) if resid.size else None})


def tracking_distance(traj_eps: Trajectory, traj_grad: Trajectory,
                      T: float, n_grid: int = 1000) -> float:
    """sup over a uniform grid of |x_eps(t) - x(t)| on [0, T], both curves
    evaluated densely.  Raises :class:`SpanMismatch` if either run stopped
    short of T."""
    slop = 1e-9 * max(1.0, T)
    if traj_eps.t_end < T - slop or traj_grad.t_end < T - slop:
        raise SpanMismatch(
            f"trajectories span [0, {traj_eps.t_end:.6g}] and "
            f"[0, {traj_grad.t_end:.6g}]; need [0, {T}]"
        )
    n = traj_grad.dim
    ts = np.linspace(0.0, min(T, traj_eps.t_end, traj_grad.t_end), n_grid)
    pos_eps = traj_eps.eval(ts)[:, :n]
    pos_grad = traj_grad.eval(ts)
    return float(np.max(np.linalg.norm(pos_eps - pos_grad, axis=-1)))


def limit_point(traj: Trajectory, problem, tol_g: float = 1e-9,
                tol_v: float = 1e-9, dwell: float = 1.0,
                classify_tol: float = 1e-3) -> LimitPointResult:
    """Terminal position with its critical-point classification.

    ``converged`` is decided post hoc from the stored tail: gradient and
    velocity norms below tolerance at every node in the final ``dwell``
    window (or the integrator already stopped on its convergence rule).
    """
    obj = problem.objective
    n = obj.dim
    pos, vel = _split_state(traj, problem)
    p_final = pos[-1]
    if traj.stop_reason == "converged":
        converged = True
    else:
        tail = traj.times >= traj.t_end - dwell
        gn = np.linalg.norm(obj.grad(pos[tail]), axis=-1)
        vn = np.linalg.norm(vel[tail], axis=-1)
        converged = bool(np.all(gn <= tol_g) and np.all(vn <= tol_v))
    kind = None
    if obj.name == "xy":
        kind = classify_critical_point(obj, p_final, classify_tol)
    return LimitPointResult(p_final, kind, converged)


@dataclass(frozen=True)
class SigmaResult:
    sigma: float
    argmax: Optional[dict]
    table: list
    failures: list

    def to_dict(self):
        return {"sigma": self.sigma, "argmax": self.argmax,
                "table": self.table, "failures": self.failures}


def sigma_estimate(x0_points, r0: float, v_dirs, eps_list,
                   gamma: float, objective, horizon: float = 200.0,
                   rel_tol: float = 1e-9, abs_tol: float = 1e-11,
                   halt: Optional[ConvergenceHalt] = None) -> SigmaResult:
    """Grid-sampled estimate of the trajectory-length supremum.

    Maximises full-run arc length over the finite grid (initial positions)
    x (r0 * unit directions) x (mass values); a finite stand-in for the
    supremum over a continuum, reported as an estimate only.  Failed cells
    are skipped and recorded.  Cells run in a fixed order, so the report is
    deterministic regardless of any parallelism outside.
    """
    if halt is None:
        halt = ConvergenceHalt()
    x0_points = [np.asarray(p, dtype=float) for p in x0_points]
    dirs = [np.zeros(objective.dim)] if r0 == 0.0 else [
        np.asarray(d, dtype=float) / np.linalg.norm(d) for d in v_dirs
    ]
    n = objective.dim
    best = -1.0
    argmax = None
    table = []
    failures = []
    for ip, x0 in enumerate(x0_points):
        for idir, d in enumerate(dirs):
            for eps in eps_list:
                problem = HeavyBallProblem(objective, epsilon=eps,
                                           gamma=gamma, x0=x0, v0=r0 * d)
                cell = {"x0": [float(q) for q in x0], "dir_index": idir,
                        "epsilon": float(eps)}
                try:
                    traj = simulate(problem, t_end=horizon, rel_tol=rel_tol,
                                    abs_tol=abs_tol, halt=halt)
                    length = arc_length(traj, components=np.arange(n))
                except Exception as exc:  # noqa: BLE001 - cell isolation
                    failures.append({**cell, "error": f"{type(exc).__name__}: {exc}"})
                    continue
                cell["length"] = float(length)
                cell["t_end"] = traj.t_end
                cell["stop_reason"] = traj.stop_reason
                table.append(cell)
                if length > best:
                    best = float(length)
                    argmax = dict(cell)
    return SigmaResult(best if best >= 0 else float("nan"), argmax, table,
                       failures)


def default_velocity_directions(count: int = 8) -> list:
    """Evenly spaced planar unit vectors, first one along (1, 1)."""
    base = math.atan2(1.0, 1.0)
    angles = base + 2.0 * math.pi * np.arange(count) / count
    return [np.array([math.cos(a), math.sin(a)]) for a in angles]


@dataclass(frozen=True)
class DiagnosticsOptions:
    horizon: float = 200.0
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    box: tuple = DEFAULT_BOX
    halt: Optional[ConvergenceHalt] = ConvergenceHalt()
    classify_tol: float = 1e-3
    seed: int = 0


@dataclass
class DiagnosticsReport:
    """Aggregated verdicts for one run; all numbers needed to recompute the
    pass flags are stored alongside them."""

    problem_kind: str
    epsilon: Optional[float]
    gamma: float
    stop_reason: str
    t_final: float
    n_nodes: int
    checks: dict = dc_field(default_factory=dict)
    constants: dict = dc_field(default_factory=dict)
    length: float = float("nan")
    limit: Optional[LimitPointResult] = None
    windows: dict = dc_field(default_factory=dict)
    not_applicable: list = dc_field(default_factory=list)

    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def to_dict(self):
        return {
            "schema": "diagnostics-json/1",
            "problem": {
                "kind": self.problem_kind,
                "epsilon": self.epsilon,
                "gamma": self.gamma,
            },
            "run": {
                "stop_reason": self.stop_reason,
                "t_final": self.t_final,
                "n_nodes": self.n_nodes,
            },
            "checks": {k: v.to_dict() for k, v in self.checks.items()},
            "constants": self.constants,
            "length": self.length,
            "limit_point": self.limit.to_dict() if self.limit else None,
            "windows": self.windows,
            "not_applicable": self.not_applicable,
            "all_passed": self.all_passed(),
        }


def _box_suprema(objective, box, grid: int = 201):
    """Grid maxima of f and |grad f| over a box (includes the corners)."""
    box = np.asarray(box, dtype=float)
    axes = [np.linspace(lo, hi, grid) for lo, hi in box]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts = mesh.reshape(-1, box.shape[0])
    f_vals = objective.eval(pts)
    g_vals = np.linalg.norm(objective.grad(pts), axis=-1)
    return float(np.max(f_vals)), float(np.max(g_vals))


def full_diagnostics(problem, options: DiagnosticsOptions = DiagnosticsOptions(),
                     traj: Optional[Trajectory] = None) -> DiagnosticsReport:
    """Integrate once (or reuse ``traj``), then run every applicable check.

    Gradient-flow problems skip the mass-specific certificates (speed bound,
    penalised-energy dissipation, gradient bound); the report lists them as
    not applicable.  Deterministic for a fixed options object.
    """
    is_hb = isinstance(problem, HeavyBallProblem)
    obj = problem.objective
    if traj is None:
        traj = simulate(problem, t_end=options.horizon,
                        rel_tol=options.rel_tol, abs_tol=options.abs_tol,
                        halt=options.halt)
    n = obj.dim
    report = DiagnosticsReport(
        problem_kind="heavy_ball" if is_hb else "gradient_flow",
        epsilon=problem.epsilon if is_hb else None,
        gamma=problem.gamma,
        stop_reason=traj.stop_reason,
        t_final=traj.t_end,
        n_nodes=len(traj.times),
    )
    report.windows["run"] = [0.0, traj.t_end]

    report.checks["dissipation_identity"] = dissipation_check(traj, problem)
    report.checks["energy_monotone"] = energy_monotone_check(traj, problem)

    inf_f = obj.known_inf if obj.known_inf is not None else 0.0
    r0 = float(np.linalg.norm(problem.v0)) if is_hb else 0.0
    eps = problem.epsilon if is_hb else 0.0
    sup_f_x0 = float(obj.eval(problem.x0))
    report.checks["l2_velocity_bound"] = l2_velocity_check(
        traj, eps, problem.gamma, sup_f_x0, inf_f, r0)

    report.length = arc_length(traj, components=np.arange(n))
    report.limit = limit_point(traj, problem,
                               classify_tol=options.classify_tol)

    L = lipschitz_bound_on_box(obj, np.asarray(options.box, dtype=float),
                               eps_bar=1.0, seed=options.seed)
    report.constants["lipschitz_L"] = L
    report.constants["box"] = [list(map(float, b)) for b in options.box]

    if is_hb:
        sup_f, sup_grad = _box_suprema(obj, options.box)
        r = speed_bound(problem.gamma, L, r0, sup_f, inf_f, sup_grad)
        verdict = certify_speed_bound(traj, r, options.box)
        report.constants["speed_bound"] = r
        report.constants["speed_bound_status"] = verdict.status
        report.constants["box_sup_f"] = sup_f
        report.constants["box_sup_grad"] = sup_grad
        report.checks["speed_bound"] = Check(
            "speed_bound", verdict.status != "fail", verdict.to_dict())

        consts = length_lemma_constants(problem.gamma, problem.epsilon, L)
        report.constants["length_lemma"] = {
            "beta": consts.beta, "alpha": consts.alpha,
            "a_diss": consts.a_diss, "b_diss": consts.b_diss,
            "c_grad": consts.c_grad, "L": L,
        }
        report.checks["h_alpha_dissipation"] = h_alpha_dissipation_check(
            traj, problem, consts)
        report.checks["grad_h_bound"] = grad_h_bound_check(
            traj, problem, consts)
    else:
        report.not_applicable = ["speed_bound", "h_alpha_dissipation",
                                 "grad_h_bound"]

    return report


@dataclass(frozen=True)
class SweepResult:
    epsilons: list
    reports: dict
    tracking: list         # rows: {"epsilon", "sup_distance", "T"}
    lengths: dict          # eps -> {"total", "to_100", "tail"}
    sigma: SigmaResult

    def to_dict(self):
        return {
            "schema": "sweep-json/1",
            "epsilons": self.epsilons,
            "per_epsilon": {str(e): r.to_dict() for e, r in self.reports.items()},
            "tracking": self.tracking,
            "lengths": {str(k): v for k, v in self.lengths.items()},
            "sigma": self.sigma.to_dict(),
        }


def epsilon_sweep(init, eps_list: Sequence[float],
                  options: DiagnosticsOptions = DiagnosticsOptions(),
                  tracking_horizon: float = 5.0,
                  n_dirs: int = 8) -> SweepResult:
    """Ladder study over decreasing masses for the benchmark initial data.

    Per mass: a full diagnostics run, the sup tracking distance to the
    limit flow on [0, tracking_horizon] (dedicated fixed-horizon runs), and
    full-run arc lengths with their [100, 200] tail.  Finishes with the
    length-supremum estimate over the direction grid.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")

    gf_traj = simulate(init.gradient_flow(), t_end=tracking_horizon,
                       rel_tol=1e-10, abs_tol=1e-12)
    reports = {}
    tracking = []
    lengths = {}
    for eps in eps_list:
        hb = init.with_epsilon(eps).heavy_ball()
        reports[eps] = full_diagnostics(hb, options)

        tr_fixed = simulate(hb, t_end=tracking_horizon, rel_tol=1e-10,
                            abs_tol=1e-12)
        sup_d = tracking_distance(tr_fixed, gf_traj, tracking_horizon)
        tracking.append({"epsilon": eps, "sup_distance": sup_d,
                         "T": tracking_horizon})

        tr_long = simulate(hb, t_end=options.horizon, rel_tol=options.rel_tol,
                           abs_tol=options.abs_tol, halt=options.halt)
        n = hb.objective.dim
        total = arc_length(tr_long, components=np.arange(n))
        to_100 = arc_length(tr_long, components=np.arange(n),
                            t0=0.0, t1=min(100.0, tr_long.t_end))
        lengths[eps] = {"total": total, "to_100": to_100,
                        "tail": total - to_100}

    sigma = sigma_estimate(
        [init.heavy_ball().x0], float(np.linalg.norm(init.heavy_ball().v0)),
        default_velocity_directions(n_dirs), eps_list, init.gamma,
        init.heavy_ball().objective, horizon=options.horizon,
        rel_tol=options.rel_tol, abs_tol=options.abs_tol, halt=options.halt)

    return SweepResult(eps_list, reports, tracking, lengths, sigma)
