"""Adaptive explicit integration with dense output, events, and arc length.

The integrator is an embedded Dormand-Prince 5(4) pair with a PI step
controller and a quartic dense-output interpolant per accepted step.  Two
drivers implement the identical scheme: a compiled kernel for the built-in
planar fields (see :mod:`heavyball_lab._core`) and a pure-Python loop for
arbitrary callables.  :func:`integrate` picks between them per field.

Trajectories are immutable after construction and safe to share across
threads; all queries (dense evaluation, events, quadrature) are read-only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _backend
from .errors import (
    MaxStepsExceeded,
    NonFiniteState,
    OutOfRange,
    StepUnderflow,
)

__all__ = [
    "IntegratorConfig",
    "ConvergenceHalt",
    "Trajectory",
    "EventQuery",
    "integrate",
    "dense_eval",
    "detect_event",
    "arc_length",
    "quad_dense",
]

# Dormand-Prince tableau (propagating order 5, embedded order 4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200,
               22 / 525, -1 / 40])
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608,
     -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933,
     87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304,
     -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408,
     701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883,
     -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

# PI controller constants, shared verbatim with the compiled kernel
_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_PI_ALPHA = 0.17
_PI_BETA = 0.04
_ERR_FLOOR = 1e-4
_EPS = float(np.finfo(np.float64).eps)

# Gauss-Kronrod 15/7 rule on [-1, 1] for arc-length quadrature
_XGK = np.array([
    -0.9914553711208126, -0.9491079123427585, -0.8648644233597691,
    -0.7415311855993945, -0.5860872354676911, -0.4058451513773972,
    -0.2077849550078985, 0.0, 0.2077849550078985, 0.4058451513773972,
    0.5860872354676911, 0.7415311855993945, 0.8648644233597691,
    0.9491079123427585, 0.9914553711208126,
])
_WGK = np.array([
    0.0229353220105292, 0.0630920926299786, 0.1047900103222502,
    0.1406532597155259, 0.1690047266392679, 0.1903505780647854,
    0.2044329400752989, 0.2094821410847278, 0.2044329400752989,
    0.1903505780647854, 0.1690047266392679, 0.1406532597155259,
    0.1047900103222502, 0.0630920926299786, 0.0229353220105292,
])
_WG = np.array([
    0.1294849661688697, 0.2797053914892767, 0.3818300505051189,
    0.4179591836734694, 0.3818300505051189, 0.2797053914892767,
    0.1294849661688697,
])


@dataclass(frozen=True)
class ConvergenceHalt:
    """Early-stop rule: gradient and velocity norms below tolerance,
    sustained for ``dwell`` time units (checked at accepted nodes).

    Requires the field to expose ``halt_metrics(t, y) -> (grad_norm,
    vel_norm)``; the built-in dynamics fields do.
    """

    grad_tol: float = 1e-9
    vel_tol: float = 1e-9
    dwell: float = 1.0


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances, horizon, and optional stopping data for one integration."""

    t_end: float
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    max_step: Optional[float] = None
    initial_step: Optional[float] = None
    max_steps: int = 5_000_000
    forced_times: tuple = ()
    halt: Optional[object] = None  # ConvergenceHalt or callable(t, y) -> bool
    halt_dwell: float = 1.0

    def __post_init__(self):
        if not (self.t_end > 0):
            raise ValueError("t_end must be positive")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_step is not None and not (self.max_step > 0):
            raise ValueError("max_step must be positive when given")
        if self.initial_step is not None and not (self.initial_step > 0):
            raise ValueError("initial_step must be positive when given")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        ft = tuple(float(t) for t in self.forced_times)
        if any(not (0.0 < t < self.t_end) for t in ft):
            raise ValueError("forced_times must lie strictly inside (0, t_end)")
        if list(ft) != sorted(set(ft)):
            raise ValueError("forced_times must be sorted and distinct")
        object.__setattr__(self, "forced_times", ft)


class Trajectory:
    """Dense-output solution of one integration.

    ``times`` is strictly increasing with ``times[0] == 0``; ``states[i]``
    and ``derivs[i]`` hold the state and the field value at ``times[i]``.
    ``qcoef[i]`` holds the quartic interpolant coefficients of segment
    ``[times[i], times[i+1]]``.  ``stop_reason`` is ``"t_end"`` or
    ``"converged"``.
    """

    __slots__ = ("times", "states", "derivs", "qcoef", "field", "stop_reason")

    def __init__(self, times, states, derivs, qcoef, field=None,
                 stop_reason="t_end"):
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=float)
        self.derivs = np.asarray(derivs, dtype=float)
        self.qcoef = np.asarray(qcoef, dtype=float)
        self.field = field
        self.stop_reason = stop_reason
        self.times.setflags(write=False)
        self.states.setflags(write=False)
        self.derivs.setflags(write=False)
        self.qcoef.setflags(write=False)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def _locate(self, t):
        """Map query times to (segment index, theta); raises OutOfRange."""
        t = np.asarray(t, dtype=float)
        slop = 1e-12 * max(1.0, self.t_end)
        if np.any(t < -slop) or np.any(t > self.t_end + slop):
            bad = np.atleast_1d(t)
            bad = bad[(bad < -slop) | (bad > self.t_end + slop)]
            raise OutOfRange(
                f"time query outside [0, {self.t_end}]: {bad[:3]}"
            )
        t = np.clip(t, 0.0, self.t_end)
        idx = np.searchsorted(self.times, t, side="right") - 1
        idx = np.clip(idx, 0, len(self.times) - 2)
        h = self.times[idx + 1] - self.times[idx]
        theta = (t - self.times[idx]) / h
        return idx, theta, h

    def eval(self, t):
        """Interpolated state at time(s) ``t``; exact at stored nodes."""
        idx, theta, h = self._locate(t)
        powers = np.stack([theta, theta**2, theta**3, theta**4], axis=-1)
        return self.states[idx] + h[..., None] * np.einsum(
            "...dj,...j->...d", self.qcoef[idx], powers
        )

    def derivative(self, t):
        """Time derivative of the interpolant at time(s) ``t``."""
        idx, theta, _ = self._locate(t)
        dpow = np.stack(
            [np.ones_like(theta), 2 * theta, 3 * theta**2, 4 * theta**3],
            axis=-1,
        )
        return np.einsum("...dj,...j->...d", self.qcoef[idx], dpow)


def _error_norm(err, y0, y1, rtol, atol):
    sc = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / sc) ** 2)))


def _initial_step(f, t0, y0, f0, t_end, max_step, rtol, atol):
    sc = atol + rtol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / sc) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / sc) ** 2)))
    h0 = 0.01 * d0 / d1 if (d0 >= 1e-5 and d1 >= 1e-5) else 1e-6
    h0 = min(h0, max_step, t_end)
    f1 = np.asarray(f(t0 + h0, y0 + h0 * f0), dtype=float)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / sc) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, max_step, t_end)


def _integrate_pure(f, y0, cfg: IntegratorConfig, halt_metrics=None):
    y = np.array(y0, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("initial state must be finite")
    dim = y.size
    t_end = float(cfg.t_end)
    max_step = cfg.max_step if cfg.max_step is not None else np.inf
    rtol, atol = cfg.rel_tol, cfg.abs_tol

    halt = cfg.halt
    if isinstance(halt, ConvergenceHalt) and halt_metrics is None:
        raise ValueError("ConvergenceHalt requires a field with halt_metrics")

    def halt_hit(t, y):
        if halt is None:
            return False
        if isinstance(halt, ConvergenceHalt):
            gn, vn = halt_metrics(t, y)
            return gn <= halt.grad_tol and vn <= halt.vel_tol
        return bool(halt(t, y))

    dwell = halt.dwell if isinstance(halt, ConvergenceHalt) else cfg.halt_dwell

    k = np.empty((7, dim))
    k[0] = f(0.0, y)
    if not np.all(np.isfinite(k[0])):
        raise NonFiniteState("field is non-finite at the initial state")

    times = [0.0]
    states = [y.copy()]
    derivs = [k[0].copy()]
    qcoefs = []

    forced = list(cfg.forced_times)
    i_forced = 0
    hold_start = 0.0 if halt_hit(0.0, y) else -1.0
    stop_reason = "t_end"

    if cfg.initial_step is not None:
        h = min(cfg.initial_step, max_step, t_end)
    else:
        h = _initial_step(f, 0.0, y, k[0], t_end, max_step, rtol, atol)

    t = 0.0
    err_prev = _ERR_FLOOR
    rejected = False
    attempts = 0
    while t < t_end:
        if attempts >= cfg.max_steps:
            raise MaxStepsExceeded(
                f"exceeded {cfg.max_steps} step attempts at t={t:.6g}"
            )
        attempts += 1
        if h < 10.0 * _EPS * max(abs(t), 1.0):
            raise StepUnderflow(f"step size underflow at t={t:.6g} (h={h:.3e})")
        h = min(h, max_step)

        t_stop = forced[i_forced] if i_forced < len(forced) else t_end
        if t + h >= t_stop:
            h = t_stop - t
            t_next = t_stop
        else:
            t_next = t + h

        for s in range(1, 6):
            k[s] = f(t + _C[s] * h, y + h * (k[:s].T @ _A[s - 1]))
        y_new = y + h * (k[:6].T @ _B)
        k[6] = f(t_next, y_new)
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(k[6]))):
            raise NonFiniteState(f"non-finite state near t={t_next:.6g}")
        err = _error_norm(h * (k.T @ _E), y, y_new, rtol, atol)

        if err <= 1.0:
            qcoefs.append(k.T @ _P)
            times.append(t_next)
            states.append(y_new.copy())
            derivs.append(k[6].copy())

            if err == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = _SAFETY * err**-_PI_ALPHA * err_prev**_PI_BETA
                factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
            if rejected:
                factor = min(1.0, factor)
            h *= factor
            rejected = False
            err_prev = max(err, _ERR_FLOOR)

            t = t_next
            y = y_new
            k[0] = k[6]
            if i_forced < len(forced) and t == forced[i_forced]:
                i_forced += 1

            if halt_hit(t, y):
                if hold_start < 0.0:
                    hold_start = t
                elif t - hold_start >= dwell:
                    stop_reason = "converged"
                    break
            else:
                hold_start = -1.0
        else:
            h *= min(1.0, max(_MIN_FACTOR, _SAFETY * err**-_PI_ALPHA))
            rejected = True

    return Trajectory(
        np.array(times), np.array(states), np.array(derivs),
        np.array(qcoefs) if qcoefs else np.empty((0, dim, 4)),
        field=f, stop_reason=stop_reason,
    )


def _kernel_eligible(field, cfg: IntegratorConfig) -> bool:
    spec = getattr(field, "kernel_spec", None)
    if spec is None or not _backend.compiled_available():
        return False
    return cfg.halt is None or isinstance(cfg.halt, ConvergenceHalt)


def integrate(field, y0, config: IntegratorConfig) -> Trajectory:
    """Solve ``dy/dt = field(t, y)`` from ``y0`` on ``[0, config.t_end]``.

    The field must be locally Lipschitz on the region visited (caller
    contract).  Local error per step is controlled by ``(rel_tol, abs_tol)``.
    Raises :class:`StepUnderflow`, :class:`MaxStepsExceeded`, or
    :class:`NonFiniteState` on failure.
    """
    if not _kernel_eligible(field, config):
        metrics = getattr(field, "halt_metrics", None)
        return _integrate_pure(field, y0, config, halt_metrics=metrics)

    kind, params = field.kernel_spec
    gamma = params["gamma"]
    epsilon = params.get("epsilon", 1.0)
    halt = config.halt
    t, y, d, q, code = _backend.run_kernel(
        _backend.kernel_code(kind), gamma, epsilon,
        np.ascontiguousarray(y0, dtype=float),
        float(config.t_end), config.rel_tol, config.abs_tol,
        config.max_step if config.max_step is not None else np.inf,
        config.initial_step if config.initial_step is not None else -1.0,
        config.max_steps,
        np.asarray(config.forced_times, dtype=float),
        1 if halt is not None else 0,
        halt.grad_tol if halt is not None else 0.0,
        halt.vel_tol if halt is not None else 0.0,
        halt.dwell if halt is not None else 0.0,
    )
    if code == -1:
        raise StepUnderflow(f"step size underflow at t={t[-1]:.6g}")
    if code == -2:
        raise MaxStepsExceeded(
            f"exceeded {config.max_steps} step attempts at t={t[-1]:.6g}"
        )
    if code == -3:
        raise NonFiniteState(f"non-finite state near t={t[-1]:.6g}")
    return Trajectory(t, y, d, q, field=field,
                      stop_reason="converged" if code == 1 else "t_end")


def dense_eval(traj: Trajectory, t):
    """Interpolated state at time ``t`` (scalar or array)."""
    return traj.eval(t)


@dataclass(frozen=True)
class EventQuery:
    """Zero crossing of ``fn(t, state)`` along a trajectory.

    ``direction``: "rising" (- to +), "falling" (+ to -), or "any".
    ``window`` restricts the search; default is the whole span.  The event
    function must be continuous along the trajectory (caller contract).
    """

    fn: Callable[[float, np.ndarray], float]
    direction: str = "any"
    window: Optional[tuple] = None

    def __post_init__(self):
        if self.direction not in ("rising", "falling", "any"):
            raise ValueError("direction must be rising, falling, or any")


def _matches(direction, ga, gb):
    if direction == "rising":
        return ga < 0.0 < gb
    if direction == "falling":
        return ga > 0.0 > gb
    return ga * gb < 0.0


def _refine_root(traj, fn, ta, tb, ga, gb, t_scale):
    """Bisection to a narrow bracket, then secant polish on dense output."""
    width_tol = 1e-12 * t_scale
    g_tol = 1e-10
    for _ in range(80):
        if tb - ta <= width_tol:
            break
        tm = 0.5 * (ta + tb)
        gm = fn(tm, traj.eval(tm))
        if gm == 0.0:
            return tm
        if (ga < 0.0) != (gm < 0.0):
            tb, gb = tm, gm
        else:
            ta, ga = tm, gm
        # secant candidate, kept only if it stays inside the bracket
        if gb != ga:
            ts = tb - gb * (tb - ta) / (gb - ga)
            if ta < ts < tb:
                gs = fn(ts, traj.eval(ts))
                if abs(gs) <= g_tol and tb - ta <= 1e3 * width_tol:
                    return ts
                if gs == 0.0:
                    return ts
                if (ga < 0.0) != (gs < 0.0):
                    tb, gb = ts, gs
                else:
                    ta, ga = ts, gs
    return ta if abs(ga) <= abs(gb) else tb


def detect_event(traj: Trajectory, q: EventQuery) -> Optional[float]:
    """Earliest zero crossing of ``q.fn`` in the requested direction.

    Scans the stored nodes for sign changes, then refines on dense output.
    Returns ``None`` when no crossing exists (a valid result).
    """
    lo, hi = q.window if q.window is not None else (0.0, traj.t_end)
    lo, hi = max(0.0, lo), min(traj.t_end, hi)
    if hi <= lo:
        return None
    ts = traj.times
    i0 = int(np.searchsorted(ts, lo, side="left"))
    i1 = int(np.searchsorted(ts, hi, side="right"))
    samples = [(lo, traj.eval(lo))] if lo not in ts[i0:i1] else []
    samples += [(float(ts[i]), traj.states[i]) for i in range(i0, i1)]
    if hi not in ts[i0:i1]:
        samples.append((hi, traj.eval(hi)))

    g_prev = None
    t_prev = None
    for t_i, y_i in samples:
        g_i = float(q.fn(t_i, y_i))
        if g_prev is not None:
            if g_prev == 0.0:
                if (q.direction == "rising" and g_i > 0.0) or (
                    q.direction == "falling" and g_i < 0.0
                ) or (q.direction == "any" and g_i != 0.0):
                    return t_prev
            elif _matches(q.direction, g_prev, g_i):
                return _refine_root(traj, q.fn, t_prev, t_i, g_prev, g_i,
                                    traj.t_end)
        g_prev, t_prev = g_i, t_i
    if g_prev == 0.0 and q.direction == "any":
        return t_prev
    return None


def quad_dense(traj: Trajectory, values, t0: float, t1: float,
               rel_tol: float = 1e-8) -> float:
    """Adaptive Gauss-Kronrod quadrature of a dense-output functional.

    ``values(ts)`` must return the integrand at an array of times.  The
    interval is pre-split at the trajectory's step boundaries (where the
    interpolant changes polynomial), then each piece is refined until the
    Kronrod-Gauss disagreement is below ``rel_tol`` of the local value.
    """
    nodes = traj.times
    cut = nodes[(nodes > t0) & (nodes < t1)]
    edges = np.concatenate([[t0], cut, [t1]])
    stack = [(a, b, 0) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    pieces = []
    while stack:
        batch = stack
        stack = []
        a = np.array([p[0] for p in batch])
        b = np.array([p[1] for p in batch])
        half = 0.5 * (b - a)
        pts = a[:, None] + half[:, None] * (_XGK[None, :] + 1.0)
        vals = values(pts.ravel()).reshape(len(batch), 15)
        k15 = half * (vals @ _WGK)
        g7 = half * (vals[:, 1::2] @ _WG)
        err = np.abs(k15 - g7)
        for i, (ai, bi, d) in enumerate(batch):
            if err[i] <= rel_tol * (abs(k15[i]) + 1e-300) or d >= 14:
                pieces.append(k15[i])
            else:
                m = 0.5 * (ai + bi)
                stack.append((ai, m, d + 1))
                stack.append((m, bi, d + 1))
    return float(np.sum(pieces)) if pieces else 0.0


def arc_length(traj: Trajectory, components=None, t0: float = 0.0,
               t1: Optional[float] = None) -> float:
    """Length of the selected state components over ``[t0, t1]``.

    Integrates the norm of the interpolant's time derivative with adaptive
    Gauss-Kronrod quadrature at relative accuracy 1e-8; additive over
    adjacent intervals.  ``components`` selects the position block (default:
    all components).
    """
    t1 = traj.t_end if t1 is None else t1
    slop = 1e-12 * max(1.0, traj.t_end)
    if t0 < -slop or t1 > traj.t_end + slop or t1 < t0:
        raise OutOfRange(f"[{t0}, {t1}] not within [0, {traj.t_end}]")
    t0, t1 = max(t0, 0.0), min(t1, traj.t_end)
    if t1 == t0:
        return 0.0
    comps = np.arange(traj.dim) if components is None else np.asarray(components)

    def speed(ts):
        d = traj.derivative(ts)[..., comps]
        return np.sqrt(np.sum(d * d, axis=-1))

    return quad_dense(traj, speed, t0, t1, 1e-8)
