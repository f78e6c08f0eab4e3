"""The planar benchmark: closed-form limit flow, sum/difference change of
variables, and the exponential envelope bounds with their validity windows.

For the objective f(x, y) = (x*y - 1)^2 started at (a, -a) with velocity
(b, b), the gradient flow stays on the line x + y = 0 and converges to the
origin, while the damped second-order system escapes to the hyperbola
x*y = 1 for every sufficiently small mass.  The envelope machinery below
certifies the escape at desk scale: in the variables u = x + y, v = x - y,
u is squeezed upward and v downward by explicit exponentials, valid while
x*y stays below 1/2 and u', v keep their initial signs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .dynamics import GradientFlowProblem, HeavyBallProblem
from .errors import EmptyWindow, EpsilonTooLarge
from .objectives import xy_objective
from .ode import EventQuery, Trajectory, detect_event

__all__ = [
    "ExampleInit",
    "EnvelopeSet",
    "ClaimVerdict",
    "ClaimsReport",
    "degenerate_closed_form",
    "uv_transform",
    "uv_inverse",
    "envelope_constants",
    "claims_check",
    "crossing_time",
    "conserved_quantity",
]


@dataclass(frozen=True)
class ExampleInit:
    """Benchmark initial data: x0 = (a, -a), v0 = (b, b), plus (gamma,
    epsilon).  The envelope constants are real only below the mass
    threshold gamma^2 / (8 a^2 + 8), which :meth:`epsilon_max` exposes."""

    a: float = 1.0
    b: float = 0.1
    gamma: float = 0.5
    epsilon: float = 0.01

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("a and b must be positive")
        if not (self.gamma > 0 and self.epsilon > 0):
            raise ValueError("gamma and epsilon must be positive")

    @property
    def epsilon_max(self) -> float:
        return self.gamma**2 / (8.0 * self.a**2 + 8.0)

    def heavy_ball(self) -> HeavyBallProblem:
        return HeavyBallProblem(
            xy_objective(), epsilon=self.epsilon, gamma=self.gamma,
            x0=np.array([self.a, -self.a]), v0=np.array([self.b, self.b]),
        )

    def gradient_flow(self) -> GradientFlowProblem:
        return GradientFlowProblem(
            xy_objective(), gamma=self.gamma,
            x0=np.array([self.a, -self.a]),
        )

    def with_epsilon(self, epsilon: float) -> "ExampleInit":
        return replace(self, epsilon=epsilon)


def degenerate_closed_form(a: float, gamma: float, t):
    """Exact gradient-flow solution from (a, -a): x(t) = c / sqrt(exp(4t /
    gamma) - c^2) with c = a / sqrt(1 + a^2), and y = -x.

    c < 1, so the radicand is positive for all t >= 0; the solution decays
    to the origin along the anti-diagonal.
    """
    if not (a > 0 and gamma > 0):
        raise ValueError("a and gamma must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    c = a / math.sqrt(1.0 + a * a)
    x = c / np.sqrt(np.exp(4.0 * t / gamma) - c * c)
    return np.stack([x, -x], axis=-1)


def uv_transform(state):
    """(x, y, x', y') -> (u, v, u', v') with u = x + y, v = x - y."""
    s = np.asarray(state, dtype=float)
    x, y, dx, dy = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    return np.stack([x + y, x - y, dx + dy, dx - dy], axis=-1)


def uv_inverse(uv_state):
    """Inverse of :func:`uv_transform`."""
    s = np.asarray(uv_state, dtype=float)
    u, v, du, dv = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    return 0.5 * np.stack([u + v, u - v, du + dv, du - dv], axis=-1)


@dataclass(frozen=True)
class EnvelopeSet:
    """Envelope amplitudes and rates for the three exponential bounds.

    ``lower_u`` squeezes u from below on [0, T1); ``upper_v`` and
    ``lower_v`` sandwich v on [0, T2).  ``valid_until`` is filled in once a
    trajectory fixes the actual windows (min of the x*y = 1/2 crossing and
    the sign-change times T1, T2).
    """

    c1: float
    c2: float
    c3: float
    r1: float
    r2: float
    r3: float
    r4: float
    r5: float
    r6: float
    a: float
    b: float
    valid_until: Optional[float] = None

    def lower_u(self, t):
        t = np.asarray(t, dtype=float)
        return self.c1 * (np.exp(self.r1 * t) - np.exp(self.r2 * t))

    def upper_v(self, t):
        t = np.asarray(t, dtype=float)
        return (2 * self.a + self.c2) * np.exp(self.r3 * t) \
            - self.c2 * np.exp(self.r4 * t)

    def lower_v(self, t):
        t = np.asarray(t, dtype=float)
        return (2 * self.a + self.c3) * np.exp(self.r5 * t) \
            - self.c3 * np.exp(self.r6 * t)


def envelope_constants(init: ExampleInit) -> EnvelopeSet:
    """Evaluate the nine envelope constants for admissible initial data.

    Raises :class:`EpsilonTooLarge` when the mass reaches gamma^2 /
    (8 a^2 + 8), where the discriminant of the v-comparison equation
    vanishes.
    """
    a, b, g, e = init.a, init.b, init.gamma, init.epsilon
    if e >= init.epsilon_max:
        raise EpsilonTooLarge(
            f"epsilon={e:g} not below gamma^2/(8a^2+8)={init.epsilon_max:g}"
        )
    s1 = math.sqrt(g * g + 4.0 * e)
    s2 = math.sqrt(g * g - 4.0 * e)
    s3 = math.sqrt(g * g - 8.0 * (a * a + 1.0) * e)
    env = EnvelopeSet(
        c1=2.0 * b * e / s1,
        r1=2.0 / (s1 + g),
        r2=-2.0 / (s1 - g),
        c2=a * g / s2 - a,
        r3=-2.0 / (g + s2),
        r4=-2.0 / (g - s2),
        c3=a * g / s3 - a,
        r5=-4.0 * (a * a + 1.0) / (g + s3),
        r6=-4.0 * (a * a + 1.0) / (g - s3),
        a=a,
        b=b,
    )
    assert env.r1 > 0 > env.r2
    assert env.r3 > env.r4 and env.r5 > env.r6 and env.r3 < 0 and env.r5 < 0
    return env


def crossing_time(traj: Trajectory, threshold: float = 0.5
                  ) -> Optional[float]:
    """Earliest time with x(t) * y(t) = threshold (rising), or None.

    On the benchmark runs this is the time the product leaves the region
    where the envelope hypotheses hold; absence is a valid result (the
    limit flow keeps x*y negative forever).
    """
    return detect_event(
        traj,
        EventQuery(fn=lambda t, y: y[0] * y[1] - threshold,
                   direction="rising"),
    )


def conserved_quantity(x, y):
    """x^2 - y^2, constant along every gradient-flow orbit of the
    benchmark objective (not along the damped second-order runs)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return x * x - y * y


@dataclass(frozen=True)
class ClaimVerdict:
    name: str
    passed: bool
    margin: float  # worst signed slack; negative means violated by |margin|
    first_violation: Optional[float]


@dataclass(frozen=True)
class ClaimsReport:
    verdicts: dict
    window_end: float
    t_cross: Optional[float]
    t_u_turn: Optional[float]   # first u' = 0 (not reached on the window -> None)
    t_v_zero: Optional[float]   # first v = 0
    sample_step: float

    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts.values())


def _verdict(name, ts, slack_values, tol) -> ClaimVerdict:
    worst_i = int(np.argmin(slack_values))
    margin = float(slack_values[worst_i])
    passed = margin >= -tol
    first_bad = None
    if not passed:
        bad = np.where(slack_values < -tol)[0]
        first_bad = float(ts[bad[0]])
    return ClaimVerdict(name, passed, margin, first_bad)


def claims_check(traj: Trajectory, init: ExampleInit, env: EnvelopeSet,
                 tol: float = 1e-6, sample_step: float = 1e-3
                 ) -> ClaimsReport:
    """Check the envelope inequalities on their hypothesis window.

    The window is [0, min(crossing time, T1, T2, trajectory end)], with T1
    (first u' = 0) applying to the u bound and T2 (first v = 0) to the v
    bounds; each inequality is sampled on dense output at ``sample_step``
    and must hold up to additive slack ``tol``.  Also reports the two
    monotonicity facts that feed the escape argument: x*y nondecreasing and
    u' nonnegative on the window (slack 1e-9).
    """
    t_cross = crossing_time(traj, 0.5)
    t1 = detect_event(
        traj, EventQuery(fn=lambda t, y: y[2] + y[3], direction="falling"))
    t2 = detect_event(
        traj, EventQuery(fn=lambda t, y: y[0] - y[1], direction="falling"))

    end_u = min(x for x in (t_cross, t1, traj.t_end) if x is not None)
    end_v = min(x for x in (t_cross, t2, traj.t_end) if x is not None)
    window_end = min(end_u, end_v)
    if window_end <= 0.0:
        raise EmptyWindow("hypothesis window has zero length")

    def sample(end):
        n = max(2, int(math.ceil(end / sample_step)) + 1)
        ts = np.linspace(0.0, end, n)
        uv = uv_transform(traj.eval(ts))
        return ts, uv

    ts_u, uv_u = sample(end_u)
    ts_v, uv_v = sample(end_v)

    verdicts = {
        "lower_u": _verdict("lower_u", ts_u,
                            uv_u[:, 0] - env.lower_u(ts_u), tol),
        "v_decreasing": _verdict("v_decreasing", ts_v, -uv_v[:, 3], tol),
        "upper_v": _verdict("upper_v", ts_v,
                            env.upper_v(ts_v) - uv_v[:, 1], tol),
        "lower_v": _verdict("lower_v", ts_v,
                            uv_v[:, 1] - env.lower_v(ts_v), tol),
    }

    # monotonicity side conditions (slack 1e-9)
    xy = 0.25 * (uv_v[:, 0] ** 2 - uv_v[:, 1] ** 2)
    verdicts["xy_nondecreasing"] = _verdict(
        "xy_nondecreasing", ts_v[1:], np.diff(xy), 1e-9)
    verdicts["u_rate_nonnegative"] = _verdict(
        "u_rate_nonnegative", ts_u, uv_u[:, 2], 1e-9)

    return ClaimsReport(
        verdicts=verdicts, window_end=window_end, t_cross=t_cross,
        t_u_turn=t1, t_v_zero=t2, sample_step=sample_step,
    )
