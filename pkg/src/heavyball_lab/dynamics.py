"""Damped second-order dynamics, their first-order limit, and the
closed-form constants behind the speed and trajectory-length certificates.

A heavy-ball problem is the data (epsilon, gamma, x0, v0, objective) of

    epsilon * x'' + gamma * x' + grad f(x) = 0,

integrated as the first-order system d/dt (x, v) = (v, -(gamma v + grad
f(x)) / epsilon).  Its limit as the mass vanishes is the gradient flow
gamma * x' + grad f(x) = 0.  All norms are Euclidean (self-dual), the
canonical instantiation of the fixed-inner-product setting.

Problem objects are immutable; every operation here is a pure function.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InvalidLipschitz
from .objectives import Objective, is_canonical_xy
from .ode import ConvergenceHalt, IntegratorConfig, Trajectory, integrate

__all__ = [
    "HeavyBallProblem",
    "GradientFlowProblem",
    "LengthLemmaConstants",
    "heavy_ball_field",
    "gradient_flow_field",
    "total_energy",
    "lyapunov_H",
    "auxiliary_state",
    "length_lemma_constants",
    "eta_constant",
    "phi_bound",
    "speed_bound",
    "simulate",
]


@dataclass(frozen=True)
class HeavyBallProblem:
    """Mass, friction, initial state, and objective of the damped system."""

    objective: Objective
    epsilon: float
    gamma: float
    x0: np.ndarray
    v0: np.ndarray

    def __post_init__(self):
        if not (self.epsilon > 0 and self.gamma > 0):
            raise ValueError("epsilon and gamma must be positive")
        x0 = np.asarray(self.x0, dtype=float)
        v0 = np.asarray(self.v0, dtype=float)
        if x0.shape != (self.objective.dim,) or v0.shape != x0.shape:
            raise ValueError("x0 and v0 must match the objective dimension")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "v0", v0)

    @property
    def y0(self) -> np.ndarray:
        return np.concatenate([self.x0, self.v0])


@dataclass(frozen=True)
class GradientFlowProblem:
    """Friction, initial position, and objective of the first-order limit."""

    objective: Objective
    gamma: float
    x0: np.ndarray

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (self.objective.dim,):
            raise ValueError("x0 must match the objective dimension")
        object.__setattr__(self, "x0", x0)

    @property
    def y0(self) -> np.ndarray:
        return self.x0


class HeavyBallField:
    """First-order field (x', v') = (v, -(gamma v + grad f(x)) / epsilon)."""

    def __init__(self, problem: HeavyBallProblem):
        self.problem = problem
        self.n = problem.objective.dim
        if is_canonical_xy(problem.objective):
            self.kernel_spec = ("heavy_ball_xy",
                                {"gamma": problem.gamma,
                                 "epsilon": problem.epsilon})

    def __call__(self, t, y):
        n = self.n
        x, v = y[:n], y[n:]
        g = self.problem.objective.grad(x)
        return np.concatenate(
            [v, -(self.problem.gamma * v + g) / self.problem.epsilon]
        )

    def acceleration(self, x, v):
        """x'' from the equation of motion (never from differencing)."""
        g = self.problem.objective.grad(x)
        return -(self.problem.gamma * np.asarray(v) + g) / self.problem.epsilon

    def halt_metrics(self, t, y):
        n = self.n
        g = self.problem.objective.grad(y[:n])
        return float(np.linalg.norm(g)), float(np.linalg.norm(y[n:]))


class GradientFlowField:
    """First-order field x' = -grad f(x) / gamma."""

    def __init__(self, problem: GradientFlowProblem):
        self.problem = problem
        self.n = problem.objective.dim
        if is_canonical_xy(problem.objective):
            self.kernel_spec = ("grad_flow_xy", {"gamma": problem.gamma})

    def __call__(self, t, y):
        return -self.problem.objective.grad(y) / self.problem.gamma

    def halt_metrics(self, t, y):
        gn = float(np.linalg.norm(self.problem.objective.grad(y)))
        return gn, gn / self.problem.gamma


def heavy_ball_field(problem: HeavyBallProblem) -> HeavyBallField:
    return HeavyBallField(problem)


def gradient_flow_field(problem: GradientFlowProblem) -> GradientFlowField:
    return GradientFlowField(problem)


def total_energy(x, v, epsilon: float, objective: Objective):
    """Mechanical energy f(x) + (epsilon/2) |v|^2; nonincreasing along
    solutions, with d/dt energy = -gamma |v|^2."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    return objective.eval(x) + 0.5 * epsilon * np.sum(v * v, axis=-1)


def lyapunov_H(x, y, alpha: float, objective: Objective):
    """Penalised energy f(x) + alpha |x - y|^2 on the doubled space."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x - y
    return objective.eval(x) + alpha * np.sum(d * d, axis=-1)


def auxiliary_state(x, v, beta: float):
    """Shifted state u = x + beta v used by the length certificate."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    return np.asarray(x, dtype=float) + beta * np.asarray(v, dtype=float)


@dataclass(frozen=True)
class LengthLemmaConstants:
    """Closed-form constants of the trajectory-length certificate.

    With beta = min(eps/((1+gamma) L), sqrt(1+gamma/L) - 1) and alpha =
    (gamma beta + eps) / (2 beta^2), the penalised energy H_alpha(u, x)
    dissipates at rate at least a_diss |x'|^2 + b_diss |x''|^2.
    """

    gamma: float
    epsilon: float
    L: float
    beta: float
    alpha: float
    a_diss: float
    b_diss: float
    c_grad: float

    @property
    def coupling(self) -> float:
        """2 alpha beta = gamma + epsilon/beta, the u-x coupling weight."""
        return 2.0 * self.alpha * self.beta


def length_lemma_constants(gamma: float, epsilon: float, L: float
                           ) -> LengthLemmaConstants:
    """Evaluate the certificate constants; requires L >= max(1, epsilon)."""
    if not (gamma > 0 and epsilon > 0):
        raise ValueError("gamma and epsilon must be positive")
    if L < max(1.0, epsilon):
        raise InvalidLipschitz(
            f"L={L} below the max(1, epsilon)={max(1.0, epsilon)} convention"
        )
    beta = min(epsilon / ((1.0 + gamma) * L), np.sqrt(1.0 + gamma / L) - 1.0)
    alpha = (gamma * beta + epsilon) / (2.0 * beta * beta)
    a_diss = gamma - L * beta * (1.0 + beta / 2.0)
    b_diss = beta * (epsilon - L * beta / 2.0)
    c_grad = L * beta + gamma + epsilon + gamma * beta
    consts = LengthLemmaConstants(gamma, epsilon, L, beta, alpha,
                                  a_diss, b_diss, c_grad)
    assert consts.alpha >= 0.25 and consts.a_diss > 0 and consts.b_diss > 0
    return consts


def eta_constant(r: float) -> float:
    """Mass-linear slack 2 r (r + 1) in the length formula's argument."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    return 2.0 * r * (r + 1.0)


def phi_bound(t: float, psi, L: float, gamma: float, m: int) -> float:
    """Length-formula majorant 8 (2 + L + 5 L / gamma) m psi(t / (2 m)).

    ``psi`` is the caller-supplied concave desingularising diffeomorphism
    (never constructed here); ``m`` bounds the number of critical values.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if m < 1:
        raise ValueError("m must be at least 1")
    return 8.0 * (2.0 + L + 5.0 * L / gamma) * m * psi(t / (2.0 * m))


def _speed_bound_small_mass(epsilon, sup_f, inf_f, r0):
    # decreasing in epsilon; valid for trajectories confined to the box
    return np.sqrt((2.0 / epsilon) * (sup_f - inf_f) + r0 * r0)


def _speed_bound_large_mass(epsilon, gamma, L, sup_f, inf_f, r0, sup_grad):
    # increasing in epsilon
    inner = (epsilon * L * L / gamma**2) * (sup_f - inf_f + epsilon * r0 * r0 / 2.0)
    return (np.sqrt(inner + (gamma * r0 + sup_grad) ** 2) + sup_grad) / gamma


def speed_bound(gamma: float, L: float, r0: float, sup_f: float,
                inf_f: float, sup_grad: float,
                epsilon: Optional[float] = None) -> float:
    """Uniform velocity bound for trajectories confined to a box.

    ``sup_f``/``sup_grad`` are suprema of f and |grad f| over the box,
    ``inf_f`` the global infimum, ``r0`` the initial speed, ``L`` a
    Lipschitz constant of the gradient on the box.  With ``epsilon`` given,
    returns the min of the mass-decreasing and mass-increasing branch bounds
    at that mass; otherwise the mass-free bound, the max over all masses of
    that min, located by golden-section search (tol 1e-8) seeded from a
    bracketing scan.
    """
    if sup_f < inf_f:
        raise ValueError("sup_f must be at least inf_f")
    if epsilon is not None:
        return float(min(
            _speed_bound_small_mass(epsilon, sup_f, inf_f, r0),
            _speed_bound_large_mass(epsilon, gamma, L, sup_f, inf_f, r0,
                                    sup_grad),
        ))

    if sup_f == inf_f:
        # branch A is constant r0 and branch B starts at r0 + 2 sup_grad/gamma
        return float(r0)

    def neg_min(log_eps):
        e = np.exp(log_eps)
        return -min(
            _speed_bound_small_mass(e, sup_f, inf_f, r0),
            _speed_bound_large_mass(e, gamma, L, sup_f, inf_f, r0, sup_grad),
        )

    grid = np.linspace(np.log(1e-12), np.log(1e12), 300)
    vals = np.array([neg_min(g) for g in grid])
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(neg_min, bracket=(lo, 0.5 * (lo + hi), hi),
                          method="golden", options={"xtol": 1e-8})
    return float(-res.fun)


def simulate(problem, t_end: float, rel_tol: float = 1e-9,
             abs_tol: float = 1e-11, max_step: Optional[float] = None,
             halt: Optional[ConvergenceHalt] = None,
             forced_times=(), initial_step: Optional[float] = None,
             max_steps: int = 5_000_000) -> Trajectory:
    """Integrate a heavy-ball or gradient-flow problem.

    Heavy-ball runs cap the step at epsilon/gamma by default, which keeps
    the fast transient near t = 0 resolved; pass ``max_step`` to override.
    """
    if isinstance(problem, HeavyBallProblem):
        fld = heavy_ball_field(problem)
        if max_step is None:
            max_step = problem.epsilon / problem.gamma
    elif isinstance(problem, GradientFlowProblem):
        fld = gradient_flow_field(problem)
    else:
        raise TypeError(f"unsupported problem type {type(problem)!r}")
    cfg = IntegratorConfig(
        t_end=t_end, rel_tol=rel_tol, abs_tol=abs_tol, max_step=max_step,
        initial_step=initial_step, max_steps=max_steps,
        forced_times=tuple(forced_times), halt=halt,
    )
    return integrate(fld, problem.y0, cfg)
