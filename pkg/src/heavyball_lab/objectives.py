"""Objective registry: analytic gradients, Lipschitz bounds, gradient checks.

Objectives are immutable bundles of callables, safe for concurrent use.
``eval``/``grad`` broadcast over leading axes (points live on the last
axis).  Definability of an objective in a tame structure is a documented
assumption, not something checked at runtime.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import UnsupportedObjective

__all__ = [
    "Objective",
    "CriticalPointKind",
    "xy_objective",
    "constant_objective",
    "get_objective",
    "register_objective",
    "classify_critical_point",
    "lipschitz_bound_on_box",
    "check_gradient",
]

Box = np.ndarray  # shape (dim, 2): [lo, hi] per coordinate


@dataclass(frozen=True)
class Objective:
    """A smooth function with its gradient and optional metadata.

    ``hessian_bound(box)``, when present, returns an analytic upper bound on
    the spectral norm of the Hessian over an axis-aligned box and is used by
    :func:`lipschitz_bound_on_box` instead of sampling.
    """

    name: str
    dim: int
    eval: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    known_inf: Optional[float] = None
    critical_description: Optional[str] = None
    hessian_bound: Optional[Callable[[Box], float]] = None
    assumptions: str = ""


class CriticalPointKind(enum.Enum):
    ORIGIN = "origin"
    HYPERBOLA = "hyperbola"
    NOT_CRITICAL = "not_critical"


def _xy_eval(p):
    p = np.asarray(p, dtype=float)
    return (p[..., 0] * p[..., 1] - 1.0) ** 2


def _xy_grad(p):
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    s = 2.0 * (x * y - 1.0)
    return np.stack([y * s, x * s], axis=-1)


def _xy_hessian_bound(box):
    # Hessian rows are (2y^2, 4xy-2) and (4xy-2, 2x^2); the row-sum bound is
    # exact on boxes because xy is bilinear (extremes at corners).
    (xl, xu), (yl, yu) = box
    corners = [xl * yl, xl * yu, xu * yl, xu * yu]
    off = max(abs(4.0 * min(corners) - 2.0), abs(4.0 * max(corners) - 2.0))
    row_x = 2.0 * max(yl * yl, yu * yu) + off
    row_y = 2.0 * max(xl * xl, xu * xu) + off
    return max(row_x, row_y)


def xy_objective() -> Objective:
    """The planar benchmark objective f(x, y) = (x*y - 1)^2.

    Critical points are the origin plus the hyperbola x*y = 1; the infimum
    0 is attained on the hyperbola only.
    """
    return Objective(
        name="xy",
        dim=2,
        eval=_xy_eval,
        grad=_xy_grad,
        known_inf=0.0,
        critical_description="{(0,0)} union {xy = 1}; critical values {1, 0}",
        hessian_bound=_xy_hessian_bound,
        assumptions="semi-algebraic, C^infinity, lower bounded",
    )


def is_canonical_xy(obj: Objective) -> bool:
    """True only for objectives built by :func:`xy_objective` itself.

    Guards the compiled fast path: a look-alike (same name, different
    callables) must never be integrated with the built-in kernel gradient.
    """
    return obj.eval is _xy_eval and obj.grad is _xy_grad


def constant_objective(value: float = 0.0, dim: int = 2) -> Objective:
    """A constant function; useful as a stationary-problem fixture."""
    return Objective(
        name="constant",
        dim=dim,
        eval=lambda p: np.broadcast_to(
            float(value), np.asarray(p, dtype=float).shape[:-1]
        ).copy(),
        grad=lambda p: np.zeros_like(np.asarray(p, dtype=float)),
        known_inf=value,
        hessian_bound=lambda box: 0.0,
        assumptions="constant",
    )


_REGISTRY: dict = {}


def register_objective(name: str, factory: Callable[[], Objective]) -> None:
    _REGISTRY[name] = factory


def get_objective(name: str) -> Objective:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise UnsupportedObjective(
            f"unknown objective {name!r}; registered: {sorted(_REGISTRY)}"
        ) from None


register_objective("xy", xy_objective)
register_objective("constant", constant_objective)


def classify_critical_point(obj: Objective, p, tol: float = 1e-3
                            ) -> CriticalPointKind:
    """Classify a candidate limit point of the xy objective.

    Origin wins when both tests match (impossible for tol < 1/2).  Raises
    :class:`UnsupportedObjective` for anything but the xy objective, whose
    critical set is the only one this knows.
    """
    if obj.name != "xy":
        raise UnsupportedObjective(
            "critical-point classification is specific to the xy objective"
        )
    p = np.asarray(p, dtype=float)
    if np.linalg.norm(p) <= tol:
        return CriticalPointKind.ORIGIN
    if abs(p[0] * p[1] - 1.0) <= tol:
        return CriticalPointKind.HYPERBOLA
    return CriticalPointKind.NOT_CRITICAL


def _sampled_hessian_norm(obj: Objective, box, samples, seed):
    rng = np.random.default_rng(seed)
    lo, hi = box[:, 0], box[:, 1]
    pts = lo + (hi - lo) * rng.random((samples, obj.dim))
    width = float(np.max(hi - lo))
    h = max(1e-7, 1e-5 * width)
    worst = 0.0
    for p in pts:
        H = np.empty((obj.dim, obj.dim))
        for j in range(obj.dim):
            e = np.zeros(obj.dim)
            e[j] = h
            H[:, j] = (obj.grad(p + e) - obj.grad(p - e)) / (2 * h)
        worst = max(worst, float(np.linalg.norm(H, 2)))
    return worst


def lipschitz_bound_on_box(obj: Objective, box, eps_bar: float = 1.0,
                           samples: int = 10_000, seed: int = 0) -> float:
    """Upper bound on the gradient's Lipschitz constant over a box.

    Uses the objective's analytic Hessian bound when present, otherwise the
    maximum spectral norm over ``samples`` random points times a 1.25 safety
    factor.  The result is clamped below by max(1, eps_bar), the convention
    the trajectory-length constants require.
    """
    box = np.asarray(box, dtype=float)
    if box.shape != (obj.dim, 2) or np.any(box[:, 1] < box[:, 0]):
        raise ValueError("box must be (dim, 2) with lo <= hi")
    if obj.hessian_bound is not None:
        raw = float(obj.hessian_bound(box))
    else:
        raw = 1.25 * _sampled_hessian_norm(obj, box, samples, seed)
    return max(1.0, eps_bar, raw)


def check_gradient(obj: Objective, box, samples: int = 100,
                   seed: int = 12345) -> float:
    """Max relative deviation between the analytic gradient and 5-point
    central differences at random points in the box (0/0 counts as 0)."""
    box = np.asarray(box, dtype=float)
    rng = np.random.default_rng(seed)
    lo, hi = box[:, 0], box[:, 1]
    pts = lo + (hi - lo) * rng.random((samples, obj.dim))
    h = 1e-5 * float(np.max(hi - lo))
    worst = 0.0
    for p in pts:
        fd = np.empty(obj.dim)
        for j in range(obj.dim):
            e = np.zeros(obj.dim)
            e[j] = 1.0
            f1 = obj.eval(p + h * e)
            f2 = obj.eval(p + 2 * h * e)
            fm1 = obj.eval(p - h * e)
            fm2 = obj.eval(p - 2 * h * e)
            fd[j] = (-f2 + 8 * f1 - 8 * fm1 + fm2) / (12 * h)
        ga = np.asarray(obj.grad(p), dtype=float)
        scale = max(float(np.linalg.norm(ga)), float(np.linalg.norm(fd)))
        if scale == 0.0:
            continue
        worst = max(worst, float(np.linalg.norm(ga - fd)) / scale)
    return worst
