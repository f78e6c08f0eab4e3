"""heavyball-lab: simulate heavy-ball descent dynamics and their
gradient-flow limit, and certify the energy, speed, and trajectory-length
bounds that govern them.

The package is organised as:

- :mod:`~heavyball_lab.ode` -- adaptive RK 5(4) integration, dense output,
  event detection, arc-length quadrature (compiled core + pure fallback);
- :mod:`~heavyball_lab.objectives` -- objective registry with analytic
  gradients and Lipschitz bounds on boxes;
- :mod:`~heavyball_lab.dynamics` -- the damped second-order field, its
  first-order limit, energy functionals, and closed-form bound constants;
- :mod:`~heavyball_lab.example_xy` -- everything specific to the planar
  benchmark objective f(x, y) = (x*y - 1)^2;
- :mod:`~heavyball_lab.analysis` -- diagnostics, sweeps, and the
  length-supremum estimator;
- :mod:`~heavyball_lab.cli` -- the ``hblab`` command-line runner.
"""
from ._backend import compiled_available
from .ode import (
    ConvergenceHalt,
    EventQuery,
    IntegratorConfig,
    Trajectory,
    arc_length,
    dense_eval,
    detect_event,
    integrate,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceHalt",
    "EventQuery",
    "IntegratorConfig",
    "Trajectory",
    "arc_length",
    "compiled_available",
    "dense_eval",
    "detect_event",
    "integrate",
    "__version__",
]
