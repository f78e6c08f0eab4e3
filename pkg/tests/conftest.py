"""Shared fixtures: the benchmark initial data and a few session-scoped
runs that many tests interrogate (integration is cheap with the compiled
kernel but there is no reason to repeat it per test)."""
import numpy as np
import pytest

from heavyball_lab.dynamics import simulate
from heavyball_lab.example_xy import ExampleInit
from heavyball_lab.ode import ConvergenceHalt


@pytest.fixture(scope="session")
def init():
    return ExampleInit()  # a=1, b=0.1, gamma=0.5, epsilon=0.01


@pytest.fixture(scope="session")
def hb_run(init):
    """Default heavy-ball run to convergence (stops near t ~ 5)."""
    return simulate(init.heavy_ball(), t_end=200.0, rel_tol=1e-10,
                    abs_tol=1e-12, halt=ConvergenceHalt())


@pytest.fixture(scope="session")
def hb_run_fixed(init):
    """Default heavy-ball run on a fixed horizon (no early stop)."""
    return simulate(init.heavy_ball(), t_end=20.0, rel_tol=1e-10,
                    abs_tol=1e-12)


@pytest.fixture(scope="session")
def gf_run_10(init):
    """Limit-flow run on [0, 10] (no early stop)."""
    return simulate(init.gradient_flow(), t_end=10.0, rel_tol=1e-10,
                    abs_tol=1e-12)


@pytest.fixture(scope="session")
def gf_run_converged(init):
    return simulate(init.gradient_flow(), t_end=200.0, rel_tol=1e-10,
                    abs_tol=1e-12, halt=ConvergenceHalt())
