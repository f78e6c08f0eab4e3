"""Vector fields, energies, certificate constants, and the speed bound."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heavyball_lab.dynamics import (
    GradientFlowProblem,
    HeavyBallProblem,
    auxiliary_state,
    eta_constant,
    gradient_flow_field,
    heavy_ball_field,
    length_lemma_constants,
    lyapunov_H,
    phi_bound,
    simulate,
    speed_bound,
    total_energy,
)
from heavyball_lab.dynamics import (
    _speed_bound_large_mass,
    _speed_bound_small_mass,
)
from heavyball_lab.errors import InvalidLipschitz
from heavyball_lab.objectives import constant_objective, xy_objective


@pytest.fixture(scope="module")
def hb_problem(init):
    return init.heavy_ball()


class TestFields:
    def test_heavy_ball_equilibrium(self):
        p = HeavyBallProblem(constant_objective(), epsilon=0.5, gamma=1.0,
                             x0=np.zeros(2), v0=np.zeros(2))
        assert heavy_ball_field(p)(0.0, np.zeros(4)) == pytest.approx(np.zeros(4))

    def test_heavy_ball_hand_value(self, hb_problem):
        # grad f(1,-1) = (4, -4); v' = -(0.5*(0.1,0.1) + (4,-4)) / 0.01
        field = heavy_ball_field(hb_problem)
        out = field(0.0, np.array([1.0, -1.0, 0.1, 0.1]))
        assert out == pytest.approx([0.1, 0.1, -405.0, 395.0])

    def test_pure_damping_at_critical_point(self):
        p = HeavyBallProblem(xy_objective(), epsilon=0.01, gamma=0.5,
                             x0=np.array([1.0, 1.0]), v0=np.array([0.3, -0.2]))
        out = heavy_ball_field(p)(0.0, np.array([1.0, 1.0, 0.3, -0.2]))
        assert out[2:] == pytest.approx(-0.5 * np.array([0.3, -0.2]) / 0.01)

    def test_gradient_flow_hand_value(self, init):
        field = gradient_flow_field(init.gradient_flow())
        assert field(0.0, np.array([1.0, -1.0])) == pytest.approx([-8.0, 8.0])

    def test_gradient_flow_descent_direction(self, init):
        field = gradient_flow_field(init.gradient_flow())
        obj = xy_objective()
        rng = np.random.default_rng(11)
        for p in rng.uniform(-2, 2, size=(50, 2)):
            g = obj.grad(p)
            inner = float(np.dot(field(0.0, p), g))
            assert inner == pytest.approx(-np.dot(g, g) / 0.5, rel=1e-12,
                                          abs=1e-12)
            assert inner <= 1e-15

    def test_acceleration_is_algebraic(self, hb_problem):
        field = heavy_ball_field(hb_problem)
        x, v = np.array([1.0, -1.0]), np.array([0.1, 0.1])
        acc = field.acceleration(x, v)
        assert acc == pytest.approx([-405.0, 395.0])


class TestEnergies:
    def test_zero_velocity_reduces_to_objective(self):
        assert total_energy(np.array([1.0, 0.0]), np.zeros(2), 0.3,
                            xy_objective()) == pytest.approx(1.0)

    def test_hand_value(self):
        F = total_energy(np.array([1.0, -1.0]), np.array([0.1, 0.1]), 0.01,
                         xy_objective())
        assert F == pytest.approx(4.0001)

    def test_zero_on_hyperbola_at_rest(self):
        F = total_energy(np.array([2.0, 0.5]), np.zeros(2), 0.01,
                         xy_objective())
        assert F == pytest.approx(0.0, abs=1e-15)

    def test_lyapunov_equal_args(self):
        x = np.array([1.3, 0.4])
        assert lyapunov_H(x, x, 1.0, xy_objective()) == pytest.approx(
            float(xy_objective().eval(x)))

    def test_lyapunov_hand_value(self):
        H = lyapunov_H(np.array([1.0, 0.0]), np.zeros(2), 1.0, xy_objective())
        assert H == pytest.approx(2.0)

    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 5))
    @settings(max_examples=50, deadline=None)
    def test_lyapunov_dominates_objective(self, x, y, alpha):
        p = np.array([x, y])
        q = np.array([y, x])
        assert lyapunov_H(p, q, alpha, xy_objective()) >= float(
            xy_objective().eval(p)) - 1e-12


class TestAuxiliaryState:
    def test_zero_velocity(self):
        x = np.array([1.0, 2.0])
        assert auxiliary_state(x, np.zeros(2), 0.5) == pytest.approx(x)

    def test_hand_value(self):
        u = auxiliary_state(np.array([1.0, -1.0]), np.array([0.1, 0.1]),
                            0.006667)
        assert u == pytest.approx([1.0006667, -0.9993333])

    def test_linearity_in_velocity(self):
        x = np.array([0.3, -0.7])
        v = np.array([1.1, 0.4])
        d1 = auxiliary_state(x, v, 0.2) - x
        d2 = auxiliary_state(x, 2 * v, 0.2) - x
        assert d2 == pytest.approx(2 * d1)


class TestLengthLemmaConstants:
    def test_frozen_values(self):
        c = length_lemma_constants(0.5, 0.01, 1.0)
        assert c.beta == pytest.approx(0.0066666666666666666667, rel=1e-12)
        assert c.alpha == pytest.approx(150.0, rel=1e-12)
        assert c.a_diss == pytest.approx(0.49331111111111111, rel=1e-12)
        assert c.b_diss == pytest.approx(4.4444444444444444e-05, rel=1e-12)
        assert c.c_grad == pytest.approx(0.52, rel=1e-12)
        assert c.c_grad / c.a_diss == pytest.approx(1.0541, abs=1e-4)
        assert 0.01**2 / (c.b_diss * c.c_grad) == pytest.approx(4.3269,
                                                                abs=1e-4)

    def test_invalid_lipschitz(self):
        with pytest.raises(InvalidLipschitz):
            length_lemma_constants(0.5, 0.01, 0.5)

    @pytest.mark.parametrize("seed", range(4))
    def test_random_admissible_inequalities(self, seed):
        rng = np.random.default_rng(seed)
        for _ in range(25):
            gamma = rng.uniform(0.1, 2.0)
            epsilon = rng.uniform(1e-4, 1.0)
            L = rng.uniform(max(1.0, epsilon), 50.0)
            c = length_lemma_constants(gamma, epsilon, L)
            assert c.alpha >= 0.25
            assert c.a_diss > 0 and c.b_diss > 0
            assert c.c_grad / c.a_diss <= 4.0 * (1.0 + L / gamma) + 1e-12
            assert epsilon**2 / (c.b_diss * c.c_grad) \
                <= 2.0 * L + 6.0 * L / gamma + 1e-12


class TestEtaPhi:
    @pytest.mark.parametrize("r,expected", [(0.0, 0.0), (1.0, 4.0),
                                            (2.0, 12.0)])
    def test_eta_values(self, r, expected):
        assert eta_constant(r) == expected

    def test_eta_monotone(self):
        rs = np.linspace(0, 10, 50)
        vals = [eta_constant(r) for r in rs]
        assert np.all(np.diff(vals) > 0)

    def test_phi_at_zero(self):
        assert phi_bound(0.0, lambda s: s, 1.0, 0.5, 3) == 0.0

    def test_phi_hand_value(self):
        # 8 * (2 + 1 + 10) * 2 * psi(1) with psi = identity
        assert phi_bound(4.0, lambda s: s, 1.0, 0.5, 2) == pytest.approx(208.0)

    def test_phi_identity_independent_of_m(self):
        vals = [phi_bound(4.0, lambda s: s, 1.0, 0.5, m) for m in (1, 2, 5)]
        assert np.allclose(vals, vals[0])


class TestSpeedBound:
    def test_stationary_problem(self):
        assert speed_bound(1.0, 1.0, 0.0, 2.0, 2.0, 0.0) == 0.0

    def test_small_mass_limit_of_increasing_branch(self):
        # at epsilon -> 0 the increasing branch tends to r0 + 2 sup_grad/gamma
        val = _speed_bound_large_mass(0.0, 0.5, 26.0, 25.0, 0.0,
                                      math.sqrt(0.02), 28.0)
        assert val == pytest.approx(math.sqrt(0.02) + 2 * 28.0 / 0.5)

    def test_branch_monotonicity(self):
        eps = np.logspace(-6, 2, 60)
        A = [_speed_bound_small_mass(e, 25.0, 0.0, 0.1) for e in eps]
        B = [_speed_bound_large_mass(e, 0.5, 26.0, 25.0, 0.0, 0.1, 28.0)
             for e in eps]
        assert np.all(np.diff(A) < 0)
        assert np.all(np.diff(B) > 0)

    def test_golden_section_matches_bisection_oracle(self):
        # the max of min(decreasing, increasing) sits where the branches
        # cross; bisecting the crossing equation is an independent route
        gamma, L, r0, sup_f, inf_f, sup_grad = 0.5, 26.0, math.sqrt(0.02), \
            25.0, 0.0, 28.284271247461902
        r = speed_bound(gamma, L, r0, sup_f, inf_f, sup_grad)

        def gap(e):
            return _speed_bound_small_mass(e, sup_f, inf_f, r0) \
                - _speed_bound_large_mass(e, gamma, L, sup_f, inf_f, r0,
                                          sup_grad)

        lo, hi = 1e-12, 1e12
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            if gap(mid) > 0:
                lo = mid
            else:
                hi = mid
        oracle = _speed_bound_small_mass(lo, sup_f, inf_f, r0)
        assert r == pytest.approx(float(oracle), abs=1e-6)

    def test_uniform_bound_dominates_grid_scan(self):
        gamma, L, r0, sup_f, inf_f, sup_grad = 0.5, 26.0, math.sqrt(0.02), \
            25.0, 0.0, 28.284271247461902
        r = speed_bound(gamma, L, r0, sup_f, inf_f, sup_grad)
        eps = np.logspace(-12, 12, 10_000)
        grid = np.minimum(
            _speed_bound_small_mass(eps, sup_f, inf_f, r0),
            _speed_bound_large_mass(eps, gamma, L, sup_f, inf_f, r0,
                                    sup_grad))
        assert float(np.max(grid)) <= r + 1e-9

    def test_per_mass_bound_below_uniform(self):
        kw = dict(gamma=0.5, L=26.0, r0=0.1, sup_f=25.0, inf_f=0.0,
                  sup_grad=28.0)
        uniform = speed_bound(**kw)
        for e in (1e-3, 1e-2, 1e-1, 1.0):
            assert speed_bound(**kw, epsilon=e) <= uniform + 1e-9

    def test_bound_honored_with_large_initial_speed(self, init):
        # b = 10 stresses the r0 dependence of both branches
        problem = HeavyBallProblem(xy_objective(), epsilon=0.01, gamma=0.5,
                                   x0=np.array([1.0, -1.0]),
                                   v0=np.array([10.0, 10.0]))
        traj = simulate(problem, t_end=50.0, rel_tol=1e-10, abs_tol=1e-12)
        pos = traj.states[:, :2]
        lo, hi = pos.min(axis=0) - 0.1, pos.max(axis=0) + 0.1
        box = np.stack([lo, hi], axis=1)
        from heavyball_lab.analysis import _box_suprema, certify_speed_bound
        from heavyball_lab.objectives import lipschitz_bound_on_box
        L = lipschitz_bound_on_box(xy_objective(), box)
        sup_f, sup_grad = _box_suprema(xy_objective(), box)
        r = speed_bound(0.5, L, float(np.linalg.norm(problem.v0)), sup_f,
                        0.0, sup_grad)
        verdict = certify_speed_bound(traj, r, box)
        assert verdict.status == "pass"


class TestProblemValidation:
    def test_rejects_nonpositive_parameters(self):
        with pytest.raises(ValueError):
            HeavyBallProblem(xy_objective(), epsilon=0.0, gamma=0.5,
                             x0=np.zeros(2), v0=np.zeros(2))
        with pytest.raises(ValueError):
            GradientFlowProblem(xy_objective(), gamma=-1.0, x0=np.zeros(2))

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ValueError):
            HeavyBallProblem(xy_objective(), epsilon=0.1, gamma=0.5,
                             x0=np.zeros(3), v0=np.zeros(3))
