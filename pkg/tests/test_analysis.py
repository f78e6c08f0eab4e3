"""Diagnostics checks, tracking, limit points, and the sigma estimator."""
import numpy as np
import pytest

from heavyball_lab.analysis import (
    CriticalPointKind,
    DiagnosticsOptions,
    certify_speed_bound,
    default_velocity_directions,
    dissipation_check,
    energy_monotone_check,
    epsilon_sweep,
    full_diagnostics,
    grad_h_bound_check,
    h_alpha_dissipation_check,
    l2_velocity_check,
    limit_point,
    sigma_estimate,
    tracking_distance,
)
from heavyball_lab.dynamics import (
    GradientFlowProblem,
    HeavyBallProblem,
    length_lemma_constants,
    simulate,
)
from heavyball_lab.errors import SpanMismatch
from heavyball_lab.objectives import (
    Objective,
    lipschitz_bound_on_box,
    xy_objective,
)
from heavyball_lab.ode import ConvergenceHalt

BOX22 = np.array([[-2.0, 2.0], [-2.0, 2.0]])


class TestDissipation:
    def test_heavy_ball_residual_small(self, init, hb_run):
        check = dissipation_check(hb_run, init.heavy_ball())
        assert check.passed
        assert check.data["max_normalized_residual"] <= 1e-5

    def test_gradient_flow_residual_small(self, init, gf_run_10):
        check = dissipation_check(gf_run_10, init.gradient_flow())
        assert check.passed

    def test_corrupted_gradient_canary(self):
        # field integrates a tilted gradient while F uses the true values:
        # the identity must break by roughly the tilt size
        obj = xy_objective()
        crooked = Objective(name="xy", dim=2, eval=obj.eval,
                            grad=lambda p: 1.05 * obj.grad(p))
        problem = HeavyBallProblem(crooked, epsilon=0.01, gamma=0.5,
                                   x0=np.array([1.0, -1.0]),
                                   v0=np.array([0.1, 0.1]))
        traj = simulate(problem, t_end=5.0, rel_tol=1e-10, abs_tol=1e-12)
        check = dissipation_check(traj, problem)
        assert not check.passed

    def test_lookalike_objective_never_uses_the_kernel(self):
        # same name, different gradient: must not ride the compiled path
        obj = xy_objective()
        crooked = Objective(name="xy", dim=2, eval=obj.eval,
                            grad=lambda p: 1.05 * obj.grad(p))
        problem = HeavyBallProblem(crooked, epsilon=0.01, gamma=0.5,
                                   x0=np.array([1.0, -1.0]),
                                   v0=np.array([0.1, 0.1]))
        from heavyball_lab.dynamics import heavy_ball_field
        assert getattr(heavy_ball_field(problem), "kernel_spec", None) is None


class TestEnergyMonotone:
    def test_heavy_ball(self, init, hb_run):
        check = energy_monotone_check(hb_run, init.heavy_ball())
        assert check.passed

    def test_limit_flow(self, init, gf_run_10):
        check = energy_monotone_check(gf_run_10, init.gradient_flow())
        assert check.passed


class TestL2Bound:
    def test_stationary_run(self):
        from heavyball_lab.objectives import constant_objective
        problem = HeavyBallProblem(constant_objective(), epsilon=0.1,
                                   gamma=1.0, x0=np.zeros(2), v0=np.zeros(2))
        traj = simulate(problem, t_end=2.0)
        check = l2_velocity_check(traj, 0.1, 1.0, 0.0, 0.0, 0.0)
        assert check.passed and check.data["lhs"] <= 1e-12

    def test_default_run_hand_rhs(self, init, hb_run):
        # sup_{X0} f = f(1,-1) = 4, inf f = 0, r0^2 = 0.02
        check = l2_velocity_check(hb_run, 0.01, 0.5, 4.0, 0.0,
                                  np.sqrt(0.02))
        assert check.data["rhs"] == pytest.approx(8.0002)
        assert check.passed

    def test_energy_balance_equality_for_limit_flow(self, init,
                                                    gf_run_converged):
        # zero-mass dissipation integrates exactly: lhs = (f(x0)-f(x_inf))/gamma
        check = l2_velocity_check(gf_run_converged, 0.0, 0.5, 4.0, 0.0, 0.0)
        f_inf = float(xy_objective().eval(gf_run_converged.states[-1]))
        expected = (4.0 - f_inf) / 0.5
        assert check.data["lhs"] == pytest.approx(expected, abs=1e-5)


class TestSpeedCertificate:
    def test_pass_on_default_run(self, hb_run):
        verdict = certify_speed_bound(hb_run, 120.0, BOX22)
        assert verdict.status == "pass"
        assert verdict.sup_velocity <= 120.0

    def test_fail_when_bound_too_small(self, hb_run):
        verdict = certify_speed_bound(hb_run, 1.0, BOX22)
        assert verdict.status == "fail"

    def test_vacuous_when_outside_box(self, hb_run):
        small = np.array([[-0.5, 0.5], [-0.5, 0.5]])
        verdict = certify_speed_bound(hb_run, 120.0, small)
        assert verdict.status == "vacuous"


class TestLemma3Checks:
    def test_h_alpha_dissipation_holds(self, init, hb_run):
        L = lipschitz_bound_on_box(xy_objective(), BOX22)
        consts = length_lemma_constants(0.5, 0.01, L)
        check = h_alpha_dissipation_check(hb_run, init.heavy_ball(), consts)
        assert check.passed

    def test_grad_h_residual_mechanics(self, init, hb_run):
        # the checker reports the worst signed residual and its location;
        # the inequality itself is exercised by the acceptance suite
        L = lipschitz_bound_on_box(xy_objective(), BOX22)
        consts = length_lemma_constants(0.5, 0.01, L)
        check = grad_h_bound_check(hb_run, init.heavy_ball(), consts)
        assert np.isfinite(check.data["max_residual"])
        assert check.data["worst_time"] is not None
        assert check.passed == (check.data["max_residual"]
                                <= check.data["slack"])


class TestTracking:
    def test_identical_trajectories(self, gf_run_10):
        assert tracking_distance(gf_run_10, gf_run_10, 10.0) == 0.0

    def test_stationary_problems_distance_zero(self):
        from heavyball_lab.objectives import constant_objective
        hb = HeavyBallProblem(constant_objective(), epsilon=0.05, gamma=1.0,
                              x0=np.ones(2), v0=np.zeros(2))
        gf = GradientFlowProblem(constant_objective(), gamma=1.0,
                                 x0=np.ones(2))
        t1 = simulate(hb, t_end=5.0)
        t2 = simulate(gf, t_end=5.0)
        assert tracking_distance(t1, t2, 5.0) <= 1e-12

    def test_distance_shrinks_before_escape(self, init):
        # on a window shorter than every escape time the perturbed runs
        # approach the limit flow as the mass shrinks
        gf = simulate(init.gradient_flow(), t_end=1.5, rel_tol=1e-10,
                      abs_tol=1e-12)
        dists = []
        for eps in (0.01, 0.003, 0.001):
            hb = simulate(init.with_epsilon(eps).heavy_ball(), t_end=1.5,
                          rel_tol=1e-10, abs_tol=1e-12)
            dists.append(tracking_distance(hb, gf, 1.5))
        assert dists[0] > dists[1] > dists[2]

    def test_span_mismatch(self, init, gf_run_10):
        short = simulate(init.heavy_ball(), t_end=1.0)
        with pytest.raises(SpanMismatch):
            tracking_distance(short, gf_run_10, 5.0)


class TestLimitPoint:
    def test_limit_flow_reaches_origin(self, init, gf_run_converged):
        res = limit_point(gf_run_converged, init.gradient_flow())
        assert res.kind is CriticalPointKind.ORIGIN
        assert res.converged

    def test_heavy_ball_reaches_hyperbola(self, init, hb_run):
        res = limit_point(hb_run, init.heavy_ball())
        assert res.kind is CriticalPointKind.HYPERBOLA
        assert res.converged

    def test_short_horizon_not_converged(self, init):
        traj = simulate(init.heavy_ball(), t_end=0.1)
        res = limit_point(traj, init.heavy_ball())
        assert not res.converged


class TestSigmaEstimate:
    def test_stationary_starts_give_zero(self):
        res = sigma_estimate([np.array([1.0, 1.0]), np.array([0.0, 0.0])],
                             0.0, [], [0.01], 0.5, xy_objective(),
                             horizon=5.0)
        assert res.sigma <= 1e-9
        assert not res.failures

    def test_singleton_grid_equals_arc_length(self, init, hb_run):
        from heavyball_lab.ode import arc_length
        res = sigma_estimate([np.array([1.0, -1.0])], np.sqrt(0.02),
                             [np.array([1.0, 1.0])], [0.01], 0.5,
                             xy_objective(), horizon=200.0,
                             rel_tol=1e-10, abs_tol=1e-12)
        direct = arc_length(hb_run, components=[0, 1])
        assert res.sigma == pytest.approx(direct, rel=1e-6)
        assert res.argmax["epsilon"] == 0.01

    def test_failed_cells_recorded_and_skipped(self):
        # a non-finite field kills its own cell but not the sweep
        broken = Objective(
            name="broken", dim=2,
            eval=lambda p: np.sum(np.asarray(p) ** 2, axis=-1),
            grad=lambda p: np.full_like(np.asarray(p, dtype=float), np.nan),
        )
        res = sigma_estimate([np.array([1.0, -1.0])], 0.1,
                             [np.array([1.0, 0.0])], [0.01], 0.5,
                             broken, horizon=5.0)
        assert res.table == []
        assert len(res.failures) == 1
        assert "NonFiniteState" in res.failures[0]["error"]

    def test_direction_grid_refinement_stable(self, init):
        eps_list = [0.01]
        kw = dict(r0=np.sqrt(0.02), eps_list=eps_list, gamma=0.5,
                  objective=xy_objective(), horizon=120.0,
                  rel_tol=1e-9, abs_tol=1e-11)
        s8 = sigma_estimate([init.heavy_ball().x0],
                            v_dirs=default_velocity_directions(8), **kw)
        s16 = sigma_estimate([init.heavy_ball().x0],
                             v_dirs=default_velocity_directions(16), **kw)
        assert abs(s16.sigma - s8.sigma) <= 0.05 * s8.sigma


class TestFullDiagnostics:
    def test_default_preset_verdicts(self, init):
        report = full_diagnostics(init.heavy_ball())
        expected_pass = {"dissipation_identity", "energy_monotone",
                         "l2_velocity_bound", "speed_bound",
                         "h_alpha_dissipation"}
        for name in expected_pass:
            assert report.checks[name].passed, name
        # the doubled-space gradient bound fails: its constant lacks the
        # 2*alpha*beta coupling weight, which dwarfs c on these runs
        assert not report.checks["grad_h_bound"].passed
        assert report.limit.kind is CriticalPointKind.HYPERBOLA

    def test_gradient_flow_skips_mass_specific_checks(self, init):
        report = full_diagnostics(init.gradient_flow(),
                                  DiagnosticsOptions(horizon=50.0))
        assert "speed_bound" in report.not_applicable
        assert "h_alpha_dissipation" in report.not_applicable
        assert "grad_h_bound" in report.not_applicable
        assert report.checks["dissipation_identity"].passed
        assert report.limit.kind is CriticalPointKind.ORIGIN

    def test_report_serializes(self, init):
        report = full_diagnostics(init.heavy_ball())
        d = report.to_dict()
        assert d["schema"] == "diagnostics-json/1"
        assert d["checks"]["l2_velocity_bound"]["lhs"] <= \
            d["checks"]["l2_velocity_bound"]["rhs"] + 1e-6


class TestSweep:
    def test_short_ladder(self, init):
        sweep = epsilon_sweep(init, [0.03, 0.01],
                              DiagnosticsOptions(horizon=120.0),
                              tracking_horizon=2.0, n_dirs=4)
        assert sweep.epsilons == [0.03, 0.01]
        assert all(row["tail"] <= 1e-3 for row in sweep.lengths.values())
        assert sweep.sigma.sigma > 0

    def test_rejects_unsorted_ladder(self, init):
        with pytest.raises(ValueError):
            epsilon_sweep(init, [0.01, 0.03])
