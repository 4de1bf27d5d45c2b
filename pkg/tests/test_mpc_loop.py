"""Episode mechanics: terminal bounds, warm-start shifting, full iterations."""

import numpy as np
import pytest

from rampc import examples
from rampc.closed_loop import fit_linear, trajectory_cost
from rampc.loop import check_assumption2, run as run_loop
from rampc.mpc import (MpcConfig, run_episode, terminal_bound,
                       warm_start_shift, _build_problem)
from rampc.nlp import FEAS_TOL, NlpSolution, solve
from rampc.scenario import fit_terminal_cost


class TestTerminalBound:
    def test_t0_geometric(self):
        assert terminal_bound(1.001, 4, 0.3, 0, None) == pytest.approx(
            0.3 * 1.001 ** 4, rel=1e-12)

    def test_later_steps(self):
        assert terminal_bound(1.001, 4, 0.3, 5, 0.5) == pytest.approx(0.5005)

    def test_missing_history(self):
        with pytest.raises(ValueError):
            terminal_bound(1.001, 4, 0.3, 1, None)


@pytest.fixture(scope="module")
def ex1_stack(ex1_barrier):
    cfg = examples.get("ex1")
    ctl = ex1_barrier.controller
    rng = np.random.default_rng(11)
    sur = fit_terminal_cost(ex1_barrier, cfg.system, ctl, cfg.regions,
                            cfg.stage_cost, cfg.template, cfg.epsilon,
                            cfg.beta, rng, n_samples=207)
    return cfg, ex1_barrier, sur, ctl


class TestEpisode:
    def test_episode_invariants(self, ex1_stack):
        cfg, barrier, sur, ctl = ex1_stack
        res = run_episode(cfg.system, cfg.regions, cfg.stage_cost, barrier,
                          sur, ctl, cfg.x0, cfg.control_lower,
                          cfg.control_upper, MpcConfig(horizon=cfg.N),
                          np.random.default_rng(0))
        traj = res.trajectory
        # ends inside the target, never leaves the safe set
        assert cfg.regions.target_g.eval(traj.states[-1]) <= 0
        assert np.all(cfg.regions.safe_w.eval_many(traj.states) <= 1e-8)
        # dynamics hold exactly along the applied trajectory
        traj.check_dynamics(cfg.system, tol=1e-9)
        # every warm start verified feasible (recursive feasibility)
        assert all(r.warm_violation <= FEAS_TOL for r in res.records)
        # bound bookkeeping: next bound is lam * realized terminal value
        for a, b in zip(res.records, res.records[1:]):
            assert b.bound == pytest.approx(barrier.lam * a.v_terminal,
                                            rel=1e-9)
            assert a.v_terminal >= a.bound - 1e-6
        # improvement over the seeding controller
        assert res.cost <= trajectory_cost(cfg.initial_trajectory(),
                                           cfg.stage_cost) + 1e-6

    def test_cost_descends_with_surrogate_slack(self, ex1_stack):
        cfg, barrier, sur, ctl = ex1_stack
        res = run_episode(cfg.system, cfg.regions, cfg.stage_cost, barrier,
                          sur, ctl, cfg.x0, cfg.control_lower,
                          cfg.control_upper, MpcConfig(horizon=cfg.N),
                          np.random.default_rng(1))
        slack = 2 * sur.delta_star + 1e-6
        for a, b in zip(res.records, res.records[1:]):
            assert b.objective <= a.objective - a.applied_cost + slack

    def test_start_inside_target(self, ex1_stack):
        cfg, barrier, sur, ctl = ex1_stack
        res = run_episode(cfg.system, cfg.regions, cfg.stage_cost, barrier,
                          sur, ctl, np.array([0.1, 0.0]), cfg.control_lower,
                          cfg.control_upper, MpcConfig(horizon=cfg.N),
                          np.random.default_rng(2))
        assert res.cost == 0.0
        assert len(res.trajectory) == 0

    def test_shift_passes_constraints_everywhere(self, ex1_stack):
        # Theorem-2-style constructive check, asserted per step
        cfg, barrier, sur, ctl = ex1_stack
        bound = terminal_bound(barrier.lam, cfg.N, barrier.v.eval(cfg.x0), 0,
                               None)
        problem = _build_problem(cfg.system, cfg.regions, cfg.stage_cost,
                                 barrier, sur, cfg.x0, bound,
                                 cfg.control_lower, cfg.control_upper, cfg.N)
        x = np.asarray(cfg.x0)
        warm = []
        for _ in range(cfg.N):
            u = ctl(x)
            warm.append(u)
            x = cfg.system.step(x, u)
        warm = np.array(warm)
        rng = np.random.default_rng(3)
        for t in range(25):
            sol = solve(problem, warm, rng=rng, n_random_starts=2)
            assert sol.max_violation <= FEAS_TOL
            if any(cfg.regions.target_g.eval(s) <= 0 for s in sol.states[1:]):
                break   # predicted prefix hit: the episode ends before a shift
            warm = warm_start_shift(sol, ctl)
            vterm = barrier.v.eval(sol.states[-1])
            bound = terminal_bound(barrier.lam, cfg.N, barrier.v.eval(cfg.x0),
                                   t + 1, vterm)
            problem = _build_problem(cfg.system, cfg.regions, cfg.stage_cost,
                                     barrier, sur, sol.states[1], bound,
                                     cfg.control_lower, cfg.control_upper,
                                     cfg.N)
            assert problem.max_violation(warm) <= FEAS_TOL

    def test_shift_refuses_bad_solution(self, ex1_stack):
        cfg, barrier, sur, ctl = ex1_stack
        bad = NlpSolution(controls=np.zeros((4, 1)), states=np.zeros((5, 2)),
                          objective=0.0, max_violation=1.0, converged=False)
        with pytest.raises(ValueError):
            warm_start_shift(bad, ctl)


class TestLoop:
    def test_k_zero_reports_initial_only(self):
        cfg = examples.get("ex1")
        res = run_loop(cfg, max_iters=0, seed=0)
        assert len(res.reports) == 1
        assert res.reports[0].cost == pytest.approx(369.8267, abs=1e-3)

    def test_assumption2_checks(self, ex1_barrier):
        cfg = examples.get("ex1")
        traj = cfg.initial_trajectory()
        ok, worst = check_assumption2(ex1_barrier, traj)
        assert ok
        assert worst > 0
        from rampc.gbf import GuidanceBarrier
        negated = GuidanceBarrier(v=ex1_barrier.v.scale(-1.0),
                                  lam=ex1_barrier.lam, M=ex1_barrier.M)
        ok, _ = check_assumption2(negated, traj)
        assert not ok

    def test_assumption2_empty_trajectory(self, ex1_barrier):
        from rampc.closed_loop import Trajectory
        empty = Trajectory(np.zeros((1, 2)), np.zeros((0, 1)), np.zeros(0))
        ok, worst = check_assumption2(ex1_barrier, empty)
        assert ok
        assert worst == np.inf

    def test_reproducible(self):
        cfg = examples.get("ex1")
        r1 = run_loop(cfg, max_iters=1, seed=123)
        r2 = run_loop(cfg, max_iters=1, seed=123)
        assert r1.costs == r2.costs
        assert [r.episode_len for r in r1.reports] == \
               [r.episode_len for r in r2.reports]
