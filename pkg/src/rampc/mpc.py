"""Receding-horizon episode driver with certified terminal constraints.

Each solve minimizes the N-step stage cost plus the surrogate cost-to-go,
subject to the safe set and a terminal lower bound on the barrier value
that tightens geometrically: lam^N v(x0) at t = 0, then lam times the
realized barrier value of the previous terminal state.  The first control
is applied; the shifted previous solution plus one step of the previous
controller seeds the next solve (this is what makes every solve feasible
by construction).  As soon as a predicted prefix enters the target, that
prefix is applied open loop and the episode ends.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .closed_loop import (DiscreteSystem, LinearFeedback, StageCost,
                          Trajectory, trajectory_cost)
from .gbf import GuidanceBarrier, RegionSpec, hitting_time_bound
from .nlp import FEAS_TOL, NlpProblem, NlpSolution, solve
from .scenario import CostSurrogate


class EpisodeAbort(RuntimeError):
    def __init__(self, reason: str, partial: "EpisodeResult | None" = None):
        super().__init__(reason)
        self.partial = partial


@dataclass
class StepRecord:
    t: int
    bound: float
    warm_violation: float
    objective: float
    v_terminal: float
    applied_cost: float
    x_t: np.ndarray | None = None
    u_t: np.ndarray | None = None

    def to_json_dict(self) -> dict:
        return {"t": self.t, "bound": self.bound,
                "warm_violation": self.warm_violation,
                "objective": self.objective, "v_terminal": self.v_terminal,
                "applied_cost": self.applied_cost,
                "x_t": None if self.x_t is None else list(map(float, self.x_t)),
                "u_t": None if self.u_t is None else list(map(float, self.u_t))}


@dataclass
class EpisodeResult:
    trajectory: Trajectory
    cost: float
    records: list[StepRecord] = field(default_factory=list)
    early_stop: tuple[int, int] | None = None   # (t, prefix length l)


def terminal_bound(lam: float, horizon: int, v_x0: float, t: int,
                   prev_terminal_v: float | None) -> float:
    """Right-hand side of the terminal constraint at step t."""
    if t == 0:
        return lam ** horizon * v_x0
    if prev_terminal_v is None:
        raise ValueError("t >= 1 requires the previous terminal barrier value")
    return lam * prev_terminal_v


def warm_start_shift(prev: NlpSolution, controller: LinearFeedback) -> np.ndarray:
    """Shift the previous optimum and append one previous-controller step."""
    if not prev.converged and prev.max_violation > FEAS_TOL:
        raise ValueError("refusing to shift a non-converged, infeasible solution")
    tail = controller(prev.states[-1])
    return np.vstack([prev.controls[1:], tail[None, :]])


@dataclass
class MpcConfig:
    horizon: int
    n_random_starts: int = 4
    n_random_starts_later: int = 2
    safety_tol: float = 1e-8
    step_margin: int = 50


def _build_problem(system, regions, h, barrier, surrogate, x0, bound,
                   lower, upper, horizon) -> NlpProblem:
    n = system.state_dim
    return NlpProblem(horizon=horizon, system=system, control_lower=lower,
                      control_upper=upper, x0=np.asarray(x0, float),
                      stage_cost=h, safe_w=regions.safe_w,
                      terminal_v=barrier.v, terminal_bound=bound,
                      terminal_cost=surrogate.as_polynomial(n))


def run_episode(system: DiscreteSystem, regions: RegionSpec, h: StageCost,
                barrier: GuidanceBarrier, surrogate: CostSurrogate,
                controller_prev: LinearFeedback, x0, lower, upper,
                config: MpcConfig, rng) -> EpisodeResult:
    """One full closed-loop episode from x0 to the target set."""
    N = config.horizon
    x0 = np.asarray(x0, dtype=float)
    g_fn = regions.target_g.compiled()
    w_fn = regions.safe_w.compiled()
    v_fn = barrier.v.compiled()

    if g_fn(x0) <= 0.0:
        traj = Trajectory(x0[None, :], np.zeros((0, system.control_dim)),
                          np.zeros(0))
        return EpisodeResult(trajectory=traj, cost=0.0, early_stop=(0, 0))

    vx0 = v_fn(x0)
    if vx0 <= 0:
        raise EpisodeAbort(f"x0 outside the certified set (v(x0) = {vx0:.3e})")
    max_steps = hitting_time_bound(barrier, x0) + config.step_margin

    states = [x0.copy()]
    controls: list[np.ndarray] = []
    costs: list[float] = []
    records: list[StepRecord] = []

    def finish(applied_states, applied_controls, applied_costs, early):
        traj = Trajectory(np.array(applied_states),
                          np.array(applied_controls) if applied_controls
                          else np.zeros((0, system.control_dim)),
                          np.array(applied_costs))
        return EpisodeResult(trajectory=traj, cost=trajectory_cost(traj, h),
                             records=records, early_stop=early)

    # t = 0 seed: rollout of the previous controller (feasible by the
    # certificate); if it already reaches the target within N steps the
    # episode collapses to that prefix
    warm = np.empty((N, system.control_dim))
    x = x0.copy()
    warm_states = [x.copy()]
    hit = None
    for k in range(N):
        u = controller_prev(x)
        warm[k] = u
        x = system.step(x, u)
        warm_states.append(x.copy())
        if hit is None and g_fn(x) <= 0.0:
            hit = k + 1
    if hit is not None:
        for k in range(hit):
            u = warm[k]
            costs.append(h.eval(states[-1], u))
            controls.append(u.copy())
            states.append(warm_states[k + 1].copy())
        return finish(states, controls, costs, (0, hit))

    prev_terminal_v = None

    for t in range(max_steps):
        x_t = states[-1]
        bound = terminal_bound(barrier.lam, N, vx0, t, prev_terminal_v)
        problem = _build_problem(system, regions, h, barrier, surrogate,
                                 x_t, bound, lower, upper, N)
        warm_viol = problem.max_violation(warm)
        if warm_viol > FEAS_TOL and t == 0:
            # float slack on the very first bound: relax once, loudly
            bound *= (1.0 - 1e-6)
            problem = _build_problem(system, regions, h, barrier, surrogate,
                                     x_t, bound, lower, upper, N)
            warm_viol = problem.max_violation(warm)
        if warm_viol > FEAS_TOL:
            raise EpisodeAbort(
                f"warm start violates constraints by {warm_viol:.2e} at t={t}",
                finish(states, controls, costs, None))

        n_starts = (config.n_random_starts if t == 0
                    else config.n_random_starts_later)
        sol = solve(problem, warm, rng=rng, n_random_starts=n_starts)
        v_term = v_fn(sol.states[-1])
        records.append(StepRecord(t=t, bound=bound, warm_violation=warm_viol,
                                  objective=sol.objective, v_terminal=v_term,
                                  applied_cost=h.eval(x_t, sol.controls[0]),
                                  x_t=x_t.copy(), u_t=sol.controls[0].copy()))

        hit = None
        for lidx in range(1, N + 1):
            if g_fn(sol.states[lidx]) <= 0.0:
                hit = lidx
                break
        if hit is not None:
            for k in range(hit):
                u = sol.controls[k]
                costs.append(h.eval(states[-1], u))
                controls.append(u.copy())
                states.append(sol.states[k + 1].copy())
            return finish(states, controls, costs, (t, hit))

        u0 = sol.controls[0]
        costs.append(h.eval(x_t, u0))
        controls.append(u0.copy())
        x_next = sol.states[1]
        if w_fn(x_next) > config.safety_tol:
            raise EpisodeAbort(f"left the safe set at t={t + 1}",
                               finish(states, controls, costs, None))
        states.append(x_next.copy())

        prev_terminal_v = v_term
        warm = warm_start_shift(sol, controller_prev)

    raise EpisodeAbort(
        f"episode exceeded {max_steps} steps without reaching the target",
        finish(states, controls, costs, None))
