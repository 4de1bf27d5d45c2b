"""Closed-loop simulation, episode cost accounting, and controller fitting.

State-control conventions: a system's transition components are polynomials
in (x_1..x_n, u_1..u_m).  Episodes end at the first state inside the target
set; the reported cost adds the state-only stage cost of that final state,
matching how the benchmark tables account for it (an empty episode, started
inside the target, costs zero).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .poly import Polynomial


class NotReached(Exception):
    """Rollout failed to enter the target set."""

    def __init__(self, cause: str, step: int):
        super().__init__(f"{cause} at step {step}")
        self.cause = cause   # "timeout" or "left_safe_set"
        self.step = step


@dataclass
class DiscreteSystem:
    state_dim: int
    control_dim: int
    f: list[Polynomial]          # each over state_dim + control_dim variables

    def __post_init__(self):
        nv = self.state_dim + self.control_dim
        if len(self.f) != self.state_dim:
            raise ValueError("need one transition polynomial per state")
        if any(p.nvars != nv for p in self.f):
            raise ValueError(f"transition polynomials must have {nv} variables")
        self._step_fns = [p.compiled() for p in self.f]

    def step(self, x, u) -> np.ndarray:
        xu = np.concatenate([x, u])
        return np.array([fn(xu) for fn in self._step_fns])

    def closed_loop_polys(self, feedback: "LinearFeedback") -> list[Polynomial]:
        """f(x, u_hat(x)) componentwise, with the unclipped affine feedback."""
        n, m = self.state_dim, self.control_dim
        subs = [Polynomial.variable(n, i) for i in range(n)]
        for j in range(m):
            terms = {tuple([0] * n): feedback.k0[j]}
            for i in range(n):
                e = [0] * n
                e[i] = 1
                terms[tuple(e)] = feedback.K[j, i]
            subs.append(Polynomial(n, terms))
        return [p.compose(subs) for p in self.f]


@dataclass
class StageCost:
    """Stage cost h(x, u) as a polynomial over (x, u)."""

    h: Polynomial
    state_dim: int
    control_dim: int

    def __post_init__(self):
        if self.h.nvars != self.state_dim + self.control_dim:
            raise ValueError("stage cost variable count mismatch")
        self._fn = self.h.compiled()

    def eval(self, x, u) -> float:
        return self._fn(np.concatenate([x, u]))

    def eval_state(self, x) -> float:
        """h(x, 0): the state-only cost charged at the target-hitting state."""
        return self._fn(np.concatenate([x, np.zeros(self.control_dim)]))


class LinearFeedback:
    """Affine state feedback u = K x + k0, clipped to the control box."""

    def __init__(self, K, k0, lower, upper):
        self.K = np.atleast_2d(np.asarray(K, dtype=float))
        self.k0 = np.asarray(k0, dtype=float)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.K.shape[0] != self.k0.shape[0]:
            raise ValueError("K row count must match k0 length")

    def __call__(self, x) -> np.ndarray:
        return np.clip(self.K @ x + self.k0, self.lower, self.upper)

    def unclipped(self, x) -> np.ndarray:
        return self.K @ x + self.k0


@dataclass
class Trajectory:
    states: np.ndarray        # (L+1, n)
    controls: np.ndarray      # (L, m)
    stage_costs: np.ndarray   # (L,)

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.controls = np.asarray(self.controls, dtype=float)
        if self.controls.ndim == 1:
            self.controls = self.controls.reshape(-1, 1)
        self.stage_costs = np.asarray(self.stage_costs, dtype=float)
        if len(self.controls) != len(self.states) - 1:
            raise ValueError("need exactly one control per transition")
        if len(self.stage_costs) != len(self.controls):
            raise ValueError("one stage cost per control")

    def __len__(self):
        return len(self.controls)

    def check_dynamics(self, system: DiscreteSystem, tol: float = 1e-10) -> float:
        worst = 0.0
        for k in range(len(self)):
            pred = system.step(self.states[k], self.controls[k])
            worst = max(worst, float(np.abs(pred - self.states[k + 1]).max()))
        if worst > tol:
            raise ValueError(f"stored states deviate from dynamics by {worst:.2e}")
        return worst


def trajectory_cost(traj: Trajectory, h: StageCost) -> float:
    """Episode cost: stage costs plus the final state's state-only cost.

    A zero-length trajectory (started inside the target) costs zero.
    """
    if len(traj) == 0:
        return 0.0
    return float(traj.stage_costs.sum() + h.eval_state(traj.states[-1]))


def simulate(system: DiscreteSystem, controller, x0, target_g: Polynomial,
             h: StageCost, max_steps: int, safe_w: Polynomial | None = None)\
        -> Trajectory:
    """Roll the closed loop until the first state inside {g <= 0}.

    Raises NotReached("timeout") if the target is not hit within max_steps
    and NotReached("left_safe_set") if w(x) > 0 occurs first.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    g_fn = target_g.compiled()
    w_fn = safe_w.compiled() if safe_w is not None else None
    x = np.asarray(x0, dtype=float)
    states, controls, costs = [x.copy()], [], []
    for t in range(max_steps + 1):
        if g_fn(x) <= 0.0:
            ctl = (np.array(controls) if controls
                   else np.zeros((0, system.control_dim)))
            return Trajectory(np.array(states), ctl, np.array(costs))
        if w_fn is not None and w_fn(x) > 0.0:
            raise NotReached("left_safe_set", t)
        if t == max_steps:
            break
        u = np.atleast_1d(controller(x))
        costs.append(h.eval(x, u))
        x = system.step(x, u)
        states.append(x.copy())
        controls.append(u.copy())
    raise NotReached("timeout", max_steps)


def fit_linear(traj: Trajectory, lower, upper) -> LinearFeedback:
    """Least-squares linear interpolant u = K x of the state-control pairs.

    Minimizes sum_i ||K x(i) - u(i)||^2; rank-deficient data falls back to
    the minimum-norm solution.  The fit is kept strictly linear (no
    intercept) so that the interpolated loop keeps its equilibrium at the
    origin, inside every benchmark's target set; an affine intercept can
    park the closed loop at a spurious equilibrium that no certificate can
    cover.  Requires at least one pair.
    """
    if len(traj) < 1:
        raise ValueError("need at least one state-control pair")
    X = traj.states[:-1]
    U = traj.controls
    coef, *_ = np.linalg.lstsq(X, U, rcond=None)
    K = coef.T
    return LinearFeedback(K, np.zeros(U.shape[1]), lower, upper)
