"""Local solver for the finite-horizon receding-horizon subproblem.

Single shooting over the control sequence only: states are always the
exact rollout of the controls, never free variables.  The two nonlinear
constraint families (stage safe-set membership and the terminal
certificate bound) are handled by an augmented-Lagrangian outer loop;
the box-constrained smooth subproblems go to L-BFGS-B with analytic
adjoint gradients.  Multi-start guards against the nonconvexity of the
oscillator benchmarks.

Contract: given a feasible warm start, the returned point is feasible and
never worse than the warm start; if no start produces a feasible
improvement, the warm start itself comes back with converged = False.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .closed_loop import DiscreteSystem, StageCost
from .poly import Polynomial

FEAS_TOL = 1e-6


@dataclass
class NlpProblem:
    horizon: int
    system: DiscreteSystem
    control_lower: np.ndarray
    control_upper: np.ndarray
    x0: np.ndarray
    stage_cost: StageCost
    safe_w: Polynomial
    terminal_v: Polynomial
    terminal_bound: float
    terminal_cost: Polynomial      # surrogate cost-to-go at the horizon end

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.control_lower = np.asarray(self.control_lower, dtype=float)
        self.control_upper = np.asarray(self.control_upper, dtype=float)
        self.x0 = np.asarray(self.x0, dtype=float)
        if not np.all(np.isfinite(self.control_lower)) or \
                not np.all(np.isfinite(self.control_upper)):
            raise ValueError("control box must be finite")
        n, m = self.system.state_dim, self.system.control_dim
        self._f = [p.compiled() for p in self.system.f]
        self._fx = [[self.system.f[i].diff(j).compiled() for j in range(n)]
                    for i in range(n)]
        self._fu = [[self.system.f[i].diff(n + j).compiled() for j in range(m)]
                    for i in range(n)]
        self._h = self.stage_cost.h.compiled()
        self._hx = [self.stage_cost.h.diff(j).compiled() for j in range(n)]
        self._hu = [self.stage_cost.h.diff(n + j).compiled() for j in range(m)]
        self._w = self.safe_w.compiled()
        self._wx = [self.safe_w.diff(j).compiled() for j in range(n)]
        self._v = self.terminal_v.compiled()
        self._vx = [self.terminal_v.diff(j).compiled() for j in range(n)]
        self._q = self.terminal_cost.compiled()
        self._qx = [self.terminal_cost.diff(j).compiled() for j in range(n)]

    # -- rollout and derivatives ------------------------------------------

    def rollout(self, controls: np.ndarray) -> np.ndarray:
        N, n = self.horizon, self.system.state_dim
        states = np.empty((N + 1, n))
        states[0] = self.x0
        for k in range(N):
            xu = np.concatenate([states[k], controls[k]])
            states[k + 1] = [f(xu) for f in self._f]
        return states

    def objective_value(self, controls, states=None) -> float:
        states = self.rollout(controls) if states is None else states
        total = 0.0
        for k in range(self.horizon):
            total += self._h(np.concatenate([states[k], controls[k]]))
        return total + self._q(states[-1])

    def constraint_values(self, states) -> np.ndarray:
        """(w(x_1), ..., w(x_{N-1}), bound - v(x_N)); all must be <= 0."""
        vals = [self._w(states[k]) for k in range(1, self.horizon)]
        vals.append(self.terminal_bound - self._v(states[-1]))
        return np.array(vals)

    def max_violation(self, controls, states=None) -> float:
        states = self.rollout(controls) if states is None else states
        box = np.maximum(self.control_lower - controls,
                         controls - self.control_upper).max(initial=0.0)
        return float(max(self.constraint_values(states).max(), box, 0.0))

    def _lagrangian(self, uflat, mult_w, mult_t, rho):
        """PHR augmented Lagrangian value and gradient via one adjoint sweep.

        rho = 0 drops the constraint terms and yields the bare objective.
        """
        N, n, m = self.horizon, self.system.state_dim, self.system.control_dim
        controls = uflat.reshape(N, m)
        states = self.rollout(controls)
        xu = [np.concatenate([states[k], controls[k]]) for k in range(N)]

        value = sum(self._h(xu[k]) for k in range(N)) + self._q(states[-1])
        # penalty weights: psi(c) = (max(0, mu + rho c)^2 - mu^2) / (2 rho)
        act_w = np.zeros(N + 1)
        act_t = 0.0
        if rho > 0.0:
            for k in range(1, N):
                t = mult_w[k - 1] + rho * self._w(states[k])
                if t > 0:
                    value += (t * t - mult_w[k - 1] ** 2) / (2 * rho)
                    act_w[k] = t
            c_t = self.terminal_bound - self._v(states[-1])
            t = mult_t + rho * c_t
            act_t = max(t, 0.0)
            if act_t > 0:
                value += (act_t * act_t - mult_t ** 2) / (2 * rho)

        grad = np.zeros((N, m))
        p = np.array([q(states[-1]) for q in self._qx])
        if act_t > 0:
            p -= act_t * np.array([vx(states[-1]) for vx in self._vx])
        for k in range(N - 1, -1, -1):
            A = np.array([[fx(xu[k]) for fx in row] for row in self._fx])
            B = np.array([[fu(xu[k]) for fu in row] for row in self._fu])
            grad[k] = [hu(xu[k]) for hu in self._hu]
            grad[k] += B.T @ p
            if k > 0:
                p = np.array([hx(xu[k]) for hx in self._hx]) + A.T @ p
                if act_w[k] > 0:
                    p += act_w[k] * np.array([wx(states[k]) for wx in self._wx])
        return value, grad.ravel()


@dataclass
class NlpSolution:
    controls: np.ndarray
    states: np.ndarray
    objective: float
    max_violation: float
    converged: bool
    starts_tried: int = 0


def gradient(problem: NlpProblem, controls: np.ndarray) -> np.ndarray:
    """Adjoint gradient of the bare objective (no constraint terms)."""
    N, m = problem.horizon, problem.system.control_dim
    controls = np.asarray(controls, dtype=float).reshape(N, m)
    _, g = problem._lagrangian(controls.ravel(),
                               np.zeros(max(N - 1, 1)), 0.0, 0.0)
    return g.reshape(N, m)


def _al_minimize(problem: NlpProblem, u0: np.ndarray,
                 inner_tol: float = 1e-8, rho0: float = 10.0,
                 rho_max: float = 1e8, outer_iters: int = 12):
    N, m = problem.horizon, problem.system.control_dim
    bounds = [(problem.control_lower[j], problem.control_upper[j])
              for _ in range(N) for j in range(m)]
    u = np.clip(u0.reshape(N, m), problem.control_lower,
                problem.control_upper).ravel()
    mult_w = np.zeros(max(problem.horizon - 1, 1))
    mult_t = 0.0
    rho = rho0
    prev_viol = np.inf
    for _ in range(outer_iters):
        res = minimize(problem._lagrangian, u, args=(mult_w, mult_t, rho),
                       method="L-BFGS-B", jac=True, bounds=bounds,
                       options={"maxiter": 200, "ftol": 1e-14,
                                "gtol": inner_tol})
        u = res.x
        states = problem.rollout(u.reshape(N, m))
        cons = problem.constraint_values(states)
        viol = max(float(cons.max()), 0.0)
        if viol <= FEAS_TOL:
            return u.reshape(N, m), states, True
        for k in range(1, problem.horizon):
            mult_w[k - 1] = max(0.0, mult_w[k - 1] + rho * cons[k - 1])
        mult_t = max(0.0, mult_t + rho * cons[-1])
        if viol > 0.25 * prev_viol:
            rho = min(rho * 10.0, rho_max)
        prev_viol = viol
    return u.reshape(N, m), states, viol <= FEAS_TOL


def solve(problem: NlpProblem, warm_start: np.ndarray, rng=None,
          n_random_starts: int = 4) -> NlpSolution:
    """Improve on a feasible warm start; never return anything worse.

    Runs the augmented-Lagrangian solve from the warm start and up to
    n_random_starts perturbed seeds (uniform draws in the control box added
    to the warm start, clipped).  The best feasible candidate that does not
    exceed the warm-start objective wins; ties go to the earliest start.
    """
    N, m = problem.horizon, problem.system.control_dim
    warm = np.asarray(warm_start, dtype=float).reshape(N, m)
    warm_states = problem.rollout(warm)
    warm_obj = problem.objective_value(warm, warm_states)
    warm_viol = problem.max_violation(warm, warm_states)

    starts = [warm.copy()]
    if rng is not None:
        for _ in range(n_random_starts):
            delta = rng.uniform(problem.control_lower, problem.control_upper,
                                size=(N, m))
            starts.append(np.clip(warm + delta, problem.control_lower,
                                  problem.control_upper))

    best = None
    solved_any = False
    for idx, u0 in enumerate(starts):
        u, states, ok = _al_minimize(problem, u0)
        if not ok:
            continue
        obj = problem.objective_value(u, states)
        viol = problem.max_violation(u, states)
        if viol > FEAS_TOL:
            continue
        solved_any = True
        if obj <= warm_obj + 1e-9 and (best is None or obj < best[0] - 0.0):
            best = (obj, u, states, viol)
    if best is None:
        # no feasible improvement found: fall back to the warm start
        return NlpSolution(controls=warm, states=warm_states, objective=warm_obj,
                           max_violation=warm_viol,
                           converged=bool(solved_any and warm_viol <= FEAS_TOL),
                           starts_tried=len(starts))
    obj, u, states, viol = best
    return NlpSolution(controls=u, states=states, objective=obj,
                       max_violation=viol, converged=True,
                       starts_tried=len(starts))
