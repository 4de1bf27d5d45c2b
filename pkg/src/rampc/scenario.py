"""PAC surrogate of the closed-loop cost-to-go over the reach-avoid set.

The exact cost-to-go under the previous controller is sampled: draw states
uniformly from R, roll each out to the target, and fit a polynomial
template by minimizing the worst absolute residual (a linear program).
With N' at least 2/eps * (ln(1/beta) + l + 1) samples, the fit is within
delta_star of the truth on at least 1-eps of R, with confidence 1-beta.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .closed_loop import NotReached, simulate, trajectory_cost
from .conic import LpProblem, SolveStatus, solve_lp
from .gbf import GuidanceBarrier, ReachAvoidSet, hitting_time_bound, sample_region
from .poly import Polynomial


def required_samples(epsilon: float, beta: float, n_params: int) -> int:
    """Smallest N' with epsilon >= (2/N')(ln(1/beta) + n_params + 1)."""
    if not 0 < epsilon < 1 or not 0 < beta < 1:
        raise ValueError("epsilon and beta must lie in (0, 1)")
    if n_params < 1:
        raise ValueError("need at least one template parameter")
    raw = 2.0 / epsilon * (math.log(1.0 / beta) + n_params + 1)
    return int(math.ceil(raw - 1e-12))


@dataclass
class CostSurrogate:
    template: list[tuple[int, ...]]   # monomial exponents over the state
    c: np.ndarray
    delta_star: float
    epsilon: float
    beta: float
    n_samples: int

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if len(self.c) != len(self.template):
            raise ValueError("coefficient count must match template size")

    def features(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        exps = np.array(self.template)
        return (pts[:, None, :] ** exps[None, :, :]).prod(axis=2)

    def eval(self, x) -> float:
        return float(self.features(np.asarray(x, dtype=float)) @ self.c)

    def eval_many(self, pts) -> np.ndarray:
        return self.features(pts) @ self.c

    def as_polynomial(self, nvars: int) -> Polynomial:
        return Polynomial(nvars, dict(zip(self.template, self.c)))

    def to_json_dict(self) -> dict:
        return {"template": [list(e) for e in self.template],
                "c": self.c.tolist(), "delta_star": self.delta_star,
                "epsilon": self.epsilon, "beta": self.beta,
                "n_samples": self.n_samples}

    @classmethod
    def from_json_dict(cls, d) -> "CostSurrogate":
        return cls(template=[tuple(e) for e in d["template"]],
                   c=np.array(d["c"]), delta_star=float(d["delta_star"]),
                   epsilon=float(d["epsilon"]), beta=float(d["beta"]),
                   n_samples=int(d.get("n_samples", 0)))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "CostSurrogate":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


class SamplingFailure(RuntimeError):
    pass


def collect_dataset(barrier: GuidanceBarrier, system, controller,
                    regions, h, count: int, rng,
                    max_exclusion_frac: float = 0.01):
    """States uniform over R paired with realized rollout costs.

    Rollouts are capped at 1.1x the certificate's hitting-time bound for
    the sampled state.  Failed rollouts (boundary float noise) are excluded
    and counted; more than max_exclusion_frac of them aborts loudly.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    ras = ReachAvoidSet(barrier, regions.safe_w)
    xs, qs = [], []
    excluded = 0
    attempts = 0
    while len(xs) < count:
        need = count - len(xs)
        try:
            pts = sample_region(ras.membership_many, regions.safe_box(), need, rng)
        except RuntimeError as exc:
            raise SamplingFailure(str(exc)) from exc
        for x in pts:
            attempts += 1
            bound = hitting_time_bound(barrier, x)
            cap = max(int(math.ceil(1.1 * bound)), 10)
            try:
                traj = simulate(system, controller, x, regions.target_g, h,
                                max_steps=cap, safe_w=regions.safe_w)
            except NotReached:
                excluded += 1
                if excluded > max(1.0, max_exclusion_frac * attempts) and \
                        excluded / attempts > max_exclusion_frac:
                    raise SamplingFailure(
                        f"{excluded}/{attempts} rollouts failed to reach the target; "
                        "certificate and sampling disagree")
                continue
            xs.append(x)
            qs.append(trajectory_cost(traj, h))
    return np.array(xs), np.array(qs), excluded


def fit(xs: np.ndarray, qs: np.ndarray, template, coeff_bound: float = 1e4)\
        -> CostSurrogate:
    """Minimize the worst absolute residual of a linear-in-parameters model.

    LP variables (c, delta): minimize delta subject to
    |Phi(x_i) c - Q_i| <= delta, |c_j| <= coeff_bound, delta >= 0.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    qs = np.asarray(qs, dtype=float)
    template = [tuple(e) for e in template]
    if len(xs) == 0:
        raise ValueError("empty dataset")
    tmp = CostSurrogate(template, np.zeros(len(template)), 0.0, 0.5, 0.5, 0)
    Phi = tmp.features(xs)
    n, l = Phi.shape
    A = np.block([[Phi, -np.ones((n, 1))], [-Phi, -np.ones((n, 1))]])
    b = np.concatenate([qs, -qs])
    lower = np.concatenate([np.full(l, -coeff_bound), [0.0]])
    upper = np.concatenate([np.full(l, coeff_bound), [np.inf]])
    lp = LpProblem(objective=np.concatenate([np.zeros(l), [1.0]]),
                   A=A, b=b, lower=lower, upper=upper)
    sol = solve_lp(lp)
    if sol.status != SolveStatus.FEASIBLE:
        raise RuntimeError(
            f"scenario program did not solve: {sol.status.name}; "
            "the coefficient box may exclude every fit")
    c, delta = sol.x[:l], float(sol.x[l])
    return CostSurrogate(template=template, c=c, delta_star=max(delta, 0.0),
                         epsilon=np.nan, beta=np.nan, n_samples=n)


def holdout_validate(surrogate: CostSurrogate, xs, qs) -> float:
    """Fraction of fresh samples whose residual exceeds delta_star."""
    resid = np.abs(surrogate.eval_many(np.atleast_2d(xs)) - np.asarray(qs))
    return float(np.mean(resid > surrogate.delta_star))


def fit_terminal_cost(barrier, system, controller, regions, h, template,
                      epsilon: float, beta: float, rng,
                      n_samples: int | None = None,
                      coeff_bound: float = 1e4) -> CostSurrogate:
    """End-to-end scenario fit: sample R, roll out, solve the LP."""
    count = required_samples(epsilon, beta, len(template)) \
        if n_samples is None else n_samples
    xs, qs, _ = collect_dataset(barrier, system, controller, regions, h,
                                count, rng)
    out = fit(xs, qs, template, coeff_bound)
    out.epsilon = epsilon
    out.beta = beta
    return out
