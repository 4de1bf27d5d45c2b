"""Built-in benchmark definitions.

Three tasks plus the appendix variants:

* ex1      -- double-integrator drone, dt = 0.1, stabilizing seed controller
* ex2      -- reversed-time Van der Pol oscillator, dt = 0.05, zero seed
* ex3      -- 3D Van der Pol variant, dt = 0.1, zero seed
* ex1-N2   -- ex1 with a short horizon and tight termination
* ex2-dt01 -- ex2 re-discretized at dt = 0.1 (horizon-sweep base case)

All sets are centered balls or ellipses of the form {q(x) <= 0}; stage cost
is the squared state plus control norm throughout.
"""

from __future__ import annotations

import numpy as np

from .closed_loop import DiscreteSystem, LinearFeedback, StageCost
from .config import ExampleConfig
from .gbf import RegionSpec
from .poly import Polynomial, monomial_basis


def _ball(n, radius_sq, coeffs=None):
    """sum c_i x_i^2 - radius_sq as a Polynomial."""
    terms = {}
    for i in range(n):
        e = [0] * n
        e[i] = 2
        terms[tuple(e)] = 1.0 if coeffs is None else coeffs[i]
    terms[tuple([0] * n)] = -radius_sq
    return Polynomial(n, terms)


def _quad_cost(n, m):
    """||x||^2 + ||u||^2 over (x, u)."""
    terms = {}
    for i in range(n + m):
        e = [0] * (n + m)
        e[i] = 2
        terms[tuple(e)] = 1.0
    return StageCost(Polynomial(n + m, terms), n, m)


def _drone(dt=0.1):
    # p+ = p + dt v ; v+ = v + u
    f1 = Polynomial(3, {(1, 0, 0): 1.0, (0, 1, 0): dt})
    f2 = Polynomial(3, {(0, 1, 0): 1.0, (0, 0, 1): 1.0})
    return DiscreteSystem(2, 1, [f1, f2])


def _vanderpol(dt):
    # x1+ = x1 - dt x2 ; x2+ = x2 - dt((1 - x1^2) x2 - x1) + u
    f1 = Polynomial(3, {(1, 0, 0): 1.0, (0, 1, 0): -dt})
    f2 = Polynomial(3, {(0, 1, 0): 1.0 - dt, (1, 0, 0): dt, (2, 1, 0): dt,
                        (0, 0, 1): 1.0})
    return DiscreteSystem(2, 1, [f1, f2])


def _vanderpol3d(dt=0.1):
    f1 = Polynomial(4, {(1, 0, 0, 0): 1.0, (0, 1, 0, 0): -2 * dt})
    f2 = Polynomial(4, {(0, 1, 0, 0): 1.0 - 2.1 * dt, (1, 0, 0, 0): 0.8 * dt,
                        (0, 0, 1, 0): dt, (2, 1, 0, 0): 10 * dt})
    f3 = Polynomial(4, {(0, 0, 1, 0): 1.0 - dt, (0, 0, 3, 0): dt,
                        (0, 0, 0, 1): 1.0})
    return DiscreteSystem(3, 1, [f1, f2, f3])


def ex1() -> ExampleConfig:
    n = 2
    return ExampleConfig(
        name="ex1", system=_drone(0.1), dt=0.1,
        regions=RegionSpec(safe_w=_ball(n, 1.0, [1 / 64, 1 / 64]),
                           target_g=_ball(n, 0.25),
                           outer_w0=_ball(n, 2.0, [1 / 64, 1 / 64])),
        stage_cost=_quad_cost(2, 1),
        control_lower=[-0.5], control_upper=[0.5], x0=[4.0, -6.0],
        initial_controller=LinearFeedback([[-0.04, -0.1]], [0.0],
                                          [-0.5], [0.5]),
        lam=1.001, M=1.0, N=4, K=8, xi=0.1, epsilon=0.1, beta=0.1,
        template=monomial_basis(n, 2), n_prime_override=207)


def ex2() -> ExampleConfig:
    n = 2
    return ExampleConfig(
        name="ex2", system=_vanderpol(0.05), dt=0.05,
        regions=RegionSpec(safe_w=_ball(n, 1.0, [0.25, 0.25]),
                           target_g=_ball(n, 0.04),
                           outer_w0=_ball(n, 2.0, [0.25, 0.25])),
        stage_cost=_quad_cost(2, 1),
        control_lower=[-0.5], control_upper=[0.5], x0=[1.2, 1.0],
        initial_controller=LinearFeedback([[0.0, 0.0]], [0.0], [-0.5], [0.5]),
        lam=1.001, M=1.0, N=3, K=8, xi=0.1, epsilon=0.05, beta=0.05,
        template=monomial_basis(n, 2), n_prime_override=428)


def ex3() -> ExampleConfig:
    n = 3
    return ExampleConfig(
        name="ex3", system=_vanderpol3d(0.1), dt=0.1,
        regions=RegionSpec(safe_w=_ball(n, 0.25), target_g=_ball(n, 0.01),
                           outer_w0=_ball(n, 0.5)),
        stage_cost=_quad_cost(3, 1),
        control_lower=[-2.0], control_upper=[2.0], x0=[0.2, 0.4, 0.1],
        initial_controller=LinearFeedback([[0.0, 0.0, 0.0]], [0.0],
                                          [-2.0], [2.0]),
        lam=1.001, M=1.0, N=4, K=6, xi=0.002, epsilon=0.1, beta=0.1,
        template=monomial_basis(n, 2), deg_v_ladder=(2, 4))


def ex1_n2() -> ExampleConfig:
    cfg = ex1()
    cfg.name = "ex1-N2"
    cfg.N = 2
    cfg.K = 10
    cfg.xi = 0.01
    cfg.n_prime_override = None
    return cfg


def ex2_dt01(N: int = 2) -> ExampleConfig:
    n = 2
    return ExampleConfig(
        name="ex2-dt01", system=_vanderpol(0.1), dt=0.1,
        regions=RegionSpec(safe_w=_ball(n, 1.0, [0.25, 0.25]),
                           target_g=_ball(n, 0.04),
                           outer_w0=_ball(n, 2.0, [0.25, 0.25])),
        stage_cost=_quad_cost(2, 1),
        control_lower=[-0.5], control_upper=[0.5], x0=[1.2, 1.0],
        initial_controller=LinearFeedback([[0.0, 0.0]], [0.0], [-0.5], [0.5]),
        lam=1.001, M=1.0, N=N, K=10, xi=0.01, epsilon=0.05, beta=0.05,
        template=monomial_basis(n, 2))


def sweep_horizons() -> list[int]:
    return [2, 4, 6, 8, 10, 12]


def sweep_config(N: int) -> ExampleConfig:
    """Appendix horizon-sweep case: ex2-dt01 with K = 3 and xi = 0.01."""
    cfg = ex2_dt01(N=N)
    cfg.name = f"ex2-dt01-N{N}"
    cfg.K = 3
    cfg.xi = 0.01
    return cfg


BUILTIN = {"ex1": ex1, "ex2": ex2, "ex3": ex3, "ex1-N2": ex1_n2,
           "ex2-dt01": ex2_dt01}


def get(name: str) -> ExampleConfig:
    if name not in BUILTIN:
        raise KeyError(f"unknown example '{name}'; choose from "
                       f"{sorted(BUILTIN)} or 'ex2-sweepN'")
    return BUILTIN[name]()
