"""Benchmark configuration: schema, validation, and JSON round-trip."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .closed_loop import (DiscreteSystem, LinearFeedback, StageCost,
                          Trajectory, simulate)
from .gbf import RegionSpec
from .poly import Polynomial


class ConfigError(ValueError):
    pass


@dataclass
class ExampleConfig:
    name: str
    system: DiscreteSystem
    dt: float                      # discretization step, documentation only
    regions: RegionSpec
    stage_cost: StageCost
    control_lower: np.ndarray
    control_upper: np.ndarray
    x0: np.ndarray
    initial_controller: LinearFeedback
    lam: float
    M: float
    N: int
    K: int
    xi: float
    epsilon: float
    beta: float
    template: list[tuple[int, ...]]
    n_prime_override: int | None = None
    deg_v_ladder: tuple[int, ...] = (2, 4, 6)
    deg_s_main: int | None = 4
    deg_s_side: int | None = None
    coeff_bound: float = 1e4
    seed: int = 0
    max_initial_steps: int = 200_000
    mpc_options: dict = field(default_factory=dict)

    def __post_init__(self):
        self.control_lower = np.asarray(self.control_lower, dtype=float)
        self.control_upper = np.asarray(self.control_upper, dtype=float)
        self.x0 = np.asarray(self.x0, dtype=float)
        self.template = [tuple(e) for e in self.template]
        n, m = self.system.state_dim, self.system.control_dim
        checks = [
            (self.lam > 1.0, f"lambda must exceed 1 (got {self.lam})"),
            (self.M > 0, "M must be positive"),
            (self.N >= 1, "prediction horizon must be >= 1"),
            (self.K >= 0, "iteration budget must be >= 0"),
            (self.xi > 0, "termination threshold must be positive"),
            (0 < self.epsilon < 1, "epsilon must lie in (0, 1)"),
            (0 < self.beta < 1, "beta must lie in (0, 1)"),
            (len(self.x0) == n, "x0 dimension mismatch"),
            (self.control_lower.shape == (m,), "control bound shape mismatch"),
            (self.control_upper.shape == (m,), "control bound shape mismatch"),
            (np.all(self.control_lower < self.control_upper),
             "control box is empty"),
            (np.all(np.isfinite(self.control_lower))
             and np.all(np.isfinite(self.control_upper)),
             "control box must be finite"),
            (len(self.template) >= 1, "empty surrogate template"),
            (all(len(e) == n for e in self.template),
             "template exponents must match the state dimension"),
            (self.regions.safe_w.nvars == n, "safe set dimension mismatch"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        if self.regions.safe_w.eval(self.x0) > 0:
            raise ConfigError("x0 lies outside the safe set")
        # target-inside-safe spot check on a coarse grid of the outer box
        rng = np.random.default_rng(0)
        box = self.regions.box()
        pts = rng.uniform(box[:, 0], box[:, 1], size=(4000, n))
        in_t = self.regions.target_g.eval_many(pts) <= 0
        if np.any(in_t) and np.any(self.regions.safe_w.eval_many(pts[in_t]) > 1e-9):
            raise ConfigError("target set leaves the safe set")

    def initial_trajectory(self) -> Trajectory:
        return simulate(self.system, self.initial_controller, self.x0,
                        self.regions.target_g, self.stage_cost,
                        max_steps=self.max_initial_steps,
                        safe_w=self.regions.safe_w)

    # -- serialization -----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "dt": self.dt,
            "dynamics": [p.to_json_dict() for p in self.system.f],
            "state_dim": self.system.state_dim,
            "control_dim": self.system.control_dim,
            "safe_set": self.regions.safe_w.to_json_dict(),
            "target_set": self.regions.target_g.to_json_dict(),
            "outer_set": self.regions.outer_w0.to_json_dict(),
            "stage_cost": self.stage_cost.h.to_json_dict(),
            "control_lower": self.control_lower.tolist(),
            "control_upper": self.control_upper.tolist(),
            "x0": self.x0.tolist(),
            "initial_controller": {"K": self.initial_controller.K.tolist(),
                                   "k0": self.initial_controller.k0.tolist()},
            "lambda": self.lam, "M": self.M, "N": self.N, "K": self.K,
            "xi": self.xi, "epsilon": self.epsilon, "beta": self.beta,
            "template": [list(e) for e in self.template],
            "n_prime_override": self.n_prime_override,
            "deg_v_ladder": list(self.deg_v_ladder),
            "deg_s_main": self.deg_s_main,
            "deg_s_side": self.deg_s_side,
            "coeff_bound": self.coeff_bound,
            "seed": self.seed,
            "mpc_options": self.mpc_options,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)


_REQUIRED = ["name", "dt", "dynamics", "state_dim", "control_dim", "safe_set",
             "target_set", "outer_set", "stage_cost", "control_lower",
             "control_upper", "x0", "initial_controller", "lambda", "M", "N",
             "K", "xi", "epsilon", "beta", "template"]


def config_from_dict(d: dict) -> ExampleConfig:
    missing = [k for k in _REQUIRED if k not in d]
    if missing:
        raise ConfigError(f"missing config fields: {', '.join(missing)}")
    try:
        n, m = int(d["state_dim"]), int(d["control_dim"])
        system = DiscreteSystem(n, m, [Polynomial.from_json_dict(p)
                                       for p in d["dynamics"]])
        regions = RegionSpec(
            safe_w=Polynomial.from_json_dict(d["safe_set"]),
            target_g=Polynomial.from_json_dict(d["target_set"]),
            outer_w0=Polynomial.from_json_dict(d["outer_set"]),
            sample_box=(np.array(d["sample_box"], dtype=float)
                        if d.get("sample_box") else None))
        h = StageCost(Polynomial.from_json_dict(d["stage_cost"]), n, m)
        ic = d["initial_controller"]
        controller = LinearFeedback(np.array(ic["K"], dtype=float),
                                    np.array(ic["k0"], dtype=float),
                                    np.array(d["control_lower"], dtype=float),
                                    np.array(d["control_upper"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config field: {exc}") from exc
    return ExampleConfig(
        name=str(d["name"]), system=system, dt=float(d["dt"]), regions=regions,
        stage_cost=h, control_lower=np.array(d["control_lower"], dtype=float),
        control_upper=np.array(d["control_upper"], dtype=float),
        x0=np.array(d["x0"], dtype=float), initial_controller=controller,
        lam=float(d["lambda"]), M=float(d["M"]), N=int(d["N"]), K=int(d["K"]),
        xi=float(d["xi"]), epsilon=float(d["epsilon"]), beta=float(d["beta"]),
        template=[tuple(e) for e in d["template"]],
        n_prime_override=(None if d.get("n_prime_override") is None
                          else int(d["n_prime_override"])),
        deg_v_ladder=tuple(d.get("deg_v_ladder", (2, 4, 6))),
        deg_s_main=d.get("deg_s_main", 4),
        deg_s_side=d.get("deg_s_side"),
        coeff_bound=float(d.get("coeff_bound", 1e4)),
        seed=int(d.get("seed", 0)),
        mpc_options=dict(d.get("mpc_options", {})))


def load_config(path) -> ExampleConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(d)
