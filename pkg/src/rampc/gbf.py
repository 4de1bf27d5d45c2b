"""Guidance-barrier synthesis, the certified reach-avoid set, and an
independent sampled verifier.

A certified barrier v with growth factor lam > 1 and target bound M yields
the reach-avoid set R = {x in X | v(x) > 0}: closed-loop trajectories of
the synthesis controller started in R stay in the safe set and enter the
target within ceil(log_lam(M / v(x0))) steps.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .closed_loop import DiscreteSystem, LinearFeedback, NotReached, simulate
from .conic import SolveStatus
from .poly import Polynomial
from .sos import (GbfSynthesisSpec, SynthesisError, bounding_box,
                  synthesize_gbf)


@dataclass
class RegionSpec:
    """The three semialgebraic sets of a reach-avoid task."""

    safe_w: Polynomial      # X = {w <= 0}
    target_g: Polynomial    # T = {g <= 0}
    outer_w0: Polynomial    # Y = {w0 <= 0}
    sample_box: np.ndarray | None = None   # (n, 2), overrides the derived box

    def box(self) -> np.ndarray:
        if self.sample_box is not None:
            return np.asarray(self.sample_box, dtype=float)
        return bounding_box(self.outer_w0)

    def _tight_box(self, poly: Polynomial) -> np.ndarray:
        """Bounding box of one sublevel set, falling back to Y's box."""
        try:
            tight = bounding_box(poly)
        except ValueError:
            return self.box()
        outer = self.box()
        return np.stack([np.maximum(tight[:, 0], outer[:, 0]),
                         np.minimum(tight[:, 1], outer[:, 1])], axis=1)

    def safe_box(self) -> np.ndarray:
        return self._tight_box(self.safe_w)

    def target_box(self) -> np.ndarray:
        return self._tight_box(self.target_g)


@dataclass
class GuidanceBarrier:
    v: Polynomial
    lam: float
    M: float
    x0: np.ndarray | None = None
    multipliers: list[Polynomial] = field(default_factory=list)
    deg_v: int | None = None
    controller: LinearFeedback | None = None   # the loop it certifies

    def value(self, x) -> float:
        return self.v.eval(x)

    def scaled_to_unit_bound(self) -> "GuidanceBarrier":
        """Equivalent certificate with M = 1 (v divided by M)."""
        return GuidanceBarrier(self.v.scale(1.0 / self.M), self.lam, 1.0,
                               self.x0, [m.scale(1.0 / self.M) for m in self.multipliers],
                               self.deg_v)

    def to_json_dict(self) -> dict:
        out = {
            "lambda": self.lam,
            "M": self.M,
            "v": self.v.to_json_dict(),
            "multipliers": [m.to_json_dict() for m in self.multipliers],
            "x0": list(map(float, self.x0)) if self.x0 is not None else None,
        }
        if self.controller is not None:
            out["controller"] = {"K": self.controller.K.tolist(),
                                 "k0": self.controller.k0.tolist(),
                                 "lower": self.controller.lower.tolist(),
                                 "upper": self.controller.upper.tolist()}
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "GuidanceBarrier":
        ctl = None
        if d.get("controller") is not None:
            c = d["controller"]
            ctl = LinearFeedback(np.array(c["K"]), np.array(c["k0"]),
                                 np.array(c["lower"]), np.array(c["upper"]))
        return cls(v=Polynomial.from_json_dict(d["v"]), lam=float(d["lambda"]),
                   M=float(d["M"]),
                   x0=None if d.get("x0") is None else np.array(d["x0"], dtype=float),
                   multipliers=[Polynomial.from_json_dict(m)
                                for m in d.get("multipliers", [])],
                   controller=ctl)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "GuidanceBarrier":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass
class ReachAvoidSet:
    barrier: GuidanceBarrier
    safe_w: Polynomial

    def membership(self, x) -> bool:
        return self.barrier.v.eval(x) > 0.0 and self.safe_w.eval(x) <= 0.0

    def membership_many(self, pts: np.ndarray) -> np.ndarray:
        return ((self.barrier.v.eval_many(pts) > 0.0)
                & (self.safe_w.eval_many(pts) <= 0.0))


class SynthesisFailure(RuntimeError):
    def __init__(self, kind: str, detail: str = ""):
        super().__init__(f"{kind}: {detail}" if detail else kind)
        self.kind = kind   # "infeasible_at_all_degrees" or "solver_breakdown"


def synthesize(system: DiscreteSystem, controller: LinearFeedback,
               regions: RegionSpec, lam: float, M: float, x0,
               degrees=(2, 4, 6), deg_s_main: int | None = None,
               deg_s_side: int | None = None, eps_pos: float = 1e-3)\
        -> GuidanceBarrier:
    """Synthesize a barrier for the closed loop, escalating the degree of v.

    Attempts the given even degrees in order; the first certified-feasible
    degree wins.  Raises SynthesisFailure when the ladder is exhausted.
    """
    closed = system.closed_loop_polys(controller)
    scales = regions.box()[:, 1]
    last_status = None
    for deg_v in degrees:
        spec = GbfSynthesisSpec(
            closed_loop=closed, w=regions.safe_w, g=regions.target_g,
            w0=regions.outer_w0, lam=lam, M=M, x0=np.asarray(x0, dtype=float),
            deg_v=deg_v, deg_s_main=deg_s_main, deg_s_side=deg_s_side,
            eps_pos=eps_pos, scales=scales)
        try:
            _, sol, cert = synthesize_gbf(spec)
        except SynthesisError:
            last_status = "decode_failure"
            continue
        if cert is not None:
            return GuidanceBarrier(v=cert.v, lam=lam, M=M, x0=cert.x0,
                                   multipliers=cert.multipliers, deg_v=deg_v,
                                   controller=controller)
        last_status = sol.status.name
    if last_status == SolveStatus.INFEASIBLE.name:
        raise SynthesisFailure("infeasible_at_all_degrees",
                               f"degrees tried: {list(degrees)}")
    raise SynthesisFailure("solver_breakdown",
                           f"last status {last_status}, degrees {list(degrees)}")


def hitting_time_bound(barrier: GuidanceBarrier, x) -> int:
    """ceil(log_lam(M / v(x))); requires v(x) > 0."""
    vx = barrier.v.eval(x)
    if vx <= 0:
        raise ValueError(f"v(x) = {vx:.3e} is not positive; x is outside R")
    if vx >= barrier.M:
        return 0
    return int(math.ceil(math.log(barrier.M / vx) / math.log(barrier.lam)))


def sample_region(predicate, box: np.ndarray, count: int, rng,
                  max_attempts: int = 1_000_000) -> np.ndarray:
    """Uniform rejection sampling of {x in box | predicate(x)} by batches."""
    n = box.shape[0]
    out = []
    got = 0
    attempts = 0
    batch = max(4 * count, 256)
    while got < count:
        if attempts >= max_attempts:
            raise RuntimeError(
                f"acceptance rate below {count / max_attempts:.1e}; "
                "region appears too thin to sample")
        take = min(batch, max_attempts - attempts)
        pts = rng.uniform(box[:, 0], box[:, 1], size=(take, n))
        attempts += take
        keep = predicate(pts)
        if np.any(keep):
            out.append(pts[keep])
            got += int(keep.sum())
    return np.vstack(out)[:count]


@dataclass
class ViolationReport:
    """Worst slack of each certificate clause over sampled points.

    Slacks are the left-hand margins of the four conditions; a negative
    entry is a violation of that size.
    """

    decrease: float        # min over X\T of v(F(x)) - lam v(x)
    outside: float         # min over Y\X of -v(x)
    target_bound: float    # min over T of M - v(x)
    v_at_x0: float
    samples_per_region: dict = field(default_factory=dict)

    def worst(self) -> float:
        return min(self.decrease, self.outside, self.target_bound)

    def x0_ok(self) -> bool:
        return self.v_at_x0 > 0.0


def verify_certificate(barrier: GuidanceBarrier, closed_loop: list[Polynomial],
                       regions: RegionSpec, samples: int, rng,
                       x0=None) -> ViolationReport:
    """Sampled falsification of the four barrier clauses.

    Report-only: returns the worst margin per clause over uniform samples
    of X\\T, Y\\X and T (plus the sign of v at x0 when given).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    w, g, w0 = regions.safe_w, regions.target_g, regions.outer_w0
    v = barrier.v
    counts = {}

    def in_x_not_t(pts):
        return (w.eval_many(pts) <= 0) & (g.eval_many(pts) > 0)

    def in_y_not_x(pts):
        return (w0.eval_many(pts) <= 0) & (w.eval_many(pts) > 0)

    def in_t(pts):
        return g.eval_many(pts) <= 0

    pts = sample_region(in_x_not_t, regions.safe_box(), samples, rng)
    counts["safe_minus_target"] = len(pts)
    fwd = np.column_stack([F.eval_many(pts) for F in closed_loop])
    decrease = float(np.min(v.eval_many(fwd) - barrier.lam * v.eval_many(pts)))

    pts = sample_region(in_y_not_x, regions.box(), samples, rng)
    counts["outer_minus_safe"] = len(pts)
    outside = float(np.min(-v.eval_many(pts)))

    pts = sample_region(in_t, regions.target_box(), samples, rng)
    counts["target"] = len(pts)
    target_bound = float(np.min(barrier.M - v.eval_many(pts)))

    x0 = barrier.x0 if x0 is None else np.asarray(x0, dtype=float)
    vx0 = float(v.eval(x0)) if x0 is not None else np.nan
    return ViolationReport(decrease=decrease, outside=outside,
                           target_bound=target_bound, v_at_x0=vx0,
                           samples_per_region=counts)


def closed_loop_reach_check(barrier: GuidanceBarrier, system: DiscreteSystem,
                            controller, regions: RegionSpec, h, n_starts: int,
                            rng) -> dict:
    """Exercise the reach-avoid guarantee from sampled starts inside R.

    From each sampled x in R, the (clipped) closed loop must enter T within
    hitting_time_bound(barrier, x) steps without leaving X.  Returns
    summary statistics; raises NotReached if the guarantee fails.
    """
    ras = ReachAvoidSet(barrier, regions.safe_w)
    pts = sample_region(ras.membership_many, regions.safe_box(), n_starts, rng)
    worst_margin = math.inf
    max_len = 0
    for x in pts:
        bound = hitting_time_bound(barrier, x)
        traj = simulate(system, controller, x, regions.target_g, h,
                        max_steps=max(bound, 1), safe_w=regions.safe_w)
        worst_margin = min(worst_margin, bound - len(traj))
        max_len = max(max_len, len(traj))
    return {"starts": len(pts), "worst_bound_margin": worst_margin,
            "longest_episode": max_len}
