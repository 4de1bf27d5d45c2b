"""Compile guidance-barrier synthesis into a semidefinite program.

The certified-decrease system for a candidate barrier v and a fixed
polynomial closed loop F(x) = f(x, u_hat(x)) is

    v(F(x)) - lam*v(x) + s1(x) w(x) - s2(x) g(x)   is SOS
    -v(x)   + s3(x) w0(x) - s4(x) w(x)             is SOS
    M - v(x) + s5(x) g(x)                          is SOS
    v(x0) >= eps_pos

with s1..s5 SOS multipliers.  Every SOS membership becomes a PSD Gram
block plus one linear equality per monomial of the identity; the
coefficients of v are the free scalar variables.

For interior-point conditioning the whole system is compiled in scaled
coordinates (states divided by the half-widths of an axis-aligned box
around Y) with set polynomials normalized to unit max coefficient; the
decoded certificate is mapped back to original coordinates, which leaves
its pointwise values unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conic import SQRT2, SdpProblem, SdpSolution, SolveStatus, solve_sdp
from .poly import Polynomial, monomial_basis


@dataclass
class SosTemplate:
    """Gram basis for one SOS block inside an SdpProblem."""

    basis: list[tuple[int, ...]]
    block_index: int


@dataclass
class GbfSynthesisSpec:
    closed_loop: list[Polynomial]   # components of F(x), nvars = state dim
    w: Polynomial                   # safe set  {w <= 0}
    g: Polynomial                   # target    {g <= 0}
    w0: Polynomial                  # outer set {w0 <= 0}, image bound of f
    lam: float
    M: float
    x0: np.ndarray
    deg_v: int
    deg_s_main: int | None = None   # multipliers on the decrease identity
    deg_s_side: int | None = None   # multipliers on the other identities
    eps_pos: float = 1e-3
    scales: np.ndarray | None = None  # per-coordinate half-widths of Y's box

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        n = self.w.nvars
        if any(f.nvars != n for f in self.closed_loop) or len(self.closed_loop) != n:
            raise ValueError("closed loop must have one component per state variable")
        if self.g.nvars != n or self.w0.nvars != n:
            raise ValueError("set polynomials disagree on variable count")
        if not self.lam > 1.0:
            raise ValueError(f"lambda must exceed 1, got {self.lam}")
        if not self.M > 0:
            raise ValueError("M must be positive")
        if self.deg_v < 2 or self.deg_v % 2:
            raise ValueError("deg_v must be a positive even integer")
        if self.eps_pos <= 0:
            raise ValueError("eps_pos must be positive")
        if len(self.x0) != n:
            raise ValueError("x0 dimension mismatch")
        # target inside safe set, spot-checked on the target boundary region
        rng = np.random.default_rng(0)
        box = bounding_box(self.w0) if self.scales is None else np.stack(
            [-np.asarray(self.scales, float), np.asarray(self.scales, float)], axis=1)
        pts = rng.uniform(box[:, 0], box[:, 1], size=(2000, n))
        inside_t = self.g.eval_many(pts) <= 0
        if np.any(inside_t) and np.any(self.w.eval_many(pts[inside_t]) > 1e-9):
            raise ValueError("target set is not contained in the safe set")


def bounding_box(w0: Polynomial) -> np.ndarray:
    """Axis-aligned box containing {w0 <= 0} for a diagonal quadratic w0.

    All benchmark outer sets have the form sum a_i x_i^2 - r with a_i > 0;
    anything else must supply explicit scales in the synthesis spec.
    """
    n = w0.nvars
    quad = np.zeros(n)
    const = 0.0
    for e, c in w0.terms.items():
        deg = sum(e)
        if deg == 0:
            const = c
        elif deg == 2 and max(e) == 2:
            quad[e.index(2)] = c
        else:
            raise ValueError(
                "outer set is not a diagonal quadratic; provide scales explicitly")
    if const >= 0 or np.any(quad <= 0):
        raise ValueError("outer set polynomial does not bound a box")
    half = np.sqrt(-const / quad)
    return np.stack([-half, half], axis=1)


def _even_up(d: int) -> int:
    return d + (d & 1)


@dataclass
class ParamPoly:
    """Polynomial with coefficients affine in the free parameter vector."""

    nvars: int
    const: dict = field(default_factory=dict)            # monomial -> float
    lin: dict = field(default_factory=dict)              # monomial -> {param: coef}

    def add_poly(self, p: Polynomial, scale: float = 1.0):
        for e, c in p.terms.items():
            self.const[e] = self.const.get(e, 0.0) + scale * c
        return self

    def add_param_poly(self, param: int, p: Polynomial, scale: float = 1.0):
        for e, c in p.terms.items():
            row = self.lin.setdefault(e, {})
            row[param] = row.get(param, 0.0) + scale * c
        return self

    def monomials(self):
        return set(self.const) | set(self.lin)


def encode_sos_identity(lhs: ParamPoly, gram_templates: list[SosTemplate],
                        multipliers: list[Polynomial | None],
                        signs: list[float], problem: SdpProblem,
                        max_degree: int) -> list[int]:
    """Emit equalities for:  lhs + sum_k sign_k * (z_k' Q_k z_k * mult_k) = 0.

    One equality per monomial of total degree <= max_degree.  Returns the
    row indices appended to the problem.  Raises if any participating
    monomial exceeds the representable span.
    """
    nvars = lhs.nvars
    for e in lhs.monomials():
        if sum(e) > max_degree:
            raise ValueError(
                f"lhs monomial {e} of degree {sum(e)} exceeds identity degree "
                f"{max_degree}")
    mono_order = monomial_basis(nvars, max_degree)
    mono_index = {e: i for i, e in enumerate(mono_order)}
    rows = [([], [], 0.0) for _ in mono_order]

    def bump(exp, col, coef):
        idx = mono_index.get(exp)
        if idx is None:
            raise ValueError(
                f"monomial {exp} of degree {sum(exp)} exceeds identity degree {max_degree}")
        rows[idx][0].append(col)
        rows[idx][1].append(coef)

    one = {tuple([0] * nvars): 1.0}
    for tpl, mult, sign in zip(gram_templates, multipliers, signs):
        mterms = mult.terms if mult is not None else one
        basis = tpl.basis
        for i, ei in enumerate(basis):
            for j in range(i, len(basis)):
                pair = tuple(a + b for a, b in zip(ei, basis[j]))
                col = problem.gram_entry_index(tpl.block_index, i, j)
                fac = sign * (SQRT2 if j > i else 1.0)
                for em, cm in mterms.items():
                    bump(tuple(a + b for a, b in zip(pair, em)), col, fac * cm)

    n_cone = problem.n_cone
    for e, prow in lhs.lin.items():
        for param, coef in prow.items():
            bump(e, n_cone + param, coef)

    out = []
    for k, e in enumerate(mono_order):
        cols, coefs, _ = rows[k]
        rhs = -lhs.const.get(e, 0.0)
        if not cols:
            if abs(rhs) > 1e-12:
                raise ValueError(f"unmatchable constant coefficient on {e}")
            continue
        out.append(len(problem.equalities))
        problem.equalities.append((np.array(cols), np.array(coefs), rhs))
    return out


@dataclass
class GbfEncoding:
    """Bookkeeping linking an SdpProblem back to the synthesis spec."""

    spec: GbfSynthesisSpec
    scales: np.ndarray
    v_basis: list[tuple[int, ...]]
    templates: list[SosTemplate]       # sigma_A, s1, s2, sigma_B, s3, s4, sigma_C, s5
    problem: SdpProblem
    scaled: dict = field(default_factory=dict)  # scaled-coordinate data


def _scale_poly(p: Polynomial, scales) -> Polynomial:
    q = p.rescale_vars(scales)
    mx = q.max_abs_coeff()
    return q.scale(1.0 / mx) if mx > 0 else q


def build_gbf_sdp(spec: GbfSynthesisSpec, vx0_floor: float | None = None,
                  maximize: bool = True) -> GbfEncoding:
    n = spec.w.nvars
    scales = (np.asarray(spec.scales, float) if spec.scales is not None
              else bounding_box(spec.w0)[:, 1])

    # scaled closed loop: Ft(y) = F(S y) / s, componentwise
    F = [spec.closed_loop[i].rescale_vars(scales).scale(1.0 / scales[i])
         for i in range(n)]
    w = _scale_poly(spec.w, scales)
    g = _scale_poly(spec.g, scales)
    w0 = _scale_poly(spec.w0, scales)
    x0 = spec.x0 / scales

    deg_f = max(max(f.degree() for f in F), 1)
    d0_main = _even_up(max(spec.deg_v * deg_f, spec.deg_v))
    ds_main = spec.deg_s_main if spec.deg_s_main is not None else max(
        _even_up(d0_main - w.degree()), 0)
    d_main = _even_up(max(d0_main, ds_main + w.degree(), ds_main + g.degree()))
    ds_side = spec.deg_s_side if spec.deg_s_side is not None else max(
        _even_up(spec.deg_v - 2), 0)
    d_side = _even_up(max(spec.deg_v, ds_side + w.degree(), ds_side + w0.degree(),
                          ds_side + g.degree()))

    v_basis = monomial_basis(n, spec.deg_v)
    basis_of = {
        "sigma_A": monomial_basis(n, d_main // 2),
        "s1": monomial_basis(n, ds_main // 2),
        "s2": monomial_basis(n, ds_main // 2),
        "sigma_B": monomial_basis(n, d_side // 2),
        "s3": monomial_basis(n, ds_side // 2),
        "s4": monomial_basis(n, ds_side // 2),
        "sigma_C": monomial_basis(n, d_side // 2),
        "s5": monomial_basis(n, ds_side // 2),
    }
    names = list(basis_of)
    problem = SdpProblem(block_dims=[len(basis_of[k]) for k in names] + [1],
                         n_free=len(v_basis))
    templates = [SosTemplate(basis_of[k], i) for i, k in enumerate(names)]
    tpl = dict(zip(names, templates))

    # decrease identity: v(F) - lam v + s1 w - s2 g - sigma_A = 0
    lhs = ParamPoly(n)
    powers = {}
    for k, alpha in enumerate(v_basis):
        comp = Polynomial.constant(n, 1.0)
        for i, ai in enumerate(alpha):
            if ai:
                key = (i, ai)
                if key not in powers:
                    powers[key] = F[i].pow(ai)
                comp = comp.mul(powers[key])
        lhs.add_param_poly(k, comp)                      # v o F
        lhs.add_param_poly(k, Polynomial(n, {alpha: 1.0}), -spec.lam)  # -lam v
    encode_sos_identity(lhs, [tpl["sigma_A"], tpl["s1"], tpl["s2"]],
                        [None, w, g], [-1.0, 1.0, -1.0], problem, d_main)

    # out-of-safe negativity: -v + s3 w0 - s4 w - sigma_B = 0
    lhs = ParamPoly(n)
    for k, alpha in enumerate(v_basis):
        lhs.add_param_poly(k, Polynomial(n, {alpha: 1.0}), -1.0)
    encode_sos_identity(lhs, [tpl["sigma_B"], tpl["s3"], tpl["s4"]],
                        [None, w0, w], [-1.0, 1.0, -1.0], problem, d_side)

    # target bound: M - v + s5 g - sigma_C = 0
    lhs = ParamPoly(n)
    lhs.add_poly(Polynomial.constant(n, spec.M))
    for k, alpha in enumerate(v_basis):
        lhs.add_param_poly(k, Polynomial(n, {alpha: 1.0}), -1.0)
    encode_sos_identity(lhs, [tpl["sigma_C"], tpl["s5"]],
                        [None, g], [-1.0, 1.0], problem, d_side)

    # v(x0) - slack = eps_pos, slack >= 0 via the trailing 1x1 block
    n_cone = problem.n_cone
    slack_col = problem.gram_entry_index(len(names), 0, 0)
    cols = [slack_col]
    coefs = [-1.0]
    x0_row = np.array([float(np.prod(x0 ** np.array(a))) for a in v_basis])
    for k, val in enumerate(x0_row):
        if val != 0.0:
            cols.append(n_cone + k)
            coefs.append(val)
    floor = spec.eps_pos if vx0_floor is None else max(vx0_floor, spec.eps_pos)
    problem.equalities.append((np.array(cols), np.array(coefs), floor))

    # objective: maximize v(x0); empty for the pinned feasibility re-solve
    if maximize:
        problem.objective = {n_cone + k: -float(x0_row[k])
                             for k in range(len(v_basis)) if x0_row[k] != 0.0}

    enc = GbfEncoding(spec=spec, scales=scales, v_basis=v_basis,
                      templates=templates, problem=problem)
    enc.scaled = dict(F=F, w=w, g=g, w0=w0, x0=x0, d_main=d_main, d_side=d_side)
    return enc


class SynthesisError(RuntimeError):
    pass


@dataclass
class ExtractedCertificate:
    v: Polynomial                    # original coordinates
    multipliers: list[Polynomial]    # s1..s5, original coordinates
    lam: float
    M: float
    x0: np.ndarray
    objective: float                 # achieved v(x0)
    residual: float                  # worst equality residual at the solution


def gram_to_poly(basis, Q: np.ndarray, nvars: int) -> Polynomial:
    terms: dict = {}
    for i, ei in enumerate(basis):
        for j, ej in enumerate(basis):
            e = tuple(a + b for a, b in zip(ei, ej))
            terms[e] = terms.get(e, 0.0) + Q[i, j]
    return Polynomial(nvars, terms)


def extract_certificate(enc: GbfEncoding, sol: SdpSolution,
                        residual_tol: float = 1e-7) -> ExtractedCertificate:
    if sol.status != SolveStatus.FEASIBLE:
        raise SynthesisError(f"solver status {sol.status.name}; no certificate")
    spec = enc.spec
    n = spec.w.nvars
    inv = 1.0 / enc.scales

    # independent residual check of every emitted equality
    u_full = np.concatenate([np.concatenate([vec_of(sol.gram_blocks[b])
                                             for b in range(len(enc.problem.block_dims))]),
                             sol.free_vars])
    worst = 0.0
    for cols, coefs, rhs in enc.problem.equalities:
        worst = max(worst, abs(float(u_full[cols] @ coefs) - rhs))
    if worst > residual_tol:
        raise SynthesisError(f"certificate residual {worst:.2e} exceeds {residual_tol:.0e}")

    v_scaled = Polynomial(n, dict(zip(enc.v_basis, sol.free_vars)))
    v = v_scaled.rescale_vars(inv)
    mult_names = [1, 2, 4, 5, 7]  # template indices of s1, s2, s3, s4, s5
    mults = [gram_to_poly(enc.templates[k].basis, sol.gram_blocks[k], n)
             .rescale_vars(inv) for k in mult_names]

    vx0 = v.eval(spec.x0)
    if vx0 < spec.eps_pos * (1 - 1e-6) - residual_tol:
        raise SynthesisError(f"v(x0) = {vx0:.3e} fell below eps_pos")
    return ExtractedCertificate(v=v, multipliers=mults, lam=spec.lam, M=spec.M,
                                x0=spec.x0.copy(), objective=vx0, residual=worst)


def vec_of(M: np.ndarray) -> np.ndarray:
    from .conic import svec
    return svec(M)


def synthesize_gbf(spec: GbfSynthesisSpec, tol: float = 1e-8,
                   max_iters: int = 200):
    """Build, solve, and decode one synthesis attempt at fixed degrees.

    Maximizing v(x0) tends to finish on a degenerate optimal face, where
    path-following stalls short of certified accuracy.  When that happens
    the (near-optimal) objective estimate from the stalled run seeds a
    second, pinned pure-feasibility solve: v(x0) >= 0.9 * best, no
    objective.  That problem has interior on both sides and converges
    cleanly, and 90 percent of the achievable v(x0) is all the downstream
    horizon bounds need.
    """
    enc = build_gbf_sdp(spec)
    sol = solve_sdp(enc.problem, tol=tol, max_iters=max_iters)
    if sol.status == SolveStatus.FEASIBLE:
        return enc, sol, extract_certificate(enc, sol)
    if sol.status == SolveStatus.MAX_ITER and np.isfinite(sol.objective):
        best_vx0 = -sol.objective
        if best_vx0 > spec.eps_pos:
            enc = build_gbf_sdp(spec, vx0_floor=0.9 * best_vx0, maximize=False)
            sol = solve_sdp(enc.problem, tol=tol, max_iters=max_iters)
            if sol.status == SolveStatus.FEASIBLE:
                return enc, sol, extract_certificate(enc, sol)
    return enc, sol, None
