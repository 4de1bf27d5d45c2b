"""Dense conic interior-point solver for the toolkit's SDPs and LPs.

One homogeneous self-dual (HSD) predictor-corrector path-following core
handles both problem classes.  Canonical form:

    minimize    c' u
    subject to  A_cone u_cone + A_free u_free = b
                u_cone in K,  u_free unrestricted

where K is a product of dense PSD blocks (svec'd, off-diagonals scaled by
sqrt(2)) and nonnegative-orthant blocks.  Free variables are eliminated by
a QR presolve, the reduced problem is solved by Mehrotra-style predictor-
corrector steps with Nesterov-Todd scaling, and the Schur complement
A W W' A' is factored densely per iteration.  Infeasibility and
unboundedness are certified through the self-dual embedding (tau/kappa).

Problems here are small (PSD blocks up to ~100, a few hundred equalities),
so everything is dense numpy and fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg as sla

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 200


class SolveStatus(Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max_iter"


class NumericalBreakdown(RuntimeError):
    """Singular KKT system or loss of cone interior during factorization."""


# ---------------------------------------------------------------------------
# cone descriptions and svec helpers
# ---------------------------------------------------------------------------

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class ConeBlock:
    kind: str  # "s" (PSD, dim = matrix order) or "l" (nonnegative orthant)
    dim: int

    @property
    def veclen(self) -> int:
        return self.dim * (self.dim + 1) // 2 if self.kind == "s" else self.dim

    @property
    def order(self) -> int:
        """Barrier parameter contribution."""
        return self.dim


def _triu_indices(d):
    iu, ju = np.triu_indices(d)
    return iu, ju


def svec(M: np.ndarray) -> np.ndarray:
    d = M.shape[0]
    iu, ju = _triu_indices(d)
    v = M[iu, ju].copy()
    v[iu != ju] *= SQRT2
    return v


def smat(v: np.ndarray, d: int) -> np.ndarray:
    iu, ju = _triu_indices(d)
    M = np.zeros((d, d))
    off = iu != ju
    vals = v.copy()
    vals[off] /= SQRT2
    M[iu, ju] = vals
    M[ju, iu] = vals
    return M


class _BlockOps:
    """Per-block vector/matrix plumbing bound to a slice of the cone vector."""

    def __init__(self, block: ConeBlock, offset: int):
        self.block = block
        self.sl = slice(offset, offset + block.veclen)
        if block.kind == "s":
            self.iu, self.ju = _triu_indices(block.dim)
            self.off = self.iu != self.ju

    def identity(self):
        if self.block.kind == "l":
            return np.ones(self.block.dim)
        return svec(np.eye(self.block.dim))

    def mats(self, rows: np.ndarray) -> np.ndarray:
        """Stack of symmetric matrices from (k, veclen) svec rows."""
        d = self.block.dim
        k = rows.shape[0]
        out = np.zeros((k, d, d))
        vals = rows.copy()
        vals[:, self.off] /= SQRT2
        out[:, self.iu, self.ju] = vals
        out[:, self.ju, self.iu] = vals
        return out

    def svecs(self, mats: np.ndarray) -> np.ndarray:
        out = mats[:, self.iu, self.ju].copy()
        out[:, self.off] *= SQRT2
        return out


# ---------------------------------------------------------------------------
# problem containers
# ---------------------------------------------------------------------------


@dataclass
class ConicProblem:
    """min c_cone'u + c_free'y  s.t.  A_cone u + A_free y = b, u in K."""

    blocks: list[ConeBlock]
    A_cone: np.ndarray
    A_free: np.ndarray  # (m, 0) allowed
    b: np.ndarray
    c_cone: np.ndarray
    c_free: np.ndarray

    def __post_init__(self):
        n = sum(bl.veclen for bl in self.blocks)
        m = self.b.shape[0]
        if self.A_cone.shape != (m, n):
            raise ValueError(f"A_cone shape {self.A_cone.shape} != ({m}, {n})")
        if self.A_free.shape[0] != m:
            raise ValueError("A_free row count mismatch")
        if self.c_cone.shape != (n,) or self.c_free.shape != (self.A_free.shape[1],):
            raise ValueError("objective dimension mismatch")


@dataclass
class ConicSolution:
    status: SolveStatus
    u: np.ndarray | None = None       # cone part of the primal solution
    free: np.ndarray | None = None    # free part of the primal solution
    y: np.ndarray | None = None       # equality multipliers
    z: np.ndarray | None = None       # dual cone slack
    objective: float = np.nan
    primal_residual: float = np.nan
    dual_residual: float = np.nan
    duality_gap: float = np.nan
    iterations: int = 0


# ---------------------------------------------------------------------------
# the HSD predictor-corrector core (pure cone form, no free variables)
# ---------------------------------------------------------------------------


class _Scaling:
    """Nesterov-Todd scaling for a product cone at a given interior pair."""

    def __init__(self, ops: list[_BlockOps], u: np.ndarray, z: np.ndarray):
        self.ops = ops
        self.w_l = {}       # per l-block: w vector
        self.lam = np.zeros_like(u)
        self.R = {}         # per s-block: R with G = R R'
        self.Rinv = {}
        for k, op in enumerate(ops):
            ub, zb = u[op.sl], z[op.sl]
            if op.block.kind == "l":
                if np.any(ub <= 0) or np.any(zb <= 0):
                    raise NumericalBreakdown("orthant iterate left the cone")
                w = np.sqrt(ub / zb)
                self.w_l[k] = w
                self.lam[op.sl] = np.sqrt(ub * zb)
            else:
                d = op.block.dim
                X, Z = smat(ub, d), smat(zb, d)
                try:
                    Lx = np.linalg.cholesky(X)
                    Lz = np.linalg.cholesky(Z)
                except np.linalg.LinAlgError as exc:
                    raise NumericalBreakdown("PSD iterate left the cone") from exc
                U, s, Vt = np.linalg.svd(Lz.T @ Lx)
                if np.min(s) <= 0:
                    raise NumericalBreakdown("degenerate NT scaling")
                sq = np.sqrt(s)
                self.R[k] = Lx @ Vt.T / sq
                self.Rinv[k] = (U / sq).T @ Lz.T
                lam_mat = np.zeros((d, d))
                np.fill_diagonal(lam_mat, s)
                self.lam[op.sl] = svec(lam_mat)

    def scale_primal(self, du: np.ndarray) -> np.ndarray:
        """W^{-T} du: scaled-space image of a primal direction."""
        out = np.empty_like(du)
        for k, op in enumerate(self.ops):
            if op.block.kind == "l":
                out[op.sl] = du[op.sl] / self.w_l[k]
            else:
                Ri = self.Rinv[k]
                D = smat(du[op.sl], op.block.dim)
                out[op.sl] = svec(Ri @ D @ Ri.T)
        return out

    def scale_dual(self, dz: np.ndarray) -> np.ndarray:
        """W dz: scaled-space image of a dual direction."""
        out = np.empty_like(dz)
        for k, op in enumerate(self.ops):
            if op.block.kind == "l":
                out[op.sl] = dz[op.sl] * self.w_l[k]
            else:
                R = self.R[k]
                D = smat(dz[op.sl], op.block.dim)
                out[op.sl] = svec(R.T @ D @ R)
        return out

    def apply_phi(self, rows: np.ndarray) -> np.ndarray:
        """Phi rows' = (G kron_s G) applied to each row; rows is (k, n)."""
        out = np.empty_like(rows)
        for k, op in enumerate(self.ops):
            if op.block.kind == "l":
                out[:, op.sl] = rows[:, op.sl] * (self.w_l[k] ** 2)[None, :]
            else:
                G = self.R[k] @ self.R[k].T
                T = op.mats(rows[:, op.sl])
                out[:, op.sl] = op.svecs(np.einsum("ab,kbc,cd->kad", G, T, G,
                                                   optimize=True))
        return out

    def jordan_div_lambda(self, v: np.ndarray) -> np.ndarray:
        """Solve lam o y = v for y in scaled space."""
        out = np.empty_like(v)
        for k, op in enumerate(self.ops):
            if op.block.kind == "l":
                out[op.sl] = v[op.sl] / self.lam[op.sl]
            else:
                d = op.block.dim
                lam_diag = np.diag(smat(self.lam[op.sl], d))
                M = smat(v[op.sl], d)
                out[op.sl] = svec(2.0 * M / (lam_diag[:, None] + lam_diag[None, :]))
        return out

    def jordan_prod(self, a: np.ndarray, bvec: np.ndarray) -> np.ndarray:
        """Symmetrized Jordan product a o b of scaled-space vectors."""
        out = np.empty_like(a)
        for k, op in enumerate(self.ops):
            if op.block.kind == "l":
                out[op.sl] = a[op.sl] * bvec[op.sl]
            else:
                d = op.block.dim
                A = smat(a[op.sl], d)
                B = smat(bvec[op.sl], d)
                out[op.sl] = svec(0.5 * (A @ B + B @ A))
        return out

    def lam_sq(self) -> np.ndarray:
        return self.jordan_prod(self.lam, self.lam)

    def max_step(self, scaled_dir: np.ndarray) -> float:
        """sup alpha with lam + alpha*dir staying in the cone."""
        alpha = np.inf
        for k, op in enumerate(self.ops):
            lam, d = self.lam[op.sl], scaled_dir[op.sl]
            if op.block.kind == "l":
                neg = d < 0
                if np.any(neg):
                    alpha = min(alpha, np.min(-lam[neg] / d[neg]))
            else:
                dim = op.block.dim
                lam_diag = np.diag(smat(lam, dim))
                D = smat(d, dim)
                scaled = D / np.sqrt(np.outer(lam_diag, lam_diag))
                emin = np.linalg.eigvalsh(scaled)[0]
                if emin < 0:
                    alpha = min(alpha, 1.0 / (-emin))
        return alpha


def _identity_point(ops):
    n = ops[-1].sl.stop if ops else 0
    e = np.zeros(n)
    for op in ops:
        e[op.sl] = op.identity()
    return e


def _solve_hsd(blocks, A, b, c, tol, max_iters):
    """HSD predictor-corrector on min c'u, A u = b, u in K (no free vars)."""
    ops, off = [], 0
    for bl in blocks:
        ops.append(_BlockOps(bl, off))
        off += bl.veclen
    n = off
    m = A.shape[0]
    nu = sum(bl.order for bl in blocks)

    u = _identity_point(ops)
    z = u.copy()
    y = np.zeros(m)
    tau, kappa = 1.0, 1.0

    norm_b = 1.0 + np.linalg.norm(b)
    norm_c = 1.0 + np.linalg.norm(c)

    best = None
    best_it = 0
    it = 0

    for it in range(max_iters):
        r_p = A @ u - b * tau
        r_d = -A.T @ y - z + c * tau
        r_g = b @ y - c @ u - kappa
        mu = (u @ z + tau * kappa) / (nu + 1)

        # -- convergence / certificate tests on the deflated point
        xhat, yhat, zhat = u / tau, y / tau, z / tau
        pres_abs = np.linalg.norm(A @ xhat - b)
        dres_abs = np.linalg.norm(A.T @ yhat + zhat - c)
        pres = pres_abs / norm_b
        dres = dres_abs / norm_c
        pobj, dobj = c @ xhat, b @ yhat
        gap_abs = xhat @ zhat
        relgap = gap_abs / (1.0 + abs(pobj) + abs(dobj))
        if (pres <= tol and dres <= tol and pres_abs <= 10 * tol
                and dres_abs <= 10 * tol
                and (gap_abs <= tol or relgap <= tol)):
            return dict(status=SolveStatus.FEASIBLE, u=xhat, y=yhat, z=zhat,
                        objective=pobj, pres=pres, dres=dres, gap=gap_abs,
                        iterations=it)
        by, cu = b @ y, c @ u
        if by > 0:
            # candidate primal-infeasibility certificate A'y + z = 0, b'y > 0
            if np.linalg.norm(A.T @ y + z) / by <= tol * norm_c:
                return dict(status=SolveStatus.INFEASIBLE, u=None,
                            y=y / by, z=z / by, objective=np.nan,
                            pres=pres, dres=dres, gap=gap_abs, iterations=it)
        if cu < 0:
            # candidate unboundedness certificate A u = 0, c'u < 0, u in K
            if np.linalg.norm(A @ u) / (-cu) <= tol * norm_b:
                return dict(status=SolveStatus.UNBOUNDED, u=u / (-cu),
                            y=None, z=None, objective=np.nan,
                            pres=pres, dres=dres, gap=gap_abs, iterations=it)

        score = max(pres, dres, relgap)
        if best is None or score < 0.999 * best[0]:
            best = (score, dict(u=xhat, y=yhat, z=zhat, objective=pobj,
                                pres=pres, dres=dres, gap=gap_abs))
            best_it = it
        if it - best_it > 30:
            break  # no headway for a long stretch; report the best iterate

        if pres <= 100 * tol and dres <= 100 * tol and relgap <= 100 * tol:
            polished = _polish(ops, A, b, c, xhat, yhat, zhat, tol)
            if polished is not None:
                polished["iterations"] = it
                return polished

        W = _Scaling(ops, u, z)
        lam_sq = W.lam_sq()

        # Schur complement M = A Phi A' with Phi = W W'
        PhiAT = W.apply_phi(A)          # rows are Phi applied to rows of A
        M = A @ PhiAT.T
        M = 0.5 * (M + M.T)
        Mf = None
        jitter = 0.0
        for attempt in range(4):
            try:
                Mf = sla.cho_factor(
                    M if jitter == 0.0 else M + jitter * np.eye(m),
                    check_finite=False)
                break
            except sla.LinAlgError:
                base = np.abs(np.diag(M)).max() if m else 1.0
                jitter = base * (1e-14 if jitter == 0.0 else 1e4 * jitter / base)
        if Mf is None:
            raise NumericalBreakdown("singular Schur complement")

        def schur_solve(rhs):
            x = sla.cho_solve(Mf, rhs, check_finite=False)
            x += sla.cho_solve(Mf, rhs - M @ x, check_finite=False)
            return x

        Phic = W.apply_phi(c[None, :])[0]
        u1 = schur_solve(b + A @ Phic)
        bac = b - A @ Phic
        cPhic = c @ Phic

        def solve_linear(R1, R2, R3, G4, G5):
            """One pass through the reduced Newton solve for arbitrary rhs.

            System: A du - b dtau = R1; -A'dy - dz + c dtau = R2;
            b'dy - c'du - dkappa = R3; W^{-T}du + W dz = G4;
            tau dkappa + kappa dtau = G5.
            """
            h = R2 + _apply_winv(W, G4)
            Phih = W.apply_phi(h[None, :])[0]
            u2 = schur_solve(R1 - A @ Phih)
            denom = bac @ u1 + cPhic + kappa / tau
            if abs(denom) < 1e-300:
                raise NumericalBreakdown("degenerate tau step")
            dtau = (R3 + c @ Phih + G5 / tau - bac @ u2) / denom
            dy = u2 + dtau * u1
            du = W.apply_phi((A.T @ dy - c * dtau + h)[None, :])[0]
            dz = -A.T @ dy + c * dtau - R2
            dkappa = (G5 - kappa * dtau) / tau
            return du, dy, dz, dtau, dkappa

        def apply_system(d):
            du, dy, dz, dtau, dkappa = d
            return (A @ du - b * dtau,
                    -A.T @ dy - dz + c * dtau,
                    b @ dy - c @ du - dkappa,
                    W.scale_primal(du) + W.scale_dual(dz),
                    tau * dkappa + kappa * dtau)

        def _amax(v):
            arr = np.atleast_1d(np.asarray(v, dtype=float))
            return float(np.abs(arr).max()) if arr.size else 0.0

        def solve_refined(R):
            d = list(solve_linear(*R))
            scale = max(max(_amax(r) for r in R), 1e-30)
            for _ in range(3):
                Ed = apply_system(d)
                res = [R[i] - Ed[i] for i in range(5)]
                if max(_amax(r) for r in res) <= 1e-13 * scale:
                    break
                corr = solve_linear(*res)
                for i in range(5):
                    d[i] = d[i] + corr[i]
            return d

        def solve_dirs(dc, dtk, eta):
            return solve_refined((-eta * r_p, -eta * r_d, -eta * r_g,
                                  W.jordan_div_lambda(dc), dtk))

        def step_limit(du_, dz_, dtau_, dkap_):
            a = min(W.max_step(W.scale_primal(du_)), W.max_step(W.scale_dual(dz_)))
            if dtau_ < 0:
                a = min(a, -tau / dtau_)
            if dkap_ < 0:
                a = min(a, -kappa / dkap_)
            return a

        # predictor (affine scaling) direction
        du_a, dy_a, dz_a, dtau_a, dkap_a = solve_dirs(-lam_sq, -tau * kappa, 1.0)
        alpha_a = min(1.0, step_limit(du_a, dz_a, dtau_a, dkap_a))
        mu_aff = ((u + alpha_a * du_a) @ (z + alpha_a * dz_a)
                  + (tau + alpha_a * dtau_a) * (kappa + alpha_a * dkap_a)) / (nu + 1)
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3
        sigma = max(sigma, (1.0 - alpha_a) ** 3)

        # corrector, with a fallback ladder when higher-order terms misfire
        dus_a = W.scale_primal(du_a)
        dzs_a = W.scale_dual(dz_a)
        e_vec = _identity_point(ops)
        candidates = [
            (-lam_sq + sigma * mu * e_vec - W.jordan_prod(dus_a, dzs_a),
             -tau * kappa + sigma * mu - dtau_a * dkap_a, 1.0 - sigma),
            (-lam_sq + sigma * mu * e_vec, -tau * kappa + sigma * mu, 1.0 - sigma),
            (-lam_sq + mu * e_vec, -tau * kappa + mu, 0.0),  # pure centering
        ]
        alpha = 0.0
        for dc, dtk, eta in candidates:
            du, dy, dz, dtau, dkappa = solve_dirs(dc, dtk, eta)
            alpha = min(1.0, 0.98 * step_limit(du, dz, dtau, dkappa))
            if alpha > 1e-6:
                break
        if alpha <= 1e-10:
            break

        # retreat until the iterate keeps a minimal centrality margin
        for _ in range(8):
            cen, mu_new = _centrality(ops, u + alpha * du, z + alpha * dz,
                                      tau + alpha * dtau, kappa + alpha * dkappa, nu)
            if cen >= 1e-4 * mu_new:
                break
            alpha *= 0.7

        u = u + alpha * du
        z = z + alpha * dz
        y = y + alpha * dy
        tau += alpha * dtau
        kappa += alpha * dkappa
        # the embedding is homogeneous: renormalize so tau stays at 1 and
        # mu tracks the deflated gap instead of a scale drift
        if tau > 0:
            u /= tau
            z /= tau
            y /= tau
            kappa /= tau
            tau = 1.0

    out = dict(status=SolveStatus.MAX_ITER, u=None, y=None, z=None,
               objective=np.nan, pres=np.nan, dres=np.nan, gap=np.nan,
               iterations=it + 1)
    if best is not None:
        out.update(best[1])
        out["status"] = SolveStatus.MAX_ITER
    return out


def _polish(ops, A, b, c, xhat, yhat, zhat, tol):
    """Project a near-optimal triple onto the KKT equalities.

    Moves the primal point onto {Ax = b} by the minimum-norm correction and
    rebuilds the dual slack as c - A'y.  Displacements are of residual size,
    so cone membership degrades by at most that much; accept only if the
    polished triple meets the certified-feasibility envelope with cone
    eigenvalues above -1e-8.
    """
    m = A.shape[0]
    try:
        AAt = A @ A.T
        AAt[np.diag_indices_from(AAt)] *= 1.0 + 1e-14
        F = sla.cho_factor(AAt, check_finite=False)
    except sla.LinAlgError:
        return None
    r = b - A @ xhat
    x = xhat + A.T @ sla.cho_solve(F, r, check_finite=False)
    dual_r = c - zhat - A.T @ yhat
    y = yhat + sla.cho_solve(F, A @ dual_r, check_finite=False)
    z = c - A.T @ y
    pres_abs = np.linalg.norm(A @ x - b)
    dres_abs = np.linalg.norm(A.T @ y + z - c)
    gap_abs = abs(x @ z)
    pobj, dobj = c @ x, b @ y
    relgap = gap_abs / (1.0 + abs(pobj) + abs(dobj))
    norm_b = 1.0 + np.linalg.norm(b)
    norm_c = 1.0 + np.linalg.norm(c)
    if not (pres_abs / norm_b <= tol and dres_abs / norm_c <= tol
            and pres_abs <= 10 * tol and dres_abs <= 10 * tol
            and (gap_abs <= tol or relgap <= tol)):
        return None
    for op in ops:
        if op.block.kind == "l":
            if min(x[op.sl].min(), z[op.sl].min()) < -1e-8:
                return None
        else:
            d = op.block.dim
            if (np.linalg.eigvalsh(smat(x[op.sl], d))[0] < -1e-8
                    or np.linalg.eigvalsh(smat(z[op.sl], d))[0] < -1e-8):
                return None
    return dict(status=SolveStatus.FEASIBLE, u=x, y=y, z=z, objective=pobj,
                pres=pres_abs / norm_b, dres=dres_abs / norm_c, gap=gap_abs)


def _centrality(ops, u, z, tau, kappa, nu):
    """Smallest complementarity eigenvalue and mu of a tentative iterate."""
    mu = (u @ z + tau * kappa) / (nu + 1)
    worst = tau * kappa
    for op in ops:
        ub, zb = u[op.sl], z[op.sl]
        if op.block.kind == "l":
            if np.any(ub <= 0) or np.any(zb <= 0):
                return -1.0, mu
            worst = min(worst, np.min(ub * zb))
        else:
            d = op.block.dim
            X, Z = smat(ub, d), smat(zb, d)
            try:
                L = np.linalg.cholesky(X)
            except np.linalg.LinAlgError:
                return -1.0, mu
            worst = min(worst, np.linalg.eigvalsh(L.T @ Z @ L)[0])
    return worst, mu


def _apply_winv(W: _Scaling, v: np.ndarray) -> np.ndarray:
    """W^{-1} v for a scaled dual-space vector v."""
    out = np.empty_like(v)
    for k, op in enumerate(W.ops):
        if op.block.kind == "l":
            out[op.sl] = v[op.sl] / W.w_l[k]
        else:
            Ri = W.Rinv[k]
            D = smat(v[op.sl], op.block.dim)
            out[op.sl] = svec(Ri.T @ D @ Ri)
    return out


# ---------------------------------------------------------------------------
# free-variable elimination wrapper
# ---------------------------------------------------------------------------


def solve_conic(problem: ConicProblem, tol: float = DEFAULT_TOL,
                max_iters: int = DEFAULT_MAX_ITERS) -> ConicSolution:
    """Solve a mixed cone/free problem; free variables go through QR presolve.

    Data is normalized internally (b and c scaled to unit-ish norm) and the
    solution unscaled on return; reported residuals refer to the original
    data, and duality_gap is the relative complementarity gap.
    """
    # row equilibration, then global (b, c) normalization
    stacked = np.hstack([problem.A_cone, problem.A_free,
                         problem.b[:, None]])
    row_norm = np.abs(stacked).max(axis=1)
    d_row = 1.0 / np.clip(row_norm, 1e-8, 1e8)
    A_cone = problem.A_cone * d_row[:, None]
    A_free = problem.A_free * d_row[:, None]
    b_row = problem.b * d_row
    sb = max(1.0, float(np.linalg.norm(b_row)))
    sc = max(1.0, float(np.linalg.norm(problem.c_cone)),
             float(np.linalg.norm(problem.c_free)) if problem.c_free.size else 1.0)
    scaled = ConicProblem(problem.blocks, A_cone, A_free,
                          b_row / sb, problem.c_cone / sc,
                          problem.c_free / sc)
    sol = _solve_conic_core(scaled, tol, max_iters)
    if sol.y is not None:
        sol.y = sol.y * d_row
    if sol.status == SolveStatus.MAX_ITER and np.isfinite(sol.objective):
        sol.objective *= sb * sc   # best-iterate estimate, not certified
    if sol.status == SolveStatus.FEASIBLE:
        sol.u = sol.u * sb
        sol.free = sol.free * sb
        sol.y = sol.y * sc
        sol.z = sol.z * sc
        A, F, b = problem.A_cone, problem.A_free, problem.b
        c, cf = problem.c_cone, problem.c_free
        sol.objective = c @ sol.u + (cf @ sol.free if cf.size else 0.0)
        sol.primal_residual = np.linalg.norm(A @ sol.u + F @ sol.free - b)
        dres = np.linalg.norm(A.T @ sol.y + sol.z - c)
        if F.size:
            dres = max(dres, np.linalg.norm(F.T @ sol.y - cf))
        sol.dual_residual = dres
        gap = abs(sol.u @ sol.z)
        sol.duality_gap = gap / (1.0 + abs(sol.objective) + abs(b @ sol.y))
    return sol


def _solve_conic_core(problem: ConicProblem, tol: float,
                      max_iters: int) -> ConicSolution:
    A, F, b = problem.A_cone, problem.A_free, problem.b
    c, cf = problem.c_cone, problem.c_free
    m, nf = F.shape

    if nf > 0:
        Q, R = np.linalg.qr(F, mode="complete")  # Q (m,m), R (m,nf)
        Rtop = R[:nf, :]
        diag = np.abs(np.diag(Rtop))
        if nf > m or np.any(diag < 1e-10 * max(1.0, diag.max(initial=0.0))):
            raise ValueError("free-variable columns are linearly dependent")
        Q1, Q2 = Q[:, :nf], Q[:, nf:]
        Abar = Q2.T @ A
        bbar = Q2.T @ b
        # objective on cone vars after substituting the free part out
        w = sla.solve_triangular(Rtop.T, cf, lower=True, check_finite=False)
        cbar = c - A.T @ (Q1 @ w)
        offset = w @ (Q1.T @ b)
        y_shift = Q1 @ w
    else:
        Q1 = Rtop = None
        Abar, bbar, cbar, offset, y_shift = A, b, c, 0.0, np.zeros(m)

    Abar, bbar, keep = _drop_dependent_rows(Abar, bbar)

    raw = _solve_hsd(problem.blocks, Abar, bbar, cbar, tol, max_iters)

    sol = ConicSolution(status=raw["status"], iterations=raw["iterations"],
                        primal_residual=raw["pres"], dual_residual=raw["dres"],
                        duality_gap=raw["gap"])
    if raw["status"] == SolveStatus.FEASIBLE:
        u = raw["u"]
        if nf > 0:
            rhs = Q1.T @ (b - A @ u)
            free = sla.solve_triangular(Rtop, rhs, lower=False, check_finite=False)
        else:
            free = np.zeros(0)
        y = _lift_rows(raw["y"], keep, m if nf == 0 else Q2.shape[1])
        if nf > 0:
            y = Q2 @ y + y_shift
        sol.u, sol.free, sol.y, sol.z = u, free, y, raw["z"]
        # residuals of the reconstructed full point (wrapper re-checks on
        # original-scale data)
        sol.objective = raw["objective"] + offset
        sol.primal_residual = np.linalg.norm(A @ u + F @ free - b)
        sol.dual_residual = np.linalg.norm(A.T @ y + sol.z - c)
        if nf > 0:
            sol.dual_residual = max(sol.dual_residual,
                                    np.linalg.norm(F.T @ y - cf))
        sol.duality_gap = u @ sol.z
    elif (raw["status"] == SolveStatus.MAX_ITER and raw["objective"] is not None
          and np.isfinite(raw["objective"])):
        # best-iterate objective estimate for two-phase callers
        sol.objective = raw["objective"] + offset
    return sol


def _drop_dependent_rows(A, b):
    """Remove linearly dependent equality rows (consistency checked)."""
    m = A.shape[0]
    if m == 0:
        return A, b, np.arange(0)
    q, r, p = sla.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    thresh = max(A.shape) * np.finfo(float).eps * (diag.max(initial=0.0) + 1e-300)
    rank = int(np.sum(diag > max(thresh, 1e-12)))
    if rank == m:
        return A, b, np.arange(m)
    keep = np.sort(p[:rank])
    Ak, bk = A[keep], b[keep]
    # dropped rows must be consistent with the kept ones
    coeff, *_ = np.linalg.lstsq(Ak.T, A.T, rcond=None)
    b_pred = coeff.T @ bk
    if np.max(np.abs(b_pred - b), initial=0.0) > 1e-8 * (1 + np.abs(b).max(initial=0.0)):
        # keep the inconsistent system; the solver will certify infeasibility
        return A, b, np.arange(m)
    return Ak, bk, keep


def _lift_rows(y_red, keep, m):
    y = np.zeros(m)
    y[keep] = y_red
    return y


# ---------------------------------------------------------------------------
# SDP interface
# ---------------------------------------------------------------------------


@dataclass
class SdpProblem:
    """Equality-form SDP over PSD blocks plus free scalar variables.

    Variable layout is [svec(block_0), ..., svec(block_{B-1}), free vars];
    each equality is a sparse linear functional over that layout.
    """

    block_dims: list[int]
    n_free: int
    # each row: (indices, coefficients, rhs) over the svec+free layout
    equalities: list[tuple[np.ndarray, np.ndarray, float]] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)  # minimize

    @property
    def n_cone(self) -> int:
        return sum(d * (d + 1) // 2 for d in self.block_dims)

    def svec_offset(self, block_index: int) -> int:
        return sum(d * (d + 1) // 2 for d in self.block_dims[:block_index])

    def gram_entry_index(self, block_index: int, i: int, j: int) -> int:
        """Index into the svec layout for entry (i, j), i <= j."""
        d = self.block_dims[block_index]
        if not (0 <= i <= j < d):
            raise ValueError("need 0 <= i <= j < dim")
        return self.svec_offset(block_index) + i * d - i * (i - 1) // 2 + (j - i)

    def to_conic(self) -> ConicProblem:
        n, nf = self.n_cone, self.n_free
        m = len(self.equalities)
        A = np.zeros((m, n + nf))
        b = np.zeros(m)
        for k, (idx, coef, rhs) in enumerate(self.equalities):
            np.add.at(A[k], np.asarray(idx, dtype=int), np.asarray(coef, dtype=float))
            b[k] = rhs
        c = np.zeros(n + nf)
        for i, v in self.objective.items():
            c[i] += v
        blocks = [ConeBlock("s", d) for d in self.block_dims]
        return ConicProblem(blocks, A[:, :n], A[:, n:], b, c[:n], c[n:])


@dataclass
class SdpSolution:
    status: SolveStatus
    gram_blocks: list[np.ndarray] | None
    free_vars: np.ndarray | None
    objective: float
    kkt_residual: float
    duality_gap: float
    iterations: int


def solve_sdp(problem: SdpProblem, tol: float = DEFAULT_TOL,
              max_iters: int = DEFAULT_MAX_ITERS) -> SdpSolution:
    conic = problem.to_conic()
    sol = solve_conic(conic, tol=tol, max_iters=max_iters)
    grams = None
    free = None
    if sol.status == SolveStatus.FEASIBLE:
        grams = []
        off = 0
        for d in problem.block_dims:
            ln = d * (d + 1) // 2
            grams.append(smat(sol.u[off:off + ln], d))
            off += ln
        free = sol.free
    return SdpSolution(status=sol.status, gram_blocks=grams, free_vars=free,
                       objective=sol.objective,
                       kkt_residual=max(sol.primal_residual, sol.dual_residual),
                       duality_gap=sol.duality_gap, iterations=sol.iterations)


# ---------------------------------------------------------------------------
# LP interface
# ---------------------------------------------------------------------------


@dataclass
class LpProblem:
    """min objective'x  s.t.  A x <= b, lower <= x <= upper (entrywise)."""

    objective: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        nv = self.objective.shape[0]
        if self.A.size and self.A.shape[1] != nv:
            raise ValueError("A column count mismatch")
        if self.lower.shape != (nv,) or self.upper.shape != (nv,):
            raise ValueError("bounds shape mismatch")


@dataclass
class LpSolution:
    status: SolveStatus
    x: np.ndarray | None
    objective: float
    iterations: int


def solve_lp(problem: LpProblem, tol: float = DEFAULT_TOL,
             max_iters: int = DEFAULT_MAX_ITERS) -> LpSolution:
    """Inequality-form LP: cone core plus an active-set vertex cleanup.

    The interior-point phase stops at tol; the cleanup then solves for the
    vertex spanned by the most-active rows and keeps it when it is feasible
    and at least as good, which pins the optimum to machine precision on
    non-degenerate instances.
    """
    nv = problem.objective.shape[0]
    rows = [problem.A] if problem.A.size else []
    rhs = [problem.b] if problem.A.size else []
    eye = np.eye(nv)
    fin_up = np.isfinite(problem.upper)
    fin_lo = np.isfinite(problem.lower)
    if np.any(fin_up):
        rows.append(eye[fin_up])
        rhs.append(problem.upper[fin_up])
    if np.any(fin_lo):
        rows.append(-eye[fin_lo])
        rhs.append(-problem.lower[fin_lo])
    if not rows:
        raise ValueError("LP has no rows; nothing constrains the variables")
    G = np.vstack(rows)
    h = np.concatenate(rhs)
    m = G.shape[0]
    referenced = np.any(G != 0.0, axis=0)
    if not np.all(referenced):
        raise ValueError("some variables appear in no row and no finite bound")
    conic = ConicProblem(blocks=[ConeBlock("l", m)],
                         A_cone=np.eye(m), A_free=G, b=h,
                         c_cone=np.zeros(m), c_free=problem.objective)
    sol = solve_conic(conic, tol=tol, max_iters=max_iters)
    if sol.status != SolveStatus.FEASIBLE:
        return LpSolution(sol.status, None, np.nan, sol.iterations)
    x = sol.free
    vx = _vertex_cleanup(G, h, problem.objective, x)
    if vx is not None:
        x = vx
    return LpSolution(SolveStatus.FEASIBLE, x, float(problem.objective @ x),
                      sol.iterations)


def dump_problem_json(problem: SdpProblem, path) -> None:
    """Debug dump for offline inspection.

    Schema: {"block_dims": [...], "n_free": n,
             "equalities": [{"idx": [...], "coef": [...], "rhs": r}, ...],
             "objective": {"<svec-or-free index>": coef, ...}}.
    """
    import json
    payload = {
        "block_dims": list(problem.block_dims),
        "n_free": problem.n_free,
        "equalities": [{"idx": [int(i) for i in idx],
                        "coef": [float(v) for v in coef],
                        "rhs": float(rhs)}
                       for idx, coef, rhs in problem.equalities],
        "objective": {str(k): float(v) for k, v in problem.objective.items()},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=0)


def _vertex_cleanup(G, h, c, x):
    """Snap a near-optimal point to the vertex of its active rows."""
    nv = G.shape[1]
    slack = h - G @ x
    scale = 1.0 + np.abs(h).max(initial=0.0)
    cand = np.flatnonzero(slack <= 1e-5 * scale)
    if len(cand) < nv:
        return None
    sub = G[cand]
    q, r, piv = sla.qr(sub.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if len(diag) < nv or diag[nv - 1] < 1e-10 * max(diag[0], 1e-300):
        return None
    take = cand[piv[:nv]]
    try:
        vx = np.linalg.solve(G[take], h[take])
    except np.linalg.LinAlgError:
        return None
    feas = np.all(G @ vx <= h + 1e-9 * scale)
    better = c @ vx <= c @ x + 1e-9 * (1.0 + abs(c @ x))
    return vx if (feas and better) else None
