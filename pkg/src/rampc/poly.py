"""Sparse multivariate polynomials over float coefficients.

Everything the toolkit manipulates symbolically (dynamics, set membership
functions, certificates, cost templates) is a ``Polynomial``.  The
representation is a map from exponent tuples to coefficients, kept
canonical: zero-ish coefficients are dropped and all exponent tuples have
length ``nvars``.  Term enumeration is deterministic (graded-lex), which
the SOS compiler relies on when matching coefficients.
"""

from __future__ import annotations

import json
import math
from itertools import combinations_with_replacement

import numpy as np

# Coefficients with magnitude below this are treated as float dust and
# removed during canonicalization.  Genuine certificate coefficients are
# bounded away from this by solver tolerances.
CANON_EPS = 1e-14


def _grlex_key(exponents):
    return (sum(exponents), tuple(-e for e in exponents))


def monomial_basis(nvars: int, maxdeg: int) -> list[tuple[int, ...]]:
    """All exponent tuples with total degree <= maxdeg, in graded-lex order.

    The count is C(nvars + maxdeg, maxdeg).
    """
    if nvars < 1:
        raise ValueError(f"nvars must be >= 1, got {nvars}")
    if maxdeg < 0:
        raise ValueError(f"maxdeg must be >= 0, got {maxdeg}")
    out = []
    for deg in range(maxdeg + 1):
        exps = set()
        for combo in combinations_with_replacement(range(nvars), deg):
            e = [0] * nvars
            for i in combo:
                e[i] += 1
            exps.add(tuple(e))
        out.extend(sorted(exps, key=_grlex_key))
    return out


class Polynomial:
    """A sparse polynomial in ``nvars`` real variables."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms=None):
        if nvars < 1:
            raise ValueError(f"nvars must be >= 1, got {nvars}")
        self.nvars = nvars
        canon = {}
        for exp, coef in (terms or {}).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != nvars:
                raise ValueError(
                    f"exponent {exp} has length {len(exp)}, expected {nvars}")
            if any(e < 0 for e in exp):
                raise ValueError(f"negative exponent in {exp}")
            c = canon.get(exp, 0.0) + float(coef)
            if abs(c) <= CANON_EPS:
                canon.pop(exp, None)
            else:
                canon[exp] = c
        self.terms = canon

    # -- constructors ----------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls(nvars, {})

    @classmethod
    def constant(cls, nvars: int, c: float) -> "Polynomial":
        return cls(nvars, {tuple([0] * nvars): c})

    @classmethod
    def variable(cls, nvars: int, i: int) -> "Polynomial":
        if not 0 <= i < nvars:
            raise ValueError(f"variable index {i} out of range for nvars={nvars}")
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): 1.0})

    @classmethod
    def from_coeffs(cls, nvars, exponents, coeffs) -> "Polynomial":
        return cls(nvars, dict(zip(map(tuple, exponents), coeffs)))

    # -- ring operations -------------------------------------------------

    def _check_same(self, other: "Polynomial"):
        if self.nvars != other.nvars:
            raise ValueError(
                f"variable count mismatch: {self.nvars} vs {other.nvars}")

    def add(self, other: "Polynomial") -> "Polynomial":
        self._check_same(other)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, 0.0) + c
        return Polynomial(self.nvars, terms)

    def scale(self, s: float) -> "Polynomial":
        return Polynomial(self.nvars, {e: s * c for e, c in self.terms.items()})

    def sub(self, other: "Polynomial") -> "Polynomial":
        return self.add(other.scale(-1.0))

    def mul(self, other: "Polynomial") -> "Polynomial":
        self._check_same(other)
        terms: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                terms[e] = terms.get(e, 0.0) + c1 * c2
        return Polynomial(self.nvars, terms)

    def pow(self, k: int) -> "Polynomial":
        if k < 0:
            raise ValueError("negative power")
        result = Polynomial.constant(self.nvars, 1.0)
        base = self
        while k:
            if k & 1:
                result = result.mul(base)
            base = base.mul(base) if k > 1 else base
            k >>= 1
        return result

    def __add__(self, other):
        return self.add(other)

    def __sub__(self, other):
        return self.sub(other)

    def __neg__(self):
        return self.scale(-1.0)

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return self.mul(other)
        return self.scale(float(other))

    __rmul__ = __mul__

    def __eq__(self, other):
        return (isinstance(other, Polynomial) and self.nvars == other.nvars
                and self.terms == other.terms)

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    # -- structure -------------------------------------------------------

    def degree(self) -> int:
        """Total degree; zero polynomial has degree 0 by convention."""
        return max((sum(e) for e in self.terms), default=0)

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def sorted_terms(self):
        """(exponent, coefficient) pairs in graded-lex order."""
        return [(e, self.terms[e]) for e in sorted(self.terms, key=_grlex_key)]

    def coefficient(self, exp) -> float:
        return self.terms.get(tuple(exp), 0.0)

    # -- evaluation ------------------------------------------------------

    def __call__(self, x) -> float:
        return self.eval(x)

    def eval(self, x) -> float:
        if len(x) != self.nvars:
            raise ValueError(
                f"point has dimension {len(x)}, expected {self.nvars}")
        total = 0.0
        for e, c in self.terms.items():
            m = c
            for i, ei in enumerate(e):
                if ei:
                    m *= x[i] ** ei
            total += m
        return total

    def eval_many(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate at a batch of points, shape (k, nvars) -> (k,)."""
        pts = np.asarray(pts, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.nvars:
            raise ValueError(f"expected (k, {self.nvars}) array, got {pts.shape}")
        if not self.terms:
            return np.zeros(pts.shape[0])
        exps, coefs = self.as_arrays()
        return (pts[:, None, :] ** exps[None, :, :]).prod(axis=2) @ coefs

    def as_arrays(self):
        """Exponent matrix (T, nvars) and coefficient vector (T,), graded-lex."""
        items = self.sorted_terms()
        if not items:
            return (np.zeros((0, self.nvars), dtype=np.int64), np.zeros(0))
        exps = np.array([e for e, _ in items], dtype=np.int64)
        coefs = np.array([c for _, c in items])
        return exps, coefs

    def compiled(self):
        """Compile to a fast scalar callable f(x_sequence) -> float.

        Generates a closed-form Python expression with powers expanded to
        products; roughly an order of magnitude faster than ``eval`` in the
        rollout hot loops.
        """
        if not self.terms:
            return lambda x: 0.0
        parts = []
        for e, c in self.sorted_terms():
            factors = [repr(c)]
            for i, ei in enumerate(e):
                if ei <= 4:
                    factors.extend([f"x[{i}]"] * ei)
                else:
                    factors.append(f"x[{i}]**{ei}")
            parts.append("*".join(factors))
        src = "lambda x: " + " + ".join(parts)
        return eval(src, {}, {})  # noqa: S307 - source built from floats only

    # -- calculus / substitution -----------------------------------------

    def diff(self, i: int) -> "Polynomial":
        """Partial derivative with respect to variable i."""
        if not 0 <= i < self.nvars:
            raise ValueError(f"variable index {i} out of range")
        terms = {}
        for e, c in self.terms.items():
            if e[i] == 0:
                continue
            de = list(e)
            de[i] -= 1
            terms[tuple(de)] = terms.get(tuple(de), 0.0) + c * e[i]
        return Polynomial(self.nvars, terms)

    def compose(self, subs: list["Polynomial"]) -> "Polynomial":
        """Substitute subs[i] for variable i; all subs share one nvars.

        Satisfies compose(p, subs)(x) == p(subs[0](x), ..., subs[n-1](x)).
        """
        if len(subs) != self.nvars:
            raise ValueError(
                f"need {self.nvars} substitutions, got {len(subs)}")
        if not subs:
            raise ValueError("empty substitution list")
        n_new = subs[0].nvars
        for s in subs:
            if s.nvars != n_new:
                raise ValueError("substitution polynomials disagree on nvars")
        # cache powers of each substitution polynomial
        powers: list[list[Polynomial]] = [[Polynomial.constant(n_new, 1.0)]
                                          for _ in subs]
        out = Polynomial.zero(n_new)
        for e, c in self.sorted_terms():
            term = Polynomial.constant(n_new, c)
            for i, ei in enumerate(e):
                while len(powers[i]) <= ei:
                    powers[i].append(powers[i][-1].mul(subs[i]))
                if ei:
                    term = term.mul(powers[i][ei])
            out = out.add(term)
        return out

    def rescale_vars(self, scales) -> "Polynomial":
        """Return q(y) = p(diag(scales) @ y) without generic composition."""
        if len(scales) != self.nvars:
            raise ValueError("scale vector length mismatch")
        terms = {}
        for e, c in self.terms.items():
            f = c
            for s, ei in zip(scales, e):
                f *= s ** ei
            terms[e] = f
        return Polynomial(self.nvars, terms)

    # -- serialization ---------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "nvars": self.nvars,
            "terms": [{"exp": list(e), "coef": c} for e, c in self.sorted_terms()],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Polynomial":
        return cls(int(d["nvars"]),
                   {tuple(t["exp"]): float(t["coef"]) for t in d["terms"]})

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def loads(cls, s: str) -> "Polynomial":
        return cls.from_json_dict(json.loads(s))

    def __repr__(self):
        if not self.terms:
            return "Polynomial(0)"
        bits = []
        for e, c in self.sorted_terms():
            mono = "*".join(f"x{i}^{ei}" if ei > 1 else f"x{i}"
                            for i, ei in enumerate(e) if ei)
            bits.append(f"{c:+g}" + (f"*{mono}" if mono else ""))
        return "Polynomial(" + " ".join(bits) + ")"


def basis_count(nvars: int, maxdeg: int) -> int:
    return math.comb(nvars + maxdeg, maxdeg)
