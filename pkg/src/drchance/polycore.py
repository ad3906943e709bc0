"""Sparse multivariate polynomials over the partitioned variables (x, omega, a).

Every polynomial lives in a :class:`VariableSpace` with ``n`` decision
variables, ``p`` noise variables and ``t`` parameter variables.  Exponent
vectors are stored in that block order, so a monomial is simply a tuple of
``n + p + t`` non-negative integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Iterable, Mapping, Sequence

import numpy as np

BLOCKS = ("x", "omega", "a")
DROP_TOL = 1e-14


@dataclass(frozen=True)
class VariableSpace:
    n: int
    p: int
    t: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 1 or self.t < 0:
            raise ValueError(f"invalid block sizes n={self.n}, p={self.p}, t={self.t}")

    @property
    def dim(self) -> int:
        return self.n + self.p + self.t

    def block_size(self, block: str) -> int:
        return {"x": self.n, "omega": self.p, "a": self.t}[block]

    def block_slice(self, block: str) -> slice:
        if block == "x":
            return slice(0, self.n)
        if block == "omega":
            return slice(self.n, self.n + self.p)
        if block == "a":
            return slice(self.n + self.p, self.dim)
        raise ValueError(f"unknown block {block!r}")

    def index(self, block: str, i: int) -> int:
        s = self.block_slice(block)
        if not 0 <= i < s.stop - s.start:
            raise IndexError(f"{block}[{i}] out of range")
        return s.start + i

    def block_indices(self, blocks: Iterable[str]) -> list[int]:
        out: list[int] = []
        for b in BLOCKS:
            if b in blocks:
                s = self.block_slice(b)
                out.extend(range(s.start, s.stop))
        return out

    # variable constructors
    def var(self, block: str, i: int = 0) -> "Polynomial":
        e = [0] * self.dim
        e[self.index(block, i)] = 1
        return Polynomial(self, {tuple(e): 1.0})

    def x(self, i: int = 0) -> "Polynomial":
        return self.var("x", i)

    def omega(self, i: int = 0) -> "Polynomial":
        return self.var("omega", i)

    def a(self, i: int = 0) -> "Polynomial":
        return self.var("a", i)

    def const(self, c: float) -> "Polynomial":
        return Polynomial(self, {(0,) * self.dim: float(c)})

    def zero(self) -> "Polynomial":
        return Polynomial(self, {})


def grlex_key(exps: Sequence[int]):
    """Sort key: total degree first, then lexicographic with x1 > x2 > ..."""
    return (sum(exps), tuple(-e for e in exps))


def _exponents_up_to(nvars: int, max_degree: int) -> list[tuple[int, ...]]:
    out = []
    for deg in range(max_degree + 1):
        for combo in combinations_with_replacement(range(nvars), deg):
            e = [0] * nvars
            for v in combo:
                e[v] += 1
            out.append(tuple(e))
    out.sort(key=grlex_key)
    return out


def enumerate_monomials(space: VariableSpace, blocks: Iterable[str], max_degree: int) -> list[tuple[int, ...]]:
    """All monomials in the selected blocks of total degree <= ``max_degree``.

    Returned as full-length exponent tuples (zeros outside the selected
    blocks), in graded lexicographic order.  The count is C(v + d, d) where
    ``v`` is the number of selected variables.
    """
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    idx = space.block_indices(set(blocks))
    out = []
    for e in _exponents_up_to(len(idx), max_degree):
        full = [0] * space.dim
        for k, v in zip(idx, e):
            full[k] = v
        out.append(tuple(full))
    return out


class Polynomial:
    """Immutable sparse polynomial: a map exponent-tuple -> float coefficient."""

    __slots__ = ("space", "terms")

    def __init__(self, space: VariableSpace, terms: Mapping[tuple[int, ...], float] | None = None):
        self.space = space
        clean = {}
        for e, c in (terms or {}).items():
            c = float(c)
            if abs(c) >= DROP_TOL:
                if len(e) != space.dim:
                    raise ValueError(f"exponent {e} does not match dimension {space.dim}")
                clean[tuple(int(v) for v in e)] = c
        self.terms = clean

    # -- basic properties ---------------------------------------------------
    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def block_degree(self, blocks: Iterable[str]) -> int:
        idx = self.space.block_indices(set(blocks))
        return max((sum(e[i] for i in idx) for e in self.terms), default=0)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def uses_only(self, blocks: Iterable[str]) -> bool:
        keep = set(self.space.block_indices(set(blocks)))
        return all(v == 0 for e in self.terms for i, v in enumerate(e) if i not in keep)

    def coef(self, exps: Sequence[int]) -> float:
        return self.terms.get(tuple(exps), 0.0)

    def sorted_terms(self) -> list[tuple[tuple[int, ...], float]]:
        return sorted(self.terms.items(), key=lambda kv: grlex_key(kv[0]))

    def __repr__(self):
        if not self.terms:
            return "0"
        names = ([f"x{i + 1}" for i in range(self.space.n)] + [f"w{i + 1}" for i in range(self.space.p)]
                 + [f"a{i + 1}" for i in range(self.space.t)])
        parts = []
        for e, c in self.sorted_terms():
            mono = "*".join(f"{nm}^{k}" if k > 1 else nm for nm, k in zip(names, e) if k)
            parts.append(f"{c:+g}" + (f"*{mono}" if mono else ""))
        return " ".join(parts)

    def __eq__(self, other):
        if isinstance(other, (int, float)):
            other = self.space.const(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.space == other.space and self.terms == other.terms

    def __hash__(self):
        return hash((self.space, frozenset(self.terms.items())))

    def allclose(self, other: "Polynomial", tol: float = 1e-12) -> bool:
        keys = set(self.terms) | set(other.terms)
        return all(abs(self.coef(k) - other.coef(k)) <= tol for k in keys)

    # -- arithmetic ---------------------------------------------------------
    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.space != self.space:
                raise ValueError("polynomials live in different variable spaces")
            return other
        return self.space.const(other)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return Polynomial(self.space, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.space, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            c = float(other)
            return Polynomial(self.space, {e: c * v for e, v in self.terms.items()})
        other = self._coerce(other)
        out: dict[tuple[int, ...], float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Polynomial(self.space, out)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / float(c))

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers")
        result = self.space.const(1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    # -- evaluation ---------------------------------------------------------
    def exps_coefs(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.terms:
            return np.zeros((0, self.space.dim), dtype=int), np.zeros(0)
        items = self.sorted_terms()
        return np.array([e for e, _ in items], dtype=int), np.array([c for _, c in items])

    def __call__(self, point):
        return poly_eval(self, point)

    def evaluate_many(self, points) -> np.ndarray:
        """Vectorised evaluation at the rows of ``points`` (shape (N, dim))."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.space.dim:
            raise ValueError(f"points have dimension {pts.shape[1]}, expected {self.space.dim}")
        E, c = self.exps_coefs()
        if len(c) == 0:
            return np.zeros(pts.shape[0])
        out = np.zeros(pts.shape[0])
        maxdeg = int(E.max()) if E.size else 0
        # power table pw[k][:, j] = pts[:, j] ** k
        pw = [np.ones_like(pts)]
        for _ in range(maxdeg):
            pw.append(pw[-1] * pts)
        for e, coef in zip(E, c):
            term = np.full(pts.shape[0], coef)
            for j, k in enumerate(e):
                if k:
                    term = term * pw[k][:, j]
            out += term
        return out

    # -- structural operations ---------------------------------------------
    def diff(self, block: str, i: int = 0) -> "Polynomial":
        return poly_diff(self, (block, i))

    def partial_substitute(self, values: Mapping[int, float]) -> "Polynomial":
        """Fix the variables at the given global indices to numbers."""
        out: dict[tuple[int, ...], float] = {}
        for e, c in self.terms.items():
            e2 = list(e)
            for k, v in values.items():
                if e2[k]:
                    c *= v ** e2[k]
                    e2[k] = 0
            key = tuple(e2)
            out[key] = out.get(key, 0.0) + c
        return Polynomial(self.space, out)

    def affine_substitute(self, shift: Sequence[float], scale: Sequence[float]) -> "Polynomial":
        """Return q with q(z) = self(shift + scale * z), coordinatewise."""
        sp = self.space
        result = sp.zero()
        lin = [sp.const(s) + sc * Polynomial(sp, {tuple(int(j == k) for j in range(sp.dim)): 1.0})
               if (s != 0.0 or sc != 1.0) else None
               for k, (s, sc) in enumerate(zip(shift, scale))]
        cache: dict[tuple[int, int], Polynomial] = {}

        def power(k, m):
            if (k, m) not in cache:
                cache[(k, m)] = lin[k] ** m
            return cache[(k, m)]

        for e, c in self.terms.items():
            fixed = [0] * sp.dim
            term = sp.const(c)
            for k, m in enumerate(e):
                if not m:
                    continue
                if lin[k] is None:
                    fixed[k] = m
                else:
                    term = term * power(k, m)
            if any(fixed):
                term = Polynomial(sp, {tuple(a + b for a, b in zip(te, fixed)): tc for te, tc in term.terms.items()})
            result = result + term
        return result

    def embed(self, space: VariableSpace, mapping: Sequence[int]) -> "Polynomial":
        """Re-index into ``space``: variable j of self goes to index mapping[j]."""
        out = {}
        for e, c in self.terms.items():
            full = [0] * space.dim
            for j, k in enumerate(e):
                if k:
                    full[mapping[j]] += k
            out[tuple(full)] = out.get(tuple(full), 0.0) + c
        return Polynomial(space, out)

    # -- serialisation -------------------------------------------------------
    def to_json(self) -> list[dict]:
        return [{"exps": list(e), "coef": c} for e, c in self.sorted_terms()]

    @classmethod
    def from_json(cls, space: VariableSpace, data: Sequence[Mapping]) -> "Polynomial":
        terms: dict[tuple[int, ...], float] = {}
        for item in data:
            e = tuple(int(v) for v in item["exps"])
            if len(e) != space.dim or any(v < 0 for v in e):
                raise ValueError(f"bad exponent vector {list(e)} for dimension {space.dim}")
            terms[e] = terms.get(e, 0.0) + float(item["coef"])
        return cls(space, terms)


def poly_eval(f: Polynomial, point) -> float:
    pt = np.asarray(point, dtype=float).ravel()
    if pt.shape[0] != f.space.dim:
        raise ValueError(f"point has dimension {pt.shape[0]}, expected {f.space.dim}")
    total = 0.0
    for e, c in f.terms.items():
        v = c
        for j, k in enumerate(e):
            if k:
                v *= pt[j] ** k
        total += v
    return float(total)


def poly_diff(f: Polynomial, variable: tuple[str, int]) -> Polynomial:
    block, i = variable
    k = f.space.index(block, i)
    out: dict[tuple[int, ...], float] = {}
    for e, c in f.terms.items():
        if e[k]:
            e2 = list(e)
            e2[k] -= 1
            key = tuple(e2)
            out[key] = out.get(key, 0.0) + c * e[k]
    return Polynomial(f.space, out)


def stokes_polynomial(f: Polynomial, beta: int, mean: float | None = None) -> Polynomial:
    """Integrand whose Gaussian integral over {omega : f <= 0} vanishes.

    With ``a = (mean, sigma)`` in the parameter block::

        q = sigma^2 * d(omega^beta f)/d omega - omega^beta * f * (omega - mean)

    When ``mean`` is given the family has a fixed mean and the parameter block
    holds only ``sigma`` (t = 1).
    """
    sp = f.space
    if sp.p != 1:
        raise ValueError("Stokes polynomials need univariate noise (p = 1)")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if mean is None:
        if sp.t < 2:
            raise ValueError("parameter block must hold (mean, sigma)")
        m, sigma = sp.a(0), sp.a(1)
    else:
        if sp.t < 1:
            raise ValueError("parameter block must hold sigma")
        m, sigma = sp.const(mean), sp.a(0)
    w = sp.omega(0)
    g = (w ** beta) * f
    return sigma * sigma * poly_diff(g, ("omega", 0)) - g * (w - m)


def n_monomials(nvars: int, degree: int) -> int:
    return math.comb(nvars + degree, degree)
