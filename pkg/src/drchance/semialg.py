"""Basic semialgebraic sets X, A, Omega and the constraint region K."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .polycore import Polynomial, VariableSpace

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class SemialgebraicSet:
    """{z in block : g(z) >= 0 for g in inequalities, h(z) = 0 for h in equalities}.

    ``box`` keeps the bounds when the set was built from a box; it is used for
    Lebesgue moments, variable scaling and oracle grids.
    """

    space: VariableSpace
    block: str
    inequalities: tuple[Polynomial, ...] = ()
    equalities: tuple[Polynomial, ...] = ()
    ball_radius_sq: float | None = None
    box: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        for g in self.inequalities + self.equalities:
            if g.space != self.space:
                raise ValueError("constraint polynomial lives in another variable space")
            if not g.uses_only([self.block]):
                raise ValueError(f"constraint {g} uses variables outside block {self.block!r}")
        if self.ball_radius_sq is not None:
            if not self.inequalities or self.inequalities[0] != ball_polynomial(self.space, self.block, self.ball_radius_sq):
                raise ValueError("ball constraint must be the first inequality")

    @property
    def dim(self) -> int:
        return self.space.block_size(self.block)

    @property
    def is_unconstrained(self) -> bool:
        return not self.inequalities and not self.equalities

    def max_degree(self) -> int:
        return max((g.degree for g in self.inequalities + self.equalities), default=0)

    def localizers(self) -> list[Polynomial]:
        """Inequality polynomials with equalities lowered to (h, -h) pairs."""
        out = list(self.inequalities)
        for h in self.equalities:
            out.extend([h, -h])
        return out

    def embed_point(self, point) -> np.ndarray:
        pt = np.asarray(point, dtype=float).ravel()
        if pt.shape[0] != self.dim:
            raise ValueError(f"point has dimension {pt.shape[0]}, set block {self.block!r} has {self.dim}")
        full = np.zeros(self.space.dim)
        full[self.space.block_slice(self.block)] = pt
        return full

    def to_json(self) -> dict:
        if self.box is not None and self._is_plain_box():
            return {"block": self.block, "box": [list(b) for b in self.box], "ball": self.ball_radius_sq}
        ineqs = self.inequalities[1:] if self.ball_radius_sq is not None else self.inequalities
        return {"block": self.block, "ineqs": [g.to_json() for g in ineqs],
                "eqs": [h.to_json() for h in self.equalities], "ball": self.ball_radius_sq,
                **({"box_bounds": [list(b) for b in self.box]} if self.box is not None else {})}

    def _is_plain_box(self) -> bool:
        ref = box_set(self.space, self.block, self.box)
        ineqs = self.inequalities[1:] if self.ball_radius_sq is not None else self.inequalities
        return not self.equalities and tuple(ineqs) == ref.inequalities

    @classmethod
    def from_json(cls, space: VariableSpace, data: dict) -> "SemialgebraicSet":
        block = data.get("block")
        if block not in ("x", "a", "omega"):
            raise ValueError(f"block: must be one of x, a, omega (got {block!r})")
        if "box" in data:
            s = box_set(space, block, [tuple(b) for b in data["box"]])
        else:
            ineqs = tuple(Polynomial.from_json(space, g) for g in data.get("ineqs", []))
            eqs = tuple(Polynomial.from_json(space, h) for h in data.get("eqs", []))
            bounds = data.get("box_bounds")
            s = cls(space, block, ineqs, eqs, None, tuple(tuple(b) for b in bounds) if bounds else None)
        ball = data.get("ball")
        if ball is not None:
            s = augment_ball(s, float(ball))
        return s


def ball_polynomial(space: VariableSpace, block: str, M: float) -> Polynomial:
    g = space.const(M)
    for i in range(space.block_size(block)):
        v = space.var(block, i)
        g = g - v * v
    return g


def box_set(space: VariableSpace, block: str, bounds: Sequence[tuple[float, float]]) -> SemialgebraicSet:
    """Box as paired linear inequalities hi - z >= 0, z - lo >= 0."""
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    if len(bounds) != space.block_size(block):
        raise ValueError(f"box has {len(bounds)} intervals, block {block!r} has {space.block_size(block)} variables")
    ineqs = []
    for i, (lo, hi) in enumerate(bounds):
        if not lo <= hi:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        v = space.var(block, i)
        ineqs.extend([hi - v, v - lo])
    return SemialgebraicSet(space, block, tuple(ineqs), (), None, bounds)


def box_ball_radius(bounds: Sequence[tuple[float, float]]) -> float:
    return float(sum(max(lo * lo, hi * hi) for lo, hi in bounds))


def augment_ball(s: SemialgebraicSet, M: float | None = None) -> SemialgebraicSet:
    """Prepend M - ||z||^2 >= 0 (idempotent).

    For boxes ``M`` defaults to sum_i max(lo_i^2, hi_i^2).  A constraint
    already equal to the ball polynomial is moved to the front instead of
    being duplicated.
    """
    if M is None:
        if s.box is None:
            raise ValueError("ball radius must be supplied for non-box sets")
        M = box_ball_radius(s.box)
    if M <= 0:
        raise ValueError("ball radius must be positive")
    ball = ball_polynomial(s.space, s.block, M)
    rest = tuple(g for g in s.inequalities if g != ball)
    return SemialgebraicSet(s.space, s.block, (ball,) + rest, s.equalities, float(M), s.box)


def contains(s: SemialgebraicSet, point, tol: float = DEFAULT_TOL) -> bool:
    full = s.embed_point(point)
    if any(g(full) < -tol for g in s.inequalities):
        return False
    return all(abs(h(full)) <= tol for h in s.equalities)


def contains_many(s: SemialgebraicSet, points, tol: float = DEFAULT_TOL) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    full = np.zeros((pts.shape[0], s.space.dim))
    full[:, s.space.block_slice(s.block)] = pts
    ok = np.ones(pts.shape[0], dtype=bool)
    for g in s.inequalities:
        ok &= g.evaluate_many(full) >= -tol
    for h in s.equalities:
        ok &= np.abs(h.evaluate_many(full)) <= tol
    return ok


@dataclass(frozen=True)
class ConstraintRegion:
    """K = {(x, omega) in X x Omega : f_j(x, omega) <= 0 for some j}."""

    X: SemialgebraicSet
    Omega: SemialgebraicSet
    f_list: tuple[Polynomial, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.X.block != "x" or self.Omega.block != "omega":
            raise ValueError("K needs X over x and Omega over omega")
        if not self.f_list:
            raise ValueError("K needs at least one constraint polynomial f")
        for f in self.f_list:
            if not f.uses_only(["x", "omega"]):
                raise ValueError("constraint polynomials f must depend on (x, omega) only")

    def contains(self, x, omega, tol: float = DEFAULT_TOL) -> bool:
        sp = self.X.space
        full = np.zeros(sp.dim)
        full[sp.block_slice("x")] = np.asarray(x, dtype=float).ravel()
        full[sp.block_slice("omega")] = np.asarray(omega, dtype=float).ravel()
        if not contains(self.X, full[sp.block_slice("x")], tol):
            return False
        if not contains(self.Omega, full[sp.block_slice("omega")], tol):
            return False
        return any(f(full) <= tol for f in self.f_list)
