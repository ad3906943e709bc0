"""Assembly of the moment-SDP relaxations.

Every variant is expressed over one flat vector of moments: each measure
block owns a contiguous slice indexed by its monomials of degree <= 2d.  A
PSD block (moment or localizing matrix) is stored in Hankel form: the
multiplier ``g`` is first applied as a sparse shift ``z = S^T y`` that
produces the localized sequence ``z_gamma = sum_t g_t y_{gamma + t}``, and
entry (r, c) of the matrix then reads ``z`` at the position of
``m_r * m_c``.  The solver uses the same two pieces.

Problems are assembled in scaled coordinates: every box in the problem is
mapped affinely onto [-1, 1]^k first.  The scaling is recorded on the
relaxation so certificates can be mapped back.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from operator import add
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sps
from scipy import special

from .distfamily import Exponential, GaussianUnivariate, reference_param
from .polycore import Polynomial, VariableSpace, enumerate_monomials, stokes_polynomial
from .problem import ProblemSpec
from .semialg import SemialgebraicSet, augment_ball, box_set


class RelaxationError(ValueError):
    pass


def _madd(a: tuple, b: tuple) -> tuple:
    return tuple(map(add, a, b))


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------
@dataclass
class MeasureBlock:
    label: str
    blocks: tuple[str, ...]
    support: str
    monomials: list[tuple[int, ...]]
    offset: int
    index: dict[tuple[int, ...], int]

    @property
    def size(self) -> int:
        return len(self.monomials)

    def gidx(self, exps: tuple[int, ...]) -> int:
        return self.offset + self.index[exps]

    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.size)


@dataclass
class PsdBlockSpec:
    measure: str
    multiplier: Polynomial
    order: int
    basis: list[tuple[int, ...]]
    local: list[tuple[int, ...]]
    hankel: np.ndarray
    shift: sps.csc_matrix          # n_vars x len(local)
    tag: str = ""

    @property
    def size(self) -> int:
        return len(self.basis)

    def localized(self, y: np.ndarray) -> np.ndarray:
        return self.shift.T @ y

    def matrix(self, y: np.ndarray) -> np.ndarray:
        return self.localized(y)[self.hankel]

    def entry_functional(self, r: int, c: int) -> dict[int, float]:
        col = self.shift[:, int(self.hankel[r, c])]
        return {int(i): float(v) for i, v in zip(col.indices, col.data)}


@dataclass
class EqualityConstraint:
    coeffs: dict[int, float]
    rhs: float
    kind: str
    key: tuple = ()


@dataclass
class MomentRelaxation:
    order: int
    variant: str
    space: VariableSpace
    measures: dict[str, MeasureBlock]
    psd: list[PsdBlockSpec]
    equalities: list[EqualityConstraint]
    objective: dict[int, float]
    n_vars: int
    lebesgue: dict[tuple[int, ...], float]
    shift: np.ndarray              # original = shift + scale * scaled, full variable vector
    scale: np.ndarray
    scaled: "ScaledProblem | None" = None
    info: dict = field(default_factory=dict)

    @property
    def degree(self) -> int:
        return 2 * self.order

    def equality_matrix(self) -> tuple[sps.csr_matrix, np.ndarray]:
        rows, cols, vals = [], [], []
        for i, eq in enumerate(self.equalities):
            for j, c in eq.coeffs.items():
                rows.append(i)
                cols.append(j)
                vals.append(c)
        E = sps.csr_matrix((vals, (rows, cols)), shape=(len(self.equalities), self.n_vars))
        E.sum_duplicates()
        return E, np.array([eq.rhs for eq in self.equalities])

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for j, v in self.objective.items():
            c[j] += v
        return c

    def rows_of_kind(self, *kinds: str) -> list[int]:
        return [i for i, eq in enumerate(self.equalities) if eq.kind in kinds]

    def check_point(self, y: np.ndarray) -> tuple[float, float]:
        """(max |equality residual|, min PSD eigenvalue) of a moment vector."""
        E, f = self.equality_matrix()
        res = float(np.max(np.abs(E @ y - f))) if len(f) else 0.0
        mineig = min((float(np.linalg.eigvalsh(b.matrix(y))[0]) for b in self.psd), default=0.0)
        return res, mineig

    def stats(self) -> dict:
        return {
            "variant": self.variant, "order": self.order, "n_vars": self.n_vars,
            "n_eq": len(self.equalities),
            "measures": {k: m.size for k, m in self.measures.items()},
            "psd_sizes": [b.size for b in self.psd],
        }

    def to_json(self) -> dict:
        """Solver-neutral dump.

        ``psd`` entries give the block size and, per upper-triangle entry,
        the sparse functional of the moment vector; ``equalities`` are
        (indices, values, rhs) triplets; ``objective`` maximises the dot
        product with the moment vector.
        """
        blocks = []
        for b in self.psd:
            entries = []
            for r in range(b.size):
                for c in range(r, b.size):
                    fn = b.entry_functional(r, c)
                    entries.append([r, c, list(fn.keys()), list(fn.values())])
            blocks.append({"measure": b.measure, "tag": b.tag, "size": b.size, "entries": entries})
        return {
            "variant": self.variant, "order": self.order, "n_vars": self.n_vars,
            "measures": [{"label": m.label, "offset": m.offset, "size": m.size,
                          "monomials": [list(e) for e in m.monomials]} for m in self.measures.values()],
            "psd": blocks,
            "equalities": [{"idx": list(eq.coeffs.keys()), "val": list(eq.coeffs.values()),
                            "rhs": eq.rhs, "kind": eq.kind} for eq in self.equalities],
            "objective": {"idx": list(self.objective.keys()), "val": list(self.objective.values()),
                          "sense": "max"},
        }

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)


# ---------------------------------------------------------------------------
# Lebesgue moments
# ---------------------------------------------------------------------------
def lebesgue_box_moments(box: Sequence[tuple[float, float]], max_degree: int) -> dict[tuple[int, ...], float]:
    """Moments of the uniform probability measure on a box, up to total degree."""
    box = [(float(lo), float(hi)) for lo, hi in box]
    for lo, hi in box:
        if not hi > lo:
            raise ValueError(f"degenerate box interval [{lo}, {hi}]")
    one_d = []
    for lo, hi in box:
        one_d.append([(hi ** (k + 1) - lo ** (k + 1)) / ((k + 1) * (hi - lo)) for k in range(max_degree + 1)])
    sp = VariableSpace(len(box), 1, 0)
    out = {}
    for e in enumerate_monomials(sp, ["x"], max_degree):
        alpha = e[: len(box)]
        out[alpha] = float(np.prod([one_d[i][k] for i, k in enumerate(alpha)]))
    return out


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------
def _normalize(g: Polynomial) -> Polynomial:
    m = max((abs(c) for c in g.terms.values()), default=0.0)
    return g / m if m > 0 else g


@dataclass
class ScaledProblem:
    """The problem in coordinates where every box is [-1, 1]^k."""

    spec: ProblemSpec
    space: VariableSpace
    shift: np.ndarray
    scale: np.ndarray
    X: SemialgebraicSet
    A: SemialgebraicSet
    Omega: SemialgebraicSet
    f_list: tuple[Polynomial, ...]
    _moments: dict = field(default_factory=dict)

    def to_scaled(self, g: Polynomial) -> Polynomial:
        return g.affine_substitute(self.shift, self.scale)

    def moment_map(self, beta: tuple[int, ...]) -> Polynomial:
        """E[omega_s^beta] as a polynomial in the scaled parameters."""
        if beta in self._moments:
            return self._moments[beta]
        fam = self.spec.family
        sp = self.space
        ws = sp.block_slice("omega")
        # omega_s = (omega - c) / h, expanded in original omega
        q = sp.const(1.0)
        for i, b in enumerate(beta):
            c, h = self.shift[ws][i], self.scale[ws][i]
            q = q * ((sp.omega(i) - c) / h) ** b
        out = sp.zero()
        for e, coef in q.terms.items():
            out = out + coef * fam.moment_polynomial(e[ws], sp)
        out = self.to_scaled(out)
        self._moments[beta] = out
        return out

    def map_x_back(self, w: Polynomial) -> Polynomial:
        """w_scaled(x_s) -> w(x) = w_scaled((x - c) / h) on the x block."""
        sh = np.zeros(self.space.dim)
        sc = np.ones(self.space.dim)
        xs = self.space.block_slice("x")
        sh[xs] = -self.shift[xs] / self.scale[xs]
        sc[xs] = 1.0 / self.scale[xs]
        return w.affine_substitute(sh, sc)

    def unscale_points(self, pts: np.ndarray, block: str) -> np.ndarray:
        s = self.space.block_slice(block)
        return self.shift[s] + self.scale[s] * pts

    def scale_points(self, pts: np.ndarray, block: str) -> np.ndarray:
        s = self.space.block_slice(block)
        return (pts - self.shift[s]) / self.scale[s]


def _scale_set(s: SemialgebraicSet, shift, scale, want_ball: bool) -> SemialgebraicSet:
    sp = s.space
    if s.is_unconstrained:
        return s
    if s.box is not None:
        bs = box_set(sp, s.block, [(-1.0, 1.0)] * s.dim)
        extra = [g for g in s.inequalities if g not in box_set(sp, s.block, s.box).inequalities
                 and not (s.ball_radius_sq is not None and g == s.inequalities[0])]
        ineqs = bs.inequalities + tuple(_normalize(g.affine_substitute(shift, scale)) for g in extra)
        eqs = tuple(_normalize(h.affine_substitute(shift, scale)) for h in s.equalities)
        out = SemialgebraicSet(sp, s.block, ineqs, eqs, None, bs.box)
        return augment_ball(out) if want_ball else out
    ineqs = tuple(_normalize(g.affine_substitute(shift, scale)) for g in s.inequalities)
    eqs = tuple(_normalize(h.affine_substitute(shift, scale)) for h in s.equalities)
    if s.ball_radius_sq is not None:
        return SemialgebraicSet(sp, s.block, ineqs, eqs, s.ball_radius_sq, None)
    if want_ball:
        raise RelaxationError(f"set over {s.block!r} needs a ball radius (no box bounds to derive it from)")
    return SemialgebraicSet(sp, s.block, ineqs, eqs, None, None)


def _omega_spread(spec: ProblemSpec, d: int) -> np.ndarray:
    """Per-coordinate scale for an unbounded omega: the largest E[omega_i^2d]^(1/2d)
    over the corners of A.  Keeps degree-2d noise moments near unit size."""
    sp = spec.space
    fam = spec.family
    corners = [reference_param(spec.A)]
    if len(spec.A.box) <= 8:
        corners = [np.array(c) for c in itertools.product(*spec.A.box)]
    point = np.zeros(sp.dim)
    asl = sp.block_slice("a")
    out = np.ones(sp.p)
    for i in range(sp.p):
        beta = tuple(2 * d if j == i else 0 for j in range(sp.p))
        m = fam.moment_polynomial(beta, sp)
        best = 0.0
        for c in corners:
            point[asl] = c
            best = max(best, abs(float(m(point))))
        if best > 0:
            out[i] = max(best ** (1.0 / (2 * d)), 1e-3)
    return out


def scale_problem(spec: ProblemSpec, d: int | None = None) -> ScaledProblem:
    sp = spec.space
    shift = np.zeros(sp.dim)
    scale = np.ones(sp.dim)
    for s in (spec.X, spec.A, spec.Omega):
        if s.box is None:
            continue
        sl = sp.block_slice(s.block)
        for i, (lo, hi) in enumerate(s.box):
            shift[sl.start + i] = (lo + hi) / 2
            scale[sl.start + i] = (hi - lo) / 2 if hi > lo else 1.0
    if (spec.Omega.box is None and d is not None and spec.family is not None
            and spec.A.box is not None):
        scale[sp.block_slice("omega")] = _omega_spread(spec, d)
    if spec.X.box is None:
        raise RelaxationError("X: only boxes have built-in Lebesgue moments")
    X = _scale_set(spec.X, shift, scale, True)
    A = _scale_set(spec.A, shift, scale, not spec.A.is_unconstrained)
    Om = _scale_set(spec.Omega, shift, scale, False)
    f_list = tuple(_normalize(f.affine_substitute(shift, scale)) for f in spec.f_list)
    return ScaledProblem(spec, sp, shift, scale, X, A, Om, f_list)


def d_min(spec: ProblemSpec) -> int:
    degs = [f.degree for f in spec.f_list]
    for s in (spec.X, spec.A, spec.Omega):
        degs.extend(g.degree for g in s.localizers())
    degs.append(2)  # ball constraints
    return max(1, math.ceil(max(degs) / 2))


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------
class _Assembler:
    def __init__(self, sp: ScaledProblem, d: int, variant: str):
        self.sp = sp
        self.space = sp.space
        self.d = d
        self.variant = variant
        self.n_vars = 0
        self.measures: dict[str, MeasureBlock] = {}
        self.psd: list[PsdBlockSpec] = []
        self.eqs: list[EqualityConstraint] = []
        self.objective: dict[int, float] = {}
        self._mono_cache: dict = {}

    def monos(self, blocks: tuple[str, ...], deg: int):
        key = (blocks, deg)
        if key not in self._mono_cache:
            self._mono_cache[key] = enumerate_monomials(self.space, blocks, deg)
        return self._mono_cache[key]

    def add_measure(self, label: str, blocks: tuple[str, ...], support: str) -> MeasureBlock:
        mons = self.monos(blocks, 2 * self.d)
        m = MeasureBlock(label, blocks, support, mons, self.n_vars, {e: i for i, e in enumerate(mons)})
        self.measures[label] = m
        self.n_vars += m.size
        return m

    def add_psd(self, label: str, g: Polynomial | None, tag: str) -> None:
        m = self.measures[label]
        if g is None:
            g = self.space.const(1.0)
        if g.is_zero:
            return
        if not g.uses_only(m.blocks):
            raise RelaxationError(f"multiplier {tag} uses variables outside measure {label}")
        order = self.d - math.ceil(g.degree / 2)
        if order < 0:
            raise RelaxationError(f"relaxation order {self.d} too small for multiplier {tag} (degree {g.degree})")
        basis = self.monos(m.blocks, order)
        local = self.monos(m.blocks, 2 * order)
        lidx = {e: i for i, e in enumerate(local)}
        size = len(basis)
        hank = np.empty((size, size), dtype=np.int64)
        for r in range(size):
            for c in range(r, size):
                hank[r, c] = hank[c, r] = lidx[_madd(basis[r], basis[c])]
        rows, cols, vals = [], [], []
        terms = list(g.terms.items())
        for j, gam in enumerate(local):
            for e, coef in terms:
                rows.append(m.gidx(_madd(gam, e)))
                cols.append(j)
                vals.append(coef)
        # resized in finish() once every measure exists
        S = sps.csc_matrix((vals, (rows, cols)), shape=(self.n_vars, len(local)))
        self.psd.append(PsdBlockSpec(label, g, order, basis, local, hank, S, tag))

    def add_eq(self, coeffs: dict[int, float], rhs: float, kind: str, key: tuple = ()) -> None:
        clean = {j: c for j, c in coeffs.items() if c != 0.0}
        if not clean:
            if abs(rhs) > 1e-12:
                raise RelaxationError(f"inconsistent empty {kind} row")
            return
        self.eqs.append(EqualityConstraint(clean, float(rhs), kind, key))

    def lebesgue(self) -> dict:
        return lebesgue_box_moments([(-1.0, 1.0)] * self.space.n, 2 * self.d)

    def finish(self, **info) -> MomentRelaxation:
        for b in self.psd:
            if b.shift.shape[0] != self.n_vars:
                S = b.shift.tocoo()
                b.shift = sps.csc_matrix((S.data, (S.row, S.col)), shape=(self.n_vars, S.shape[1]))
        return MomentRelaxation(self.d, self.variant, self.space, self.measures, self.psd, self.eqs,
                                self.objective, self.n_vars, self.lebesgue(), self.sp.shift.copy(),
                                self.sp.scale.copy(), self.sp, info)

    # -- shared pieces -------------------------------------------------------
    def localize_sets(self, label: str, sets: Iterable[SemialgebraicSet]) -> None:
        for s in sets:
            for k, g in enumerate(s.localizers()):
                self.add_psd(label, g, f"{s.block}[{k}]")

    def marginal_rows(self, label: str, kind: str = "marginal") -> None:
        m = self.measures[label]
        sp = self.space
        for alpha, lam in self.lebesgue().items():
            e = alpha + (0,) * (sp.p + sp.t)
            self.add_eq({m.gidx(e): 1.0}, lam, kind, alpha)

    def coupling_rows(self, lhs: Sequence[str], v_label: str) -> None:
        """L_{sum lhs}(x^a w^b) = L_v(x^a p_b(a)) under both degree filters."""
        sp = self.space
        v = self.measures[v_label]
        two_d = 2 * self.d
        for e in self.monos(("x", "omega"), two_d):
            alpha = e[: sp.n]
            beta = e[sp.n: sp.n + sp.p]
            pb = self.sp.moment_map(beta)
            if sum(alpha) + pb.degree > two_d:
                continue
            row: dict[int, float] = {}
            for lab in lhs:
                j = self.measures[lab].gidx(e)
                row[j] = row.get(j, 0.0) + 1.0
            for te, c in pb.terms.items():
                j = v.gidx(alpha + (0,) * sp.p + te[sp.n + sp.p:])
                row[j] = row.get(j, 0.0) - c
            self.add_eq(row, 0.0, "coupling", (alpha, beta))


def _check_order(spec: ProblemSpec, d: int) -> None:
    dm = d_min(spec)
    if d < dm:
        raise RelaxationError(f"degree: relaxation order {d} is below the minimum {dm}")


def _assemble_joint(spec: ProblemSpec, d: int, labels: Sequence[str], variant: str) -> _Assembler:
    _check_order(spec, d)
    sp = scale_problem(spec, d)
    asm = _Assembler(sp, d, variant)
    for lab in labels:
        asm.add_measure(lab, ("x", "omega"), "K")
    asm.add_measure("u", ("x", "omega"), "X x Omega")
    asm.add_measure("v", ("x", "a"), "X x A")
    for lab, f in zip(labels, sp.f_list):
        asm.add_psd(lab, None, "moment")
        asm.add_psd(lab, -f, "-f")
        asm.localize_sets(lab, (sp.X, sp.Omega))
    asm.add_psd("u", None, "moment")
    asm.localize_sets("u", (sp.X, sp.Omega))
    asm.add_psd("v", None, "moment")
    asm.localize_sets("v", (sp.X, sp.A))
    asm.coupling_rows(list(labels) + ["u"], "v")
    asm.marginal_rows("v")
    zero = (0,) * sp.space.dim
    for lab in labels:
        asm.objective[asm.measures[lab].gidx(zero)] = 1.0
    return asm


def build_base(problem: ProblemSpec, d: int) -> MomentRelaxation:
    """Base relaxation of order ``d`` (moments up to degree 2d)."""
    if len(problem.f_list) != 1:
        raise RelaxationError("build_base takes a single constraint polynomial; use build_joint")
    return _assemble_joint(problem, d, ["y"], "base").finish()


def build_joint(problem: ProblemSpec, d: int) -> MomentRelaxation:
    if len(problem.f_list) < 2:
        raise RelaxationError("build_joint needs at least two constraint polynomials; use build_base")
    labels = [f"y{j + 1}" for j in range(len(problem.f_list))]
    return _assemble_joint(problem, d, labels, "joint").finish()


def default_beta_max(f: Polynomial, d: int) -> int:
    return 2 * d - f.degree - 2


def build_stokes(problem: ProblemSpec, d: int, beta_max: int | None = None,
                 gamma_max: int | None = None) -> MomentRelaxation:
    fam = problem.family
    if not isinstance(fam, GaussianUnivariate) or problem.space.p != 1:
        raise RelaxationError("Stokes constraints need a univariate Gaussian family")
    if len(problem.f_list) != 1:
        raise RelaxationError("Stokes constraints are built for a single constraint polynomial")
    if beta_max is None:
        beta_max = problem.stokes.beta_max
    if beta_max is None:
        beta_max = default_beta_max(problem.f, d)
    if gamma_max is None:
        gamma_max = problem.stokes.gamma_max
    asm = _assemble_joint(problem, d, ["y"], "stokes")
    sp = asm.sp
    space = asm.space
    asm.add_measure("z1", ("x", "omega", "a"), "K x A")
    asm.add_measure("z2", ("x", "a"), "X x A")
    asm.add_psd("z1", None, "moment")
    asm.add_psd("z1", -sp.f_list[0], "-f")
    asm.localize_sets("z1", (sp.X, sp.Omega, sp.A))
    asm.add_psd("z2", None, "moment")
    asm.localize_sets("z2", (sp.X, sp.A))
    two_d = 2 * d
    y, z1, z2, v = (asm.measures[k] for k in ("y", "z1", "z2", "v"))
    for e in asm.monos(("x", "omega"), two_d):
        asm.add_eq({z1.gidx(e): 1.0, y.gidx(e): -1.0}, 0.0, "tie_y", e)
    for e in asm.monos(("x", "a"), two_d):
        asm.add_eq({z1.gidx(e): 1.0, z2.gidx(e): 1.0, v.gidx(e): -1.0}, 0.0, "tie_v", e)
    n_stokes = 0
    for beta in range(beta_max + 1):
        q = sp.to_scaled(stokes_polynomial(problem.f, beta, fam.fixed_mean))
        if q.is_zero or q.degree > two_d:
            continue
        q = _normalize(q)
        room = two_d - q.degree
        for ea in asm.monos(("x", "a"), room):
            if sum(ea[space.n + space.p:]) > gamma_max:
                continue
            row: dict[int, float] = {}
            for te, c in q.terms.items():
                j = z1.gidx(_madd(ea, te))
                row[j] = row.get(j, 0.0) + c
            asm.add_eq(row, 0.0, "stokes", (ea, beta))
            n_stokes += 1
    return asm.finish(beta_max=beta_max, gamma_max=gamma_max, n_stokes=n_stokes)


def build_moment_box(problem: ProblemSpec, d: int) -> MomentRelaxation:
    """First/second-moment ambiguity: phi + nu = mu, mu_x = psi_x = lambda.

    a = (m_1..m_p, s_11, s_12, ..., s_pp) where s_ij are raw second moments.
    """
    space = problem.space
    p = space.p
    if p > 3:
        raise RelaxationError("moment-box relaxations support p <= 3")
    if space.t != p + p * (p + 1) // 2:
        raise RelaxationError("moment-box parameters must be (means, second-moment triangle)")
    if len(problem.f_list) != 1:
        raise RelaxationError("moment-box relaxations take a single constraint polynomial")
    _check_order(problem, d)
    sp = scale_problem(problem, d)
    asm = _Assembler(sp, d, "moment_box")
    asm.add_measure("y", ("x", "omega"), "K")
    asm.add_measure("nu", ("x", "omega"), "X x Omega")
    asm.add_measure("mu", ("x", "omega"), "X x Omega")
    asm.add_measure("v", ("x", "a"), "X x A")
    asm.add_psd("y", None, "moment")
    asm.add_psd("y", -sp.f_list[0], "-f")
    asm.localize_sets("y", (sp.X, sp.Omega))
    for lab in ("nu", "mu"):
        asm.add_psd(lab, None, "moment")
        asm.localize_sets(lab, (sp.X, sp.Omega))
    asm.add_psd("v", None, "moment")
    asm.localize_sets("v", (sp.X, sp.A))
    y, nu, mu, v = (asm.measures[k] for k in ("y", "nu", "mu", "v"))
    two_d = 2 * d
    for e in asm.monos(("x", "omega"), two_d):
        asm.add_eq({y.gidx(e): 1.0, nu.gidx(e): 1.0, mu.gidx(e): -1.0}, 0.0, "mb_sum", e)
    asm.marginal_rows("mu", "marginal")
    asm.marginal_rows("v", "marginal")

    def tri(i, j):
        i, j = min(i, j), max(i, j)
        return p + i * p - i * (i - 1) // 2 + (j - i)

    pairs = [((i,), i) for i in range(p)] + [((i, j), tri(i, j)) for i in range(p) for j in range(i, p)]
    for wvars, aidx in pairs:
        P = space.const(1.0)
        for i in wvars:
            P = P * space.omega(i)
        P = sp.to_scaled(P)
        Q = sp.to_scaled(space.a(aidx))
        kind = "mb_first" if len(wvars) == 1 else "mb_second"
        for ex in asm.monos(("x",), two_d - 2):
            row: dict[int, float] = {}
            for te, c in P.terms.items():
                e = _madd(ex, te)
                for lab in (y, nu):
                    row[lab.gidx(e)] = row.get(lab.gidx(e), 0.0) + c
            for te, c in Q.terms.items():
                j = v.gidx(_madd(ex, te))
                row[j] = row.get(j, 0.0) - c
            asm.add_eq(row, 0.0, kind, (ex, wvars))
    asm.objective[y.gidx((0,) * space.dim)] = 1.0
    return asm.finish()


def build(problem: ProblemSpec, d: int | None = None) -> MomentRelaxation:
    d = problem.order if d is None else d
    if problem.variant == "base":
        return build_base(problem, d)
    if problem.variant == "stokes":
        return build_stokes(problem, d)
    if problem.variant == "joint":
        return build_joint(problem, d)
    return build_moment_box(problem, d)


# ---------------------------------------------------------------------------
# numerical Slater witness
# ---------------------------------------------------------------------------
def _omega_law(problem: ProblemSpec, variant: str) -> Callable[[np.ndarray], tuple[float, float, Callable]]:
    """a (original coords) -> (lo, hi, density) for the univariate noise law used by the witness."""
    fam = problem.family
    if variant == "moment_box":
        def law(a):
            m, s = float(a[0]), float(a[1])
            sd = math.sqrt(max(s - m * m, 1e-12))
            half = math.sqrt(3.0) * sd
            return m - half, m + half, lambda w: np.full_like(w, 1.0 / (2 * half))
        return law
    if isinstance(fam, GaussianUnivariate):
        def law(a):
            m, s = fam.mean_sigma(a)
            return m - 20 * s, m + 20 * s, lambda w: np.exp(-0.5 * ((w - m) / s) ** 2) / (s * math.sqrt(2 * math.pi))
        return law
    if isinstance(fam, Exponential):
        def law(a):
            sc = float(a[0])
            return 0.0, 80 * sc, lambda w: np.exp(-w / sc) / sc
        return law
    raise NotImplementedError(f"no witness construction for family {getattr(fam, 'kind', None)!r}")


def _univariate_roots(f: Polynomial, x: np.ndarray, space: VariableSpace) -> np.ndarray:
    wi = space.index("omega", 0)
    vals = {k: float(v) for k, v in zip(range(space.n), x)}
    g = f.partial_substitute(vals)
    deg = max((e[wi] for e in g.terms), default=0)
    if deg == 0:
        return np.zeros(0)
    coefs = np.zeros(deg + 1)
    for e, c in g.terms.items():
        coefs[deg - e[wi]] += c
    r = np.roots(np.trim_zeros(coefs, "f"))
    return np.real(r[np.abs(r.imag) < 1e-12])


def slater_witness(relax: MomentRelaxation, x_nodes: int | None = None, a_nodes: int | None = None,
                   w_nodes: int = 80) -> np.ndarray:
    """Moment vector of an explicit feasible point built by quadrature.

    x ~ uniform on X (tensor Gauss-Legendre), a ~ uniform on A (midpoint
    grid), omega ~ mu_a split at the roots of each f(x, .).  The mass on K
    goes to the K-supported blocks, the rest to u / nu / z2.
    """
    sp: ScaledProblem = relax.scaled
    spec = sp.spec
    space = relax.space
    # more nodes per axis than the basis degree, else some moment matrix is singular
    x_nodes = max(10, relax.order + 2) if x_nodes is None else x_nodes
    a_nodes = max(6, relax.order + 2) if a_nodes is None else a_nodes
    if space.p != 1:
        raise NotImplementedError("witness construction is implemented for univariate noise")
    n, t = space.n, space.t
    law = _omega_law(spec, relax.variant)
    gx, gwx = special.roots_legendre(x_nodes)
    xs = np.array(np.meshgrid(*([gx] * n), indexing="ij")).reshape(n, -1).T
    wx = np.prod(np.array(np.meshgrid(*([gwx / 2] * n), indexing="ij")).reshape(n, -1), axis=0)
    abox = sp.A.box
    if abox is None:
        raise NotImplementedError("witness needs a box parameter set")
    amid = (np.arange(a_nodes) + 0.5) / a_nodes * 2 - 1
    as_ = np.array(np.meshgrid(*([amid] * t), indexing="ij")).reshape(t, -1).T
    wa = np.full(as_.shape[0], 1.0 / as_.shape[0])
    gw, gww = special.roots_legendre(w_nodes)

    x_orig = sp.unscale_points(xs, "x")
    a_orig = sp.unscale_points(as_, "a")
    ws = space.block_slice("omega")
    omega_c, omega_h = sp.shift[ws][0], sp.scale[ws][0]
    f_orig = spec.f_list

    K_pts, K_w, K_j, O_pts, O_w, Z2_pts, Z2_w = [], [], [], [], [], [], []
    for ix, (xo, xsc) in enumerate(zip(x_orig, xs)):
        roots = np.concatenate([_univariate_roots(f, xo, space) for f in f_orig])
        for ia, (ao, asc) in enumerate(zip(a_orig, as_)):
            lo, hi, dens = law(ao)
            cuts = np.unique(np.concatenate([[lo, hi], roots[(roots > lo) & (roots < hi)]]))
            wpts = np.concatenate([(b - a) / 2 * gw + (a + b) / 2 for a, b in zip(cuts[:-1], cuts[1:])])
            wwts = np.concatenate([(b - a) / 2 * gww for a, b in zip(cuts[:-1], cuts[1:])]) * dens(wpts)
            weight = wx[ix] * wa[ia]
            full = np.zeros((len(wpts), space.dim))
            full[:, :n] = xo
            full[:, n] = wpts
            fv = np.array([f.evaluate_many(full) for f in f_orig])
            inK = (fv <= 0).any(axis=0)
            first = np.where(inK, np.argmax(fv <= 0, axis=0), -1)
            pts = np.zeros((len(wpts), space.dim))
            pts[:, :n] = xsc
            pts[:, n] = (wpts - omega_c) / omega_h
            pts[:, n + 1:] = asc
            K_pts.append(pts[inK])
            K_w.append(weight * wwts[inK])
            K_j.append(first[inK])
            O_pts.append(pts[~inK])
            O_w.append(weight * wwts[~inK])
            zp = np.zeros((1, space.dim))
            zp[0, :n] = xsc
            zp[0, n + 1:] = asc
            Z2_pts.append(zp)
            Z2_w.append(np.array([weight * (1.0 - wwts[inK].sum())]))
    K_pts, K_w, K_j = np.vstack(K_pts), np.concatenate(K_w), np.concatenate(K_j)
    O_pts, O_w = np.vstack(O_pts), np.concatenate(O_w)
    Z2_pts, Z2_w = np.vstack(Z2_pts), np.concatenate(Z2_w)
    V_pts = np.zeros((len(xs) * len(as_), space.dim))
    V_pts[:, :n] = np.repeat(xs, len(as_), axis=0)
    V_pts[:, n + 1:] = np.tile(as_, (len(xs), 1))
    V_w = np.repeat(wx, len(as_)) * np.tile(wa, len(xs))

    def project(pts, blocks):
        keep = np.zeros(space.dim, dtype=bool)
        for b in blocks:
            keep[space.block_slice(b)] = True
        out = pts.copy()
        out[:, ~keep] = 0.0
        return out

    y = np.zeros(relax.n_vars)

    def fill(label, pts, wts):
        m = relax.measures[label]
        E = np.array(m.monomials)
        P = project(pts, m.blocks)
        maxd = int(E.max()) if E.size else 0
        pw = [np.ones_like(P)]
        for _ in range(maxd):
            pw.append(pw[-1] * P)
        vals = np.empty(len(E))
        for k, e in enumerate(E):
            term = wts.copy()
            for j, ex in enumerate(e):
                if ex:
                    term = term * pw[ex][:, j]
            vals[k] = term.sum()
        y[m.slice()] = vals

    labels = relax.measures
    if relax.variant == "joint":
        for j in range(len(f_orig)):
            sel = K_j == j
            fill(f"y{j + 1}", K_pts[sel], K_w[sel])
    else:
        fill("y", K_pts, K_w)
    if "u" in labels:
        fill("u", O_pts, O_w)
    if "nu" in labels:
        fill("nu", O_pts, O_w)
        fill("mu", np.vstack([K_pts, O_pts]), np.concatenate([K_w, O_w]))
    fill("v", V_pts, V_w)
    if "z1" in labels:
        fill("z1", K_pts, K_w)
        fill("z2", Z2_pts, Z2_w)
    return y
