"""Solve assembled relaxations and extract the certificate polynomial w_d.

The default backend is the structured interior-point method in
:mod:`drchance.ipm`.  A Clarabel backend (standard scaled-triangle PSD
cones) is available for cross-checking small instances.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sps

from .ipm import HankelBlock, HankelSDP, IPMSettings
from .polycore import Polynomial, VariableSpace
from .relaxation import MomentRelaxation

TOL_ENV = "DRCHANCE_SOLVER_TOL"
STATUSES = ("optimal", "near_optimal", "infeasible", "unbounded", "numerical_failure")


class SolveError(RuntimeError):
    pass


@dataclass
class SolveSettings:
    tol: float = 1e-8
    fallback_tol: float = 1e-6
    max_iter: int = 150
    backend: str = "hankel"
    verbose: bool = False
    time_limit: float = 3600.0

    @classmethod
    def from_env(cls, **kw) -> "SolveSettings":
        s = cls(**kw)
        raw = os.environ.get(TOL_ENV)
        if raw:
            try:
                s.tol = float(raw)
            except ValueError:
                raise SolveError(f"{TOL_ENV}: not a number: {raw!r}") from None
            s.fallback_tol = max(s.fallback_tol, s.tol)
        return s


# ---------------------------------------------------------------------------
@dataclass
class ConicProblem:
    """PSD blocks in Hankel form, free equalities E y = f, objective max c'y."""

    E: sps.csr_matrix
    f: np.ndarray
    c: np.ndarray
    slices: list[slice]
    blocks: list[HankelBlock]
    block_dims: list[int]

    @classmethod
    def from_relaxation(cls, relax: MomentRelaxation) -> "ConicProblem":
        E, f = relax.equality_matrix()
        meas = list(relax.measures.values())
        pos = {m.label: i for i, m in enumerate(meas)}
        blocks = [HankelBlock(pos[b.measure], b.hankel, b.shift[relax.measures[b.measure].slice(), :].tocsr())
                  for b in relax.psd]
        return cls(E, f, relax.objective_vector(), [m.slice() for m in meas], blocks, [b.size for b in relax.psd])

    def triplets(self):
        E = self.E.tocoo()
        return E.row.tolist(), E.col.tolist(), E.data.tolist()

    def svec_rows(self) -> list[sps.csr_matrix]:
        """Per block: sparse map y -> svec(A_b(y)) (upper triangle, column-major, off-diagonals * sqrt 2)."""
        out = []
        N = len(self.c)
        for b in self.blocks:
            sl = self.slices[b.measure]
            S = b.S.tocsc()
            rows, cols, vals = [], [], []
            k = 0
            for cidx in range(b.n):
                for r in range(cidx + 1):
                    col = S[:, int(b.hank[r, cidx])]
                    w = 1.0 if r == cidx else math.sqrt(2.0)
                    rows.extend([k] * col.nnz)
                    cols.extend((col.indices + sl.start).tolist())
                    vals.extend((w * col.data).tolist())
                    k += 1
            out.append(sps.csr_matrix((vals, (rows, cols)), shape=(k, N)))
        return out


# ---------------------------------------------------------------------------
@dataclass
class SolveResult:
    status: str
    rho_d: float
    dual_value: float
    degree: int
    order: int
    variant: str
    moments: dict[str, np.ndarray]
    dual_w: Polynomial
    dual_h: Polynomial
    gap: float
    pinf: float
    dinf: float
    iterations: int
    seconds: float
    backend: str = "hankel"
    problem_hash: str = ""
    epsilon: float | None = None
    x_box: tuple | None = None
    lam: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "near_optimal")

    def to_json(self) -> dict:
        return {
            "status": self.status, "rho_d": self.rho_d, "dual_value": self.dual_value,
            "degree": self.degree, "order": self.order, "variant": self.variant,
            "w": self.dual_w.to_json(), "h": self.dual_h.to_json(),
            "space": [self.dual_w.space.n, self.dual_w.space.p, self.dual_w.space.t],
            "gap": self.gap, "pinf": self.pinf, "dinf": self.dinf,
            "iterations": self.iterations, "seconds": self.seconds, "backend": self.backend,
            "problem_hash": self.problem_hash, "epsilon": self.epsilon,
            "x_box": [list(b) for b in self.x_box] if self.x_box else None,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SolveResult":
        try:
            sp = VariableSpace(*data["space"])
            return cls(
                status=data["status"], rho_d=float(data["rho_d"]), dual_value=float(data.get("dual_value", data["rho_d"])),
                degree=int(data["degree"]), order=int(data.get("order", int(data["degree"]) // 2)),
                variant=data.get("variant", "base"), moments={},
                dual_w=Polynomial.from_json(sp, data["w"]), dual_h=Polynomial.from_json(sp, data.get("h", [])),
                gap=float(data["gap"]), pinf=float(data.get("pinf", 0.0)), dinf=float(data.get("dinf", 0.0)),
                iterations=int(data.get("iterations", 0)), seconds=float(data.get("seconds", 0.0)),
                backend=data.get("backend", "hankel"), problem_hash=data.get("problem_hash", ""),
                epsilon=data.get("epsilon"),
                x_box=tuple(tuple(b) for b in data["x_box"]) if data.get("x_box") else None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SolveError(f"malformed result file: {exc}") from None

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "SolveResult":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SolveError(f"malformed result file: {exc}") from None
        return cls.from_json(data)


def _certificates(relax: MomentRelaxation, lam: np.ndarray) -> tuple[Polynomial, Polynomial]:
    space = relax.space
    w = {}
    h = {}
    tail = (0,) * (space.p + space.t)
    for i, eq in enumerate(relax.equalities):
        if eq.kind == "marginal":
            e = tuple(eq.key) + tail
            w[e] = w.get(e, 0.0) + lam[i]
        elif eq.kind == "coupling":
            alpha, beta = eq.key
            e = tuple(alpha) + tuple(beta) + (0,) * space.t
            h[e] = h.get(e, 0.0) + lam[i]
    w_s = Polynomial(space, w)
    h_s = Polynomial(space, h)
    # back to original coordinates on x and omega
    sh = np.zeros(space.dim)
    sc = np.ones(space.dim)
    for blk in ("x", "omega"):
        s = space.block_slice(blk)
        sh[s] = -relax.shift[s] / relax.scale[s]
        sc[s] = 1.0 / relax.scale[s]
    return w_s.affine_substitute(sh, sc), h_s.affine_substitute(sh, sc)


def _solve_hankel(relax: MomentRelaxation, tol: float, st: SolveSettings, init_scale: float = 1.0):
    prob = ConicProblem.from_relaxation(relax)
    sdp = HankelSDP(prob.E, prob.f, prob.c, prob.slices, prob.blocks)
    return sdp.solve(IPMSettings(tol_gap=tol, tol_feas=tol, max_iter=st.max_iter,
                                 verbose=st.verbose, time_limit=st.time_limit,
                                 init_scale=init_scale))


def _solve_clarabel(relax: MomentRelaxation, tol: float, st: SolveSettings, init_scale: float = 1.0):
    import clarabel

    from .ipm import IPMResult

    prob = ConicProblem.from_relaxation(relax)
    sdp = HankelSDP(prob.E, prob.f, prob.c, prob.slices, prob.blocks)
    keep = sdp.independent_rows()
    E, f = prob.E[keep], prob.f[keep]
    svecs = prob.svec_rows()
    A = sps.vstack([E] + [-s for s in svecs]).tocsc()
    b = np.concatenate([f] + [np.zeros(s.shape[0]) for s in svecs])
    cones = [clarabel.ZeroConeT(E.shape[0])] + [clarabel.PSDTriangleConeT(n) for n in prob.block_dims]
    settings = clarabel.DefaultSettings()
    settings.verbose = st.verbose
    settings.tol_gap_abs = settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.max_iter = st.max_iter
    N = len(prob.c)
    solver = clarabel.DefaultSolver(sps.csc_matrix((N, N)), -prob.c, A, b, cones, settings)
    sol = solver.solve()
    y = np.array(sol.x)
    lam = np.zeros(prob.E.shape[0])
    lam[keep] = np.array(sol.z)[: E.shape[0]]
    name = str(sol.status)
    status = "optimal" if name.endswith("Solved") and "Almost" not in name else (
        "near_optimal" if "AlmostSolved" in name else
        "infeasible" if "PrimalInfeasible" in name else
        "unbounded" if "DualInfeasible" in name else "numerical_failure")
    pobj = float(prob.c @ y)
    dobj = float(prob.f @ lam)
    rE = np.linalg.norm(prob.E @ y - prob.f) / (1 + np.linalg.norm(prob.f))
    return IPMResult(status, y, lam, [], [], pobj, dobj,
                     abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj)), rE, 0.0, int(sol.iterations),
                     float(sol.solve_time))


def solve(relax: MomentRelaxation, settings: SolveSettings | None = None, problem_hash: str = "") -> SolveResult:
    """Solve and return rho_d with the certificate polynomials (original coordinates).

    One automatic retry at the fallback tolerance, from a larger starting
    point, is made when the first attempt ends short of both tolerances.
    """
    st = settings or SolveSettings.from_env()
    runner = _solve_clarabel if st.backend == "clarabel" else _solve_hankel
    out = runner(relax, st.tol, st)
    status = out.status
    if status != "optimal":
        if max(out.gap, out.pinf, out.dinf) <= st.fallback_tol:
            status = "near_optimal"
        else:
            retry = runner(relax, st.fallback_tol, st, init_scale=10.0)
            if retry.status == "optimal" or max(retry.gap, retry.pinf, retry.dinf) <= st.fallback_tol:
                out, status = retry, "near_optimal"
            else:
                status = retry.status if retry.status in ("infeasible", "unbounded") else "numerical_failure"
                out = retry
    w, h = _certificates(relax, out.lam)
    moments = {k: out.y[m.slice()].copy() for k, m in relax.measures.items()}
    spec = relax.scaled.spec if relax.scaled is not None else None
    return SolveResult(
        status=status, rho_d=out.pobj, dual_value=out.dobj, degree=relax.degree, order=relax.order,
        variant=relax.variant, moments=moments, dual_w=w, dual_h=h, gap=out.gap, pinf=out.pinf,
        dinf=out.dinf, iterations=out.iterations, seconds=out.seconds, backend=st.backend,
        problem_hash=problem_hash, epsilon=spec.epsilon if spec else None,
        x_box=spec.X.box if spec else None, lam=out.lam,
    )


# ---------------------------------------------------------------------------
@dataclass
class InnerApproximation:
    """{x in X : w(x) < epsilon}."""

    w: Polynomial
    epsilon: float
    degree: int
    x_box: tuple | None = None

    def _points(self, x) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        n = self.w.space.n
        if pts.shape[1] != n:
            if pts.shape[0] == n and pts.shape[1] != n:
                pts = pts.T
            else:
                raise ValueError(f"points must have {n} coordinates")
        full = np.zeros((pts.shape[0], self.w.space.dim))
        full[:, :n] = pts
        return full

    def evaluate(self, x) -> np.ndarray:
        return self.w.evaluate_many(self._points(x))

    def member(self, x) -> np.ndarray:
        pts = self._points(x)[:, : self.w.space.n]
        ok = self.w.evaluate_many(self._points(pts)) < self.epsilon
        if self.x_box is not None:
            for i, (lo, hi) in enumerate(self.x_box):
                ok &= (pts[:, i] >= lo - 1e-12) & (pts[:, i] <= hi + 1e-12)
        return ok

    def __contains__(self, x) -> bool:
        return bool(self.member(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1))[0])

    def grid(self, steps: int | Sequence[int]) -> np.ndarray:
        if self.x_box is None:
            raise ValueError("grid sweeps need box bounds on X")
        n = len(self.x_box)
        steps = [steps] * n if np.isscalar(steps) else list(steps)
        axes = [np.linspace(lo, hi, k) if k > 1 else np.array([(lo + hi) / 2])
                for (lo, hi), k in zip(self.x_box, steps)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def sweep(self, steps) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pts = self.grid(steps)
        return pts, self.evaluate(pts), self.member(pts)

    def intervals(self, steps: int = 2001, tol: float = 1e-6) -> list[tuple[float, float]]:
        """Maximal intervals of {w < eps} for one-dimensional X."""
        if self.w.space.n != 1 or self.x_box is None:
            raise ValueError("interval extraction is for one-dimensional box X")
        lo, hi = self.x_box[0]
        xs = np.linspace(lo, hi, steps)
        inside = self.evaluate(xs[:, None]) < self.epsilon

        def g(v):
            return float(self.evaluate(np.array([[v]]))[0]) - self.epsilon

        def refine(a, b):
            # g(a) and g(b) have opposite signs
            ga = g(a)
            while b - a > tol:
                m = 0.5 * (a + b)
                gm = g(m)
                if (gm < 0) == (ga < 0):
                    a, ga = m, gm
                else:
                    b = m
            return 0.5 * (a + b)

        out = []
        k = 0
        while k < steps:
            if not inside[k]:
                k += 1
                continue
            start = lo if k == 0 else refine(xs[k - 1], xs[k])
            j = k
            while j + 1 < steps and inside[j + 1]:
                j += 1
            end = hi if j == steps - 1 else refine(xs[j], xs[j + 1])
            out.append((float(start), float(end)))
            k = j + 1
        return out


def extract_inner(result: SolveResult, epsilon: float) -> InnerApproximation:
    if not result.ok:
        raise SolveError(f"cannot extract an inner set from a {result.status} solve")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    return InnerApproximation(result.dual_w, float(epsilon), result.degree, result.x_box)


def certify_pointwise(inner: InnerApproximation, oracle_values, tol: float = 1e-4) -> dict:
    """Compare w with oracle kappa values: min gap and the points below -tol."""
    xs = np.atleast_2d(np.asarray([np.atleast_1d(x) for x, _ in oracle_values], dtype=float))
    kap = np.array([k for _, k in oracle_values], dtype=float)
    if xs.size == 0:
        return {"min_gap": math.inf, "argmin": None, "violations": 0, "tol": tol, "points": 0}
    gap = inner.evaluate(xs) - kap
    i = int(np.argmin(gap))
    bad = np.flatnonzero(gap < -tol)
    return {"min_gap": float(gap[i]), "argmin": xs[i].tolist(), "violations": int(bad.size),
            "violation_points": xs[bad].tolist(), "tol": tol, "points": int(len(kap))}
