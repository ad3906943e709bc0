"""Primal-dual interior-point method for Hankel-structured moment SDPs.

Problem (moment side)::

    max  c'y   s.t.  E y = f,   Z_b = A_b(y) >= 0  for every PSD block b

with A_b(y) = (S_b' y)[H_b]: a sparse shift followed by a Hankel gather.
Certificate side::

    min  f'lam   s.t.  E' lam = c + sum_b A_b*(X_b),   X_b >= 0

Search directions are HKM with a Mehrotra predictor-corrector.  Each PSD
block touches the moments of a single measure, so the Schur matrix
M = sum_b A_b*(X_b A_b(.) Z_b^-1) is block-diagonal over measures.  The
equalities enter through the augmented system [[M, E'], [E, 0]], factored
densely; the reduced form E M^-1 E' squares the conditioning of M, which
near the optimum of a degree-12 problem is already ~1e10.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

log = logging.getLogger(__name__)

WORK_ELEMS = 4_000_000  # batch size (in doubles) for the Schur assembly


@dataclass
class HankelBlock:
    measure: int
    hank: np.ndarray            # (n, n) -> local index
    S: sps.csr_matrix           # (N_measure, L) shift restricted to the measure
    n: int = 0
    L: int = 0
    P: sps.csc_matrix | None = None   # (n*n, L) gather pattern
    pairs: list = field(default_factory=list)

    def __post_init__(self):
        self.n = self.hank.shape[0]
        self.L = self.S.shape[1]
        flat = self.hank.ravel()
        self.P = sps.csc_matrix((np.ones(flat.size), (np.arange(flat.size), flat)), shape=(flat.size, self.L))
        order = np.argsort(flat, kind="stable")
        bounds = np.searchsorted(flat[order], np.arange(self.L + 1))
        rr, cc = np.divmod(order, self.n)
        self.pairs = [(rr[bounds[g]:bounds[g + 1]], cc[bounds[g]:bounds[g + 1]]) for g in range(self.L)]
        self.ST = self.S.T.tocsr()

    def op(self, ym: np.ndarray) -> np.ndarray:
        return (self.ST @ ym)[self.hank]

    def adj(self, G: np.ndarray) -> np.ndarray:
        return self.S @ (self.P.T @ G.ravel())

    def schur(self, X: np.ndarray, Zi: np.ndarray) -> np.ndarray:
        """S Nloc S' with Nloc[g, g'] = tr(H_g X H_g' Zi)."""
        n, L = self.n, self.L
        Nloc = np.empty((L, L))
        batch = max(1, WORK_ELEMS // (n * n))
        for g0 in range(0, L, batch):
            gs = range(g0, min(L, g0 + batch))
            W = np.empty((len(gs), n * n))
            for k, g in enumerate(gs):
                rs, cs = self.pairs[g]
                W[k] = (X[cs, :].T @ Zi[rs, :]).ravel()
            Nloc[g0:g0 + len(gs)] = (self.P.T @ W.T).T
        Nloc = 0.5 * (Nloc + Nloc.T)
        SN = self.S @ Nloc
        return self.S @ SN.T


@dataclass
class IPMSettings:
    tol_gap: float = 1e-8
    tol_feas: float = 1e-8
    max_iter: int = 120
    verbose: bool = False
    time_limit: float = 3600.0
    refine: int = 2
    stall_iters: int = 8
    init_scale: float = 1.0     # multiplies the default starting point X = Z = s I


@dataclass
class IPMResult:
    status: str
    y: np.ndarray
    lam: np.ndarray
    X: list
    Z: list
    pobj: float
    dobj: float
    gap: float
    pinf: float
    dinf: float
    iterations: int
    seconds: float
    history: list = field(default_factory=list)


def _max_step(L: np.ndarray, D: np.ndarray) -> float:
    """Largest alpha with L L' + alpha D PSD (L lower Cholesky factor)."""
    Li = sla.solve_triangular(L, np.eye(L.shape[0]), lower=True, check_finite=False)
    T = Li @ D @ Li.T
    lmin = float(np.linalg.eigvalsh(0.5 * (T + T.T))[0])
    return math.inf if lmin >= 0 else -1.0 / lmin


class HankelSDP:
    """Solver-side view of a moment relaxation."""

    def __init__(self, E: sps.csr_matrix, f: np.ndarray, c: np.ndarray,
                 slices: list[slice], blocks: list[HankelBlock]):
        self.E = E.tocsr()
        self.f = np.asarray(f, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.slices = slices
        self.blocks = blocks
        self.N = len(c)
        self.nb = sum(b.n for b in blocks)

    # -- operators -----------------------------------------------------------
    def op(self, y):
        return [b.op(y[self.slices[b.measure]]) for b in self.blocks]

    def adj(self, Gs):
        out = np.zeros(self.N)
        for b, G in zip(self.blocks, Gs):
            out[self.slices[b.measure]] += b.adj(G)
        return out

    # -- presolve ------------------------------------------------------------
    def independent_rows(self, tol: float = 1e-9) -> np.ndarray:
        """Indices of a maximal independent row subset of E (pivoted QR)."""
        r = self.E.shape[0]
        if r == 0:
            return np.zeros(0, dtype=int)
        Et = self.E.T.toarray()
        norms = np.linalg.norm(Et, axis=0)
        Et = Et / np.where(norms > 0, norms, 1.0)
        R, piv = sla.qr(Et, mode="r", pivoting=True, check_finite=False)
        diag = np.abs(np.diag(R))
        rank = int(np.sum(diag > tol * max(diag[0], 1.0)))
        keep = np.sort(piv[:rank])
        return keep

    # -- main loop -------------------------------------------------------------
    def solve(self, settings: IPMSettings | None = None) -> IPMResult:
        st = settings or IPMSettings()
        t0 = time.perf_counter()
        E_full, f_full = self.E, self.f
        keep = self.independent_rows()
        E, f = E_full[keep], f_full[keep]
        # unit row norms; multipliers are scaled back on exit
        rs = np.sqrt(np.asarray(E.multiply(E).sum(axis=1)).ravel())
        rs = np.where(rs > 0, rs, 1.0)
        E = sps.csr_matrix(sps.diags(1.0 / rs) @ E)
        f = f / rs
        c = self.c
        ET = E.T.tocsr()
        Edense = E.toarray()

        y = np.zeros(self.N)
        lam = np.zeros(E.shape[0])
        X = [st.init_scale * max(10.0, math.sqrt(b.n)) * np.eye(b.n) for b in self.blocks]
        Z = [st.init_scale * max(10.0, math.sqrt(b.n)) * np.eye(b.n) for b in self.blocks]
        normf = 1.0 + np.linalg.norm(f)
        normc = 1.0 + np.linalg.norm(c)
        history = []
        status = "numerical_failure"
        it = 0
        best = None
        last_gain = 0
        mark = (math.inf, math.inf)   # score and mu at the last halving
        for it in range(st.max_iter + 1):
            AY = self.op(y)
            RZ = [a - z for a, z in zip(AY, Z)]
            rE = f - E @ y
            rc = c + self.adj(X) - ET @ lam
            pobj = float(c @ y)
            dobj = float(f @ lam)
            xz = sum(float(np.vdot(x, z)) for x, z in zip(X, Z))
            mu = xz / self.nb
            gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
            pinf = max(np.linalg.norm(rE) / normf,
                       math.sqrt(sum(float(np.vdot(r, r)) for r in RZ)) / normf)
            dinf = np.linalg.norm(rc) / normc
            history.append((it, pobj, dobj, gap, pinf, dinf, mu))
            if st.verbose:
                log.info("it %3d pobj %+.9e dobj %+.9e gap %.2e pinf %.2e dinf %.2e mu %.2e",
                         it, pobj, dobj, gap, pinf, dinf, mu)
            score = max(gap, pinf, dinf)
            # progress = score or mu halved; the relative gap sits near 1 early on
            if score < 0.5 * mark[0] or mu < 0.5 * mark[1]:
                last_gain = it
                mark = (min(score, mark[0]), min(mu, mark[1]))
            if best is None or score < best[0]:
                best = (score, it, y.copy(), lam.copy(), [x.copy() for x in X], [z.copy() for z in Z],
                        pobj, dobj, gap, pinf, dinf)
            if gap <= st.tol_gap and pinf <= st.tol_feas and dinf <= st.tol_feas:
                status = "optimal"
                break
            if it == st.max_iter or time.perf_counter() - t0 > st.time_limit:
                break
            if it - last_gain > st.stall_iters:
                break
            try:
                LZ = [sla.cholesky(z, lower=True, check_finite=False) for z in Z]
                LX = [sla.cholesky(x, lower=True, check_finite=False) for x in X]
            except np.linalg.LinAlgError:
                break
            Zi = [sla.cho_solve((l, True), np.eye(l.shape[0]), check_finite=False) for l in LZ]
            Zi = [0.5 * (z + z.T) for z in Zi]

            # Schur blocks
            Mm = [np.zeros((sl.stop - sl.start,) * 2) for sl in self.slices]
            for b, x, zi in zip(self.blocks, X, Zi):
                Mm[b.measure] += b.schur(x, zi)
            # augmented KKT [[M, E'], [E, 0]], factored densely (LU); avoids
            # forming E M^-1 E', whose condition number squares that of M
            N, r = self.N, E.shape[0]
            KKT = np.zeros((N + r, N + r))
            for k, sl in enumerate(self.slices):
                KKT[sl, sl] = 0.5 * (Mm[k] + Mm[k].T)
            KKT[:N, N:] = Edense.T
            KKT[N:, :N] = Edense
            # symmetric diagonal scaling: unit diagonal on the M block, unit rows on E
            dM = np.abs(np.diag(KKT[:N, :N]))
            sy = 1.0 / np.sqrt(np.maximum(dM, 1e-300 + 1e-14 * dM.max()))
            en = np.sqrt(np.asarray((Edense * sy) ** 2).sum(axis=1))
            sc = np.concatenate([sy, 1.0 / np.where(en > 0, en, 1.0)])
            KKT *= sc[:, None]
            KKT *= sc[None, :]
            KKT[np.arange(N), np.arange(N)] += 1e-14
            try:
                KF = sla.lu_factor(KKT, check_finite=False)
            except (np.linalg.LinAlgError, ValueError):
                break

            def kkt(g, h):
                sol = sc * sla.lu_solve(KF, sc * np.concatenate([g, h]), check_finite=False)
                return sol[:N], sol[N:]

            XRZ = self.adj([x @ r @ zi for x, r, zi in zip(X, RZ, Zi)])

            def mmul(v):
                out = np.empty_like(v)
                for k, sl in enumerate(self.slices):
                    out[sl] = Mm[k] @ v[sl]
                return out

            def direction(K):
                g = rc + self.adj(K) - XRZ
                dy, dlam = kkt(g, rE)
                for _ in range(st.refine):
                    r1 = g - mmul(dy) - (ET @ dlam if dlam.size else 0.0)
                    r2 = rE - E @ dy
                    ey, el = kkt(r1, r2)
                    dy, dlam = dy + ey, dlam + el
                dZ = [a + r for a, r in zip(self.op(dy), RZ)]
                dX = []
                for kk, x, dz, zi in zip(K, X, dZ, Zi):
                    t = x @ dz @ zi
                    dX.append(kk - 0.5 * (t + t.T))
                return dy, dlam, dX, dZ

            # predictor
            Kp = [-x for x in X]
            dy, dlam, dX, dZ = direction(Kp)
            ap = min(1.0, min(_max_step(l, d) for l, d in zip(LZ, dZ)))
            ad = min(1.0, min(_max_step(l, d) for l, d in zip(LX, dX)))
            xz_new = sum(float(np.vdot(x + ad * dx, z + ap * dz)) for x, dx, z, dz in zip(X, dX, Z, dZ))
            sigma = min(1.0, max(0.0, xz_new / xz)) ** (3 if mu > 1e-6 else 2)
            # corrector
            Kc = []
            for x, zi, dx, dz in zip(X, Zi, dX, dZ):
                t = dx @ dz @ zi
                Kc.append(sigma * mu * zi - x - 0.5 * (t + t.T))
            dy, dlam, dX, dZ = direction(Kc)
            ap = min(_max_step(l, d) for l, d in zip(LZ, dZ))
            ad = min(_max_step(l, d) for l, d in zip(LX, dX))
            gamma = 0.9 + 0.09 * min(1.0, ap, ad)
            ap = min(1.0, gamma * ap)
            ad = min(1.0, gamma * ad)
            y = y + ap * dy
            Z = [z + ap * d for z, d in zip(Z, dZ)]
            X = [x + ad * d for x, d in zip(X, dX)]
            lam = lam + ad * dlam
            if max(ap, ad) < 1e-10:
                break

        if status != "optimal" and best is not None:
            _, bit, y, lam, X, Z, pobj, dobj, gap, pinf, dinf = best
        lam_full = np.zeros(E_full.shape[0])
        lam_full[keep] = lam / rs
        return IPMResult(status, y, lam_full, X, Z, pobj, dobj, gap, pinf, dinf, it,
                         time.perf_counter() - t0, history)
