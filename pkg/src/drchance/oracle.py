"""Ground truth for the worst-case violation probability.

kappa(x) = max_{a in A} mu_a({omega : f(x, omega) <= 0}).  Two estimators:

* ``closed_form`` for a univariate Gaussian family and f affine in omega.
  The violation event is a half-line (or a union of half-lines for several
  constraints) whose probability is a normal-CDF expression in (mean, sigma).
  A single half-line is maximised at a corner of the parameter box; a union
  is maximised over a dense parameter grid that includes the corners.
* ``grid_mc``: empirical violation fraction, maximised over a parameter grid.

Both return :class:`OracleEstimate`; ``compare`` turns an inner set and an
estimate into coverage/violation counts.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .distfamily import DistributionFamily, GaussianUnivariate, sample_many
from .polycore import Polynomial
from .problem import ProblemSpec
from .semialg import contains_many
from .sdpiface import InnerApproximation

METHODS = ("closed_form", "grid_mc")


class OracleError(ValueError):
    pass


@dataclass
class OracleEstimate:
    grid: np.ndarray            # (m, n) x points
    kappa_hat: np.ndarray       # (m,)
    epsilon: float
    method: str
    a_steps: int
    samples: int
    seed: int
    seconds: float = 0.0

    def __post_init__(self):
        self.kappa_hat = np.clip(np.asarray(self.kappa_hat, dtype=float), 0.0, 1.0)

    @property
    def feasible(self) -> np.ndarray:
        # ties count as infeasible: the chance constraint is strict
        return self.kappa_hat < self.epsilon

    def feasible_intervals(self) -> list[tuple[float, float]]:
        """Runs of feasible grid points, for one-dimensional X."""
        if self.grid.shape[1] != 1:
            raise OracleError("interval view needs one-dimensional X")
        xs, ok = self.grid[:, 0], self.feasible
        out, start = [], None
        for i, flag in enumerate(ok):
            if flag and start is None:
                start = xs[i]
            if not flag and start is not None:
                out.append((float(start), float(xs[i - 1])))
                start = None
        if start is not None:
            out.append((float(start), float(xs[-1])))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.grid.shape[1]
        w.writerow([f"x{i + 1}" for i in range(n)] + ["kappa_hat", f"feasible({self.epsilon:g})"])
        for pt, k, ok in zip(self.grid, self.kappa_hat, self.feasible):
            w.writerow([f"{v:.10g}" for v in pt] + [f"{k:.10g}", int(ok)])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"method": self.method, "epsilon": self.epsilon, "a_steps": self.a_steps,
                "samples": self.samples, "seed": self.seed, "seconds": self.seconds,
                "grid": self.grid.tolist(), "kappa_hat": self.kappa_hat.tolist()}


@dataclass
class ComparisonReport:
    coverage: float
    violations: int
    n_grid: int
    n_feasible: int
    n_member: int
    violation_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    timings: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"coverage": self.coverage, "violations": self.violations,
                "grid": {"points": self.n_grid, "feasible": self.n_feasible, "member": self.n_member},
                "violation_points": self.violation_points.tolist(), "timings": self.timings}


# ---------------------------------------------------------------------------
# affine decomposition f = c(x) omega + b(x)
# ---------------------------------------------------------------------------
def affine_parts(f: Polynomial) -> tuple[Polynomial, Polynomial]:
    sp = f.space
    if sp.p != 1:
        raise OracleError("closed form needs a scalar noise")
    wi = sp.index("omega", 0)
    c, b = sp.zero(), sp.zero()
    for e, coef in f.terms.items():
        if e[wi] > 1:
            raise OracleError("closed form needs f affine in omega")
        target = list(e)
        target[wi] = 0
        term = Polynomial(sp, {tuple(target): coef})
        if e[wi] == 1:
            c = c + term
        else:
            b = b + term
    return c, b


def _full_points(space, xs: np.ndarray) -> np.ndarray:
    pts = np.zeros((xs.shape[0], space.dim))
    pts[:, : space.n] = xs
    return pts


def _half_lines(f_list: Sequence[Polynomial], xs: np.ndarray):
    """Violation event per x as the union {omega <= lo} u {omega >= hi} (+ a sure flag)."""
    m = xs.shape[0]
    lo = np.full(m, -np.inf)
    hi = np.full(m, np.inf)
    sure = np.zeros(m, dtype=bool)
    for f in f_list:
        c, b = affine_parts(f)
        pts = _full_points(f.space, xs)
        cv, bv = c.evaluate_many(pts), b.evaluate_many(pts)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -bv / cv
        pos, neg, flat = cv > 0, cv < 0, cv == 0
        lo = np.where(pos, np.maximum(lo, t), lo)   # c w + b <= 0  <=>  w <= t
        hi = np.where(neg, np.minimum(hi, t), hi)   # c < 0          <=>  w >= t
        sure |= flat & (bv <= 0)
    return lo, hi, sure


def _event_prob(lo, hi, sure, mean, sigma):
    p = special.ndtr((lo - mean) / sigma) + special.ndtr((mean - hi) / sigma)
    p = np.where(lo >= hi, 1.0, p)
    return np.where(sure, 1.0, np.minimum(p, 1.0))


def _param_grid(A_box, steps_total: int) -> np.ndarray:
    """About ``steps_total`` points on the parameter box, corners included."""
    t = len(A_box)
    per = max(2, int(round(steps_total ** (1.0 / t))))
    axes = [np.linspace(lo, hi, per) if hi > lo else np.array([lo]) for lo, hi in A_box]
    return np.array(list(itertools.product(*axes)))


def _mean_sigma_rows(family: GaussianUnivariate, params: np.ndarray):
    if family.fixed_mean is not None:
        return np.full(params.shape[0], float(family.fixed_mean)), params[:, 0]
    return params[:, 0], params[:, 1]


def closed_form_available(problem: ProblemSpec) -> bool:
    if not isinstance(problem.family, GaussianUnivariate) or problem.A.box is None:
        return False
    try:
        for f in problem.f_list:
            affine_parts(f)
    except OracleError:
        return False
    return True


def kappa_closed_form_many(xs, f_list: Sequence[Polynomial], family: DistributionFamily,
                           A_box, a_steps: int = 400) -> np.ndarray:
    if not isinstance(family, GaussianUnivariate):
        raise OracleError("closed form needs a univariate Gaussian family")
    if A_box is None:
        raise OracleError("closed form needs a box parameter set")
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    lo, hi, sure = _half_lines(f_list, xs)
    if len(f_list) == 1:
        params = np.array(list(itertools.product(*A_box)))   # corners suffice
    else:
        params = _param_grid(A_box, a_steps)
    mean, sigma = _mean_sigma_rows(family, params)
    best = np.zeros(xs.shape[0])
    for m, s in zip(mean, sigma):
        best = np.maximum(best, _event_prob(lo, hi, sure, m, s))
    return best


def kappa_closed_form(x, f: Polynomial, family: DistributionFamily, A_box) -> float:
    """Exact max over the parameter box of mu_a({omega : f(x, omega) <= 0})."""
    return float(kappa_closed_form_many(np.atleast_1d(np.asarray(x, float))[None, :], [f], family, A_box)[0])


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------
def _mc_kappa(xs, problem: ProblemSpec, a_steps: int, samples: int, seed: int) -> np.ndarray:
    if samples <= 0:
        raise OracleError("samples: must be positive")
    fam = problem.family
    if fam is None:
        raise OracleError("family: Monte Carlo needs a sampling family")
    if problem.A.box is None:
        raise OracleError("A: Monte Carlo needs box bounds on the parameter set")
    params = _param_grid(problem.A.box, a_steps)
    if problem.A.inequalities or problem.A.equalities:
        keep = contains_many(problem.A, params)
        params = params[keep]
    # one derived stream per parameter: common draws across x, order free
    draws = sample_many(fam, params, samples, seed)          # (n_a, samples, p)
    sp = problem.space
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    out = np.zeros(xs.shape[0])
    ws = sp.block_slice("omega")
    flat = draws.reshape(-1, sp.p)
    for k, x in enumerate(xs):
        pts = np.zeros((flat.shape[0], sp.dim))
        pts[:, : sp.n] = x
        pts[:, ws] = flat
        bad = np.zeros(flat.shape[0], dtype=bool)
        for f in problem.f_list:
            bad |= f.evaluate_many(pts) <= 0
        out[k] = bad.reshape(len(params), samples).mean(axis=1).max()
    return out


def kappa_grid_mc(x, problem: ProblemSpec, A_steps: int, samples: int, seed: int) -> float:
    """Largest empirical violation fraction over a parameter grid (any f_j <= 0 counts)."""
    return float(_mc_kappa(np.atleast_1d(np.asarray(x, float))[None, :], problem, A_steps, samples, seed)[0])


# ---------------------------------------------------------------------------
def x_grid(problem: ProblemSpec, steps: int | Sequence[int]) -> np.ndarray:
    box = problem.X.box
    if box is None:
        raise OracleError("X: oracle grids need box bounds")
    steps = [steps] * len(box) if np.isscalar(steps) else list(steps)
    axes = [np.linspace(lo, hi, k) if k > 1 else np.array([(lo + hi) / 2]) for (lo, hi), k in zip(box, steps)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    if problem.X.inequalities or problem.X.equalities:
        pts = pts[contains_many(problem.X, pts)]
    return pts


def feasible_set_oracle(problem: ProblemSpec, epsilon: float | None = None,
                        X_steps: int | None = None, A_steps: int | None = None,
                        samples: int | None = None, seed: int | None = None,
                        method: str = "auto", grid: np.ndarray | None = None) -> OracleEstimate:
    if problem.variant == "moment_box":
        raise OracleError("variant: no oracle for the moment-box ambiguity model")
    eps = problem.epsilon if epsilon is None else float(epsilon)
    X_steps = problem.oracle.x_steps if X_steps is None else X_steps
    A_steps = problem.oracle.a_steps if A_steps is None else A_steps
    samples = problem.oracle.samples if samples is None else samples
    seed = problem.seed if seed is None else seed
    if method == "auto":
        method = "closed_form" if closed_form_available(problem) else "grid_mc"
    if method not in METHODS:
        raise OracleError(f"method: must be one of {', '.join(METHODS)}")
    pts = x_grid(problem, X_steps) if grid is None else np.atleast_2d(np.asarray(grid, float))
    t0 = time.perf_counter()
    if method == "closed_form":
        kap = kappa_closed_form_many(pts, problem.f_list, problem.family, problem.A.box, A_steps)
    else:
        kap = _mc_kappa(pts, problem, A_steps, samples, seed)
    return OracleEstimate(pts, kap, eps, method, A_steps, samples if method == "grid_mc" else 0,
                          seed, time.perf_counter() - t0)


def compare(inner: InnerApproximation, oracle: OracleEstimate) -> ComparisonReport:
    t0 = time.perf_counter()
    if oracle.grid.shape[1] != inner.w.space.n:
        raise OracleError("grid: dimension does not match the inner approximation")
    member = inner.member(oracle.grid)
    feas = oracle.feasible
    n_feas = int(feas.sum())
    both = int((member & feas).sum())
    bad = member & ~feas
    cov = both / n_feas if n_feas else 0.0
    return ComparisonReport(cov, int(bad.sum()), len(feas), n_feas, int(member.sum()),
                            oracle.grid[bad], {"oracle_s": oracle.seconds,
                                               "compare_s": time.perf_counter() - t0})


def comparison_json(report: ComparisonReport) -> str:
    return json.dumps(report.to_json(), indent=2)
