"""Parametrised distribution families with polynomial moment maps.

A family maps a parameter vector ``a`` to a probability measure ``mu_a`` on
the noise space.  What the relaxations need is that every moment
``E_{mu_a}[omega^beta]`` is a polynomial ``p_beta(a)``; each family below
supplies that polynomial exactly, plus a sampler and (where one exists) a
closed-form interval probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy import special

from .polycore import Polynomial, VariableSpace
from .semialg import SemialgebraicSet, box_set, contains


class UnsupportedMoment(KeyError):
    pass


def _as_beta(beta, p: int) -> tuple[int, ...]:
    b = (int(beta),) if np.isscalar(beta) else tuple(int(v) for v in beta)
    if len(b) != p:
        raise ValueError(f"beta must have {p} entries")
    if any(v < 0 for v in b):
        raise ValueError("beta must be componentwise >= 0")
    return b


@lru_cache(maxsize=None)
def stirling2(n: int, k: int) -> int:
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return k * stirling2(n - 1, k) + stirling2(n - 1, k - 1)


def derive_seed(seed: int, task: int) -> np.random.SeedSequence:
    """Independent stream for (seed, task); scheduling-order free."""
    return np.random.SeedSequence([int(seed), int(task)])


@dataclass(frozen=True)
class DistributionFamily:
    """Base class.  ``param_set`` is a set over the a-block of its own space."""

    p: int = 1
    t: int = 1
    param_set: SemialgebraicSet | None = None
    kind: str = field(default="abstract", init=False)

    def param_space(self) -> VariableSpace:
        return VariableSpace(1, self.p, self.t)

    def moment_polynomial(self, beta, space: VariableSpace | None = None) -> Polynomial:
        b = _as_beta(beta, self.p)
        base = self._moment(b)
        if space is None or space == self.param_space():
            return base
        if space.p != self.p or space.t != self.t:
            raise ValueError("target space has incompatible noise/parameter blocks")
        src = base.space
        mapping = list(range(src.n)) + [space.n + i for i in range(src.p + src.t)]
        return base.embed(space, mapping)

    def moment_degree(self, beta) -> int:
        return self.moment_polynomial(beta).degree

    def _moment(self, beta: tuple[int, ...]) -> Polynomial:
        raise NotImplementedError

    def check_param(self, a, tol: float = 1e-9) -> np.ndarray:
        a = np.asarray(a, dtype=float).ravel()
        if a.shape[0] != self.t:
            raise ValueError(f"parameter must have {self.t} entries")
        if self.param_set is not None and not contains(self.param_set, a, tol):
            raise ValueError(f"parameter {a.tolist()} lies outside the parameter set")
        return a

    def sample(self, a, count: int, seed: int) -> np.ndarray:
        """``count`` i.i.d. draws from mu_a, shape (count, p)."""
        a = self.check_param(a)
        if count == 0:
            return np.zeros((0, self.p))
        rng = np.random.default_rng(seed)
        return self._draw(a, int(count), rng)

    def _draw(self, a: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError(f"{self.kind} family has no sampler")

    def tail_probability(self, a, interval: tuple[float, float]) -> float:
        raise NotImplementedError(f"{self.kind} family has no closed-form CDF")

    def numeric_moment(self, a, beta) -> float:
        """Independent check value for p_beta(a): quadrature or summation."""
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GaussianUnivariate(DistributionFamily):
    """N(mean, sigma^2) with a = (mean, sigma); or a = (sigma,) when ``fixed_mean`` is set."""

    fixed_mean: float | None = None
    kind: str = field(default="gaussian1d", init=False)

    def __post_init__(self):
        want_t = 1 if self.fixed_mean is not None else 2
        if self.p != 1 or self.t != want_t:
            raise ValueError(f"univariate Gaussian needs p=1, t={want_t}")
        if self.param_set is not None and self.param_set.box is not None:
            if self.param_set.box[-1][0] <= 0:
                raise ValueError("deviation lower bound must be strictly positive")

    def mean_sigma(self, a) -> tuple[float, float]:
        a = np.asarray(a, dtype=float).ravel()
        if self.fixed_mean is not None:
            return float(self.fixed_mean), float(a[0])
        return float(a[0]), float(a[1])

    def _moment(self, beta):
        sp = self.param_space()
        if self.fixed_mean is None:
            m, s = sp.a(0), sp.a(1)
        else:
            m, s = sp.const(self.fixed_mean), sp.a(0)
        s2 = s * s
        k = beta[0]
        prev, cur = sp.const(0.0), sp.const(1.0)
        for j in range(1, k + 1):
            # m_j = mean * m_{j-1} + (j - 1) sigma^2 m_{j-2}
            prev, cur = cur, m * cur + (j - 1) * (s2 * prev)
        return cur

    def _draw(self, a, count, rng):
        m, s = self.mean_sigma(a)
        return (m + s * rng.standard_normal(count)).reshape(count, 1)

    def tail_probability(self, a, interval):
        lo, hi = interval
        if lo > hi:
            raise ValueError("interval needs lo <= hi")
        m, s = self.mean_sigma(a)
        return float(special.ndtr((hi - m) / s) - special.ndtr((lo - m) / s))

    def numeric_moment(self, a, beta):
        m, s = self.mean_sigma(a)
        k = _as_beta(beta, 1)[0]
        nodes, weights = special.roots_hermitenorm(max(k // 2 + 2, 8))
        return float(np.sum(weights * (m + s * nodes) ** k) / math.sqrt(2 * math.pi))

    def to_json(self):
        return {"family": "gaussian1d", "fixed_mean": self.fixed_mean}


# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GaussianMultivariate(DistributionFamily):
    """N(theta, Sigma) on R^p with a = (theta_1..theta_p, upper triangle of Sigma row-wise)."""

    kind: str = field(default="gaussian", init=False)

    def __post_init__(self):
        if self.t != self.p + self.p * (self.p + 1) // 2:
            raise ValueError("t must equal p + p(p+1)/2")

    def tri_index(self, i: int, j: int) -> int:
        i, j = min(i, j), max(i, j)
        return self.p + i * self.p - i * (i - 1) // 2 + (j - i)

    def unpack(self, a) -> tuple[np.ndarray, np.ndarray]:
        a = np.asarray(a, dtype=float).ravel()
        theta = a[: self.p]
        cov = np.empty((self.p, self.p))
        for i in range(self.p):
            for j in range(self.p):
                cov[i, j] = a[self.tri_index(i, j)]
        return theta, cov

    def _moment(self, beta):
        sp = self.param_space()
        p = self.p
        table: dict[tuple[int, ...], Polynomial] = {(0,) * p: sp.const(1.0)}

        # E[w_i w^b] = theta_i E[w^b] + sum_j Sigma_ij b_j E[w^{b - e_j}]
        def get(b):
            if b in table:
                return table[b]
            i = next(k for k in range(p) if b[k] > 0)
            b0 = list(b)
            b0[i] -= 1
            b0 = tuple(b0)
            val = sp.a(i) * get(b0)
            for j in range(p):
                if b0[j]:
                    bj = list(b0)
                    bj[j] -= 1
                    val = val + b0[j] * (sp.a(self.tri_index(i, j)) * get(tuple(bj)))
            table[b] = val
            return val

        return get(tuple(beta))

    def _draw(self, a, count, rng):
        theta, cov = self.unpack(a)
        return rng.multivariate_normal(theta, cov, size=count)

    def numeric_moment(self, a, beta):
        theta, cov = self.unpack(a)
        b = _as_beta(beta, self.p)
        L = np.linalg.cholesky(cov)
        nq = max(sum(b) // 2 + 2, 6)
        nodes, weights = special.roots_hermitenorm(nq)
        weights = weights / math.sqrt(2 * math.pi)
        grids = np.meshgrid(*([nodes] * self.p), indexing="ij")
        wgrid = np.ones_like(grids[0])
        for g in np.meshgrid(*([weights] * self.p), indexing="ij"):
            wgrid = wgrid * g
        z = np.stack([g.ravel() for g in grids], axis=1)
        pts = theta + z @ L.T
        vals = np.prod(pts ** np.array(b), axis=1)
        return float(np.sum(wgrid.ravel() * vals))

    def to_json(self):
        return {"family": "gaussian", "p": self.p}


# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Exponential(DistributionFamily):
    """Density exp(-omega / a) / a on omega >= 0 (mean a)."""

    kind: str = field(default="exponential", init=False)

    def __post_init__(self):
        if self.p != 1 or self.t != 1:
            raise ValueError("exponential family needs p=1, t=1")

    def _moment(self, beta):
        sp = self.param_space()
        k = beta[0]
        return math.factorial(k) * sp.a(0) ** k

    def _draw(self, a, count, rng):
        return rng.exponential(float(a[0]), size=count).reshape(count, 1)

    def tail_probability(self, a, interval):
        lo, hi = interval
        if lo > hi:
            raise ValueError("interval needs lo <= hi")
        scale = float(np.asarray(a, dtype=float).ravel()[0])

        def cdf(v):
            return 0.0 if v <= 0 else -math.expm1(-v / scale)

        return cdf(hi) - cdf(lo)

    def numeric_moment(self, a, beta):
        scale = float(np.asarray(a, dtype=float).ravel()[0])
        k = _as_beta(beta, 1)[0]
        nodes, weights = special.roots_laguerre(max(k // 2 + 2, 8))
        return float(np.sum(weights * (scale * nodes) ** k))

    def to_json(self):
        return {"family": "exponential"}


@dataclass(frozen=True)
class Poisson(DistributionFamily):
    kind: str = field(default="poisson", init=False)

    def __post_init__(self):
        if self.p != 1 or self.t != 1:
            raise ValueError("Poisson family needs p=1, t=1")

    def _moment(self, beta):
        sp = self.param_space()
        k = beta[0]
        # Touchard polynomial: sum_j S(k, j) a^j
        out = sp.zero() if k else sp.const(1.0)
        for j in range(1, k + 1):
            out = out + stirling2(k, j) * sp.a(0) ** j
        return out

    def _draw(self, a, count, rng):
        return rng.poisson(float(a[0]), size=count).reshape(count, 1).astype(float)

    def numeric_moment(self, a, beta):
        lam = float(np.asarray(a, dtype=float).ravel()[0])
        k = _as_beta(beta, 1)[0]
        total, mass, j = 0.0, 0.0, 0
        logp = -lam
        while mass < 1 - 1e-14 or j <= lam:
            pj = math.exp(logp)
            total += pj * j ** k
            mass += pj
            j += 1
            logp += math.log(lam) - math.log(j)
        return total

    def to_json(self):
        return {"family": "poisson"}


@dataclass(frozen=True)
class Binomial(DistributionFamily):
    """Binomial(N, a), a in [0, 1].  Raw moments: sum_j S(k, j) N_(j) a^j."""

    N: int = 1
    kind: str = field(default="binomial", init=False)

    def __post_init__(self):
        if self.p != 1 or self.t != 1 or self.N < 1:
            raise ValueError("binomial family needs p=1, t=1, N >= 1")

    def _moment(self, beta):
        sp = self.param_space()
        k = beta[0]
        out = sp.zero() if k else sp.const(1.0)
        for j in range(1, min(k, self.N) + 1):
            falling = math.perm(self.N, j)
            out = out + (stirling2(k, j) * falling) * sp.a(0) ** j
        return out

    def _draw(self, a, count, rng):
        return rng.binomial(self.N, float(a[0]), size=count).reshape(count, 1).astype(float)

    def numeric_moment(self, a, beta):
        q = float(np.asarray(a, dtype=float).ravel()[0])
        k = _as_beta(beta, 1)[0]
        return float(sum(math.comb(self.N, j) * q ** j * (1 - q) ** (self.N - j) * j ** k
                         for j in range(self.N + 1)))

    def to_json(self):
        return {"family": "binomial", "N": self.N}


# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class FiniteList(DistributionFamily):
    """Finite family mu_1..mu_k indexed by a in {1, ..., k}.

    ``components`` are (family, parameter) pairs.  The moment map is the
    degree-(k-1) Lagrange interpolant through the component moments, so it
    is exact on the admissible points a = 1..k.
    """

    components: tuple = ()
    kind: str = field(default="finite", init=False)

    def __post_init__(self):
        if self.t != 1 or len(self.components) < 1:
            raise ValueError("finite family needs t=1 and at least one component")
        for fam, _ in self.components:
            if fam.p != self.p:
                raise ValueError("component noise dimension mismatch")

    @staticmethod
    def make_param_set(k: int, p: int = 1) -> SemialgebraicSet:
        sp = VariableSpace(1, p, 1)
        base = box_set(sp, "a", [(1.0, float(k))])
        prod = sp.const(1.0)
        for i in range(1, k + 1):
            prod = prod * (sp.a(0) - i)
        return SemialgebraicSet(sp, "a", base.inequalities, (prod,) if k > 1 else (sp.a(0) - 1.0,), None, base.box)

    def _moment(self, beta):
        sp = self.param_space()
        k = len(self.components)
        vals = [float(fam.moment_polynomial(beta)(np.r_[0.0, np.zeros(fam.p), np.asarray(par, float)]))
                for fam, par in self.components]
        out = sp.zero()
        a = sp.a(0)
        for i in range(k):
            basis = sp.const(1.0)
            for j in range(k):
                if j != i:
                    basis = basis * ((a - (j + 1)) / float(i - j))
            out = out + vals[i] * basis
        return out

    def _component(self, a):
        idx = int(round(float(np.asarray(a, dtype=float).ravel()[0]))) - 1
        if not 0 <= idx < len(self.components):
            raise ValueError("parameter must be one of 1..k")
        return self.components[idx]

    def _draw(self, a, count, rng):
        fam, par = self._component(a)
        return fam._draw(np.asarray(par, float), count, rng)

    def tail_probability(self, a, interval):
        fam, par = self._component(a)
        return fam.tail_probability(par, interval)

    def numeric_moment(self, a, beta):
        fam, par = self._component(a)
        return fam.numeric_moment(par, beta)

    def to_json(self):
        return {"family": "finite", "components": [{**fam.to_json(), "param": list(map(float, par))}
                                                   for fam, par in self.components]}


@dataclass(frozen=True)
class MomentTable(DistributionFamily):
    """User-supplied moment map beta -> p_beta(a) (e.g. elliptical families)."""

    table: Mapping = field(default_factory=dict)
    kind: str = field(default="moment_table", init=False)

    def __post_init__(self):
        if not any(sum(b) == 0 for b in self.table):
            # probability measures: p_0 = 1
            object.__setattr__(self, "table", {**self.table, (0,) * self.p: self.param_space().const(1.0)})

    def _moment(self, beta):
        try:
            poly = self.table[beta]
        except KeyError:
            raise UnsupportedMoment(f"moment table has no entry for beta={list(beta)}") from None
        return poly

    def to_json(self):
        return {"family": "moment_table",
                "betas": [list(b) for b in self.table],
                "polys": [q.to_json() for q in self.table.values()]}


def family_from_json(data: Mapping, param_set: SemialgebraicSet | None, p: int, t: int) -> DistributionFamily:
    name = data.get("family")
    if name == "gaussian1d":
        return GaussianUnivariate(p=p, t=t, param_set=param_set, fixed_mean=data.get("fixed_mean"))
    if name == "gaussian":
        return GaussianMultivariate(p=p, t=t, param_set=param_set)
    if name == "exponential":
        return Exponential(p=p, t=t, param_set=param_set)
    if name == "poisson":
        return Poisson(p=p, t=t, param_set=param_set)
    if name == "binomial":
        return Binomial(p=p, t=t, param_set=param_set, N=int(data["N"]))
    if name == "finite":
        comps = []
        for c in data["components"]:
            sub = family_from_json(c, None, p, len(c["param"]))
            comps.append((sub, tuple(c["param"])))
        return FiniteList(p=p, t=t, param_set=param_set, components=tuple(comps))
    if name == "moment_table":
        sp = VariableSpace(1, p, t)
        table = {tuple(int(v) for v in b): Polynomial.from_json(sp, poly)
                 for b, poly in zip(data["betas"], data["polys"])}
        return MomentTable(p=p, t=t, param_set=param_set, table=table)
    raise ValueError(f"family: unknown family {name!r}")


def reference_param(param_set: SemialgebraicSet) -> np.ndarray:
    """Chebyshev-style centre of the parameter set (box midpoint)."""
    if param_set.box is None:
        raise ValueError("parameter set has no box bounds")
    return np.array([(lo + hi) / 2 for lo, hi in param_set.box])


def sample_many(family: DistributionFamily, params: Sequence, count: int, seed: int) -> np.ndarray:
    """Draws for several parameters, one derived stream per parameter: shape (len(params), count, p)."""
    out = np.empty((len(params), count, family.p))
    for k, a in enumerate(params):
        rng = np.random.default_rng(derive_seed(seed, k))
        out[k] = family._draw(np.asarray(a, dtype=float), count, rng) if count else out[k]
    return out
