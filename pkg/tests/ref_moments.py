"""Reference moments computed without the package's moment maps.

Gaussian moments come from the binomial expansion in exact rationals;
exponential uses adaptive quadrature; Poisson sums the pmf; binomial uses exact rational
summation; the multivariate Gaussian uses tensor Gauss-Hermite quadrature
through a Cholesky factor (exact for polynomials of the used degree).
"""

import itertools
import math
from fractions import Fraction

import numpy as np
from scipy import integrate, special, stats


def gaussian1d(mean, sigma, k):
    # E[(m + s Z)^k] by the binomial theorem; E[Z^j] = (j - 1)!! for even j
    mean, sigma = Fraction(mean), Fraction(sigma)
    total = Fraction(0)
    for j in range(0, k + 1, 2):
        total += math.comb(k, j) * mean ** (k - j) * sigma ** j * math.prod(range(j - 1, 0, -2))
    return float(total)


def exponential(scale, k):
    # adaptive quadrature of the density; scipy's expon.moment drifts by ~1e-9 at k >= 6
    val, _ = integrate.quad(lambda w: w ** k * np.exp(-w / scale) / scale, 0, np.inf,
                            epsabs=0, epsrel=1e-13, limit=200)
    return val


def poisson(lam, k):
    # direct pmf summation far into the tail; j^k weights make a mass cutoff too early
    js = np.arange(0, int(lam) + 200)
    return math.fsum(stats.poisson.pmf(js, lam) * js.astype(float) ** k)


def binomial(N, q, k):
    qf = Fraction(q)
    s = sum(math.comb(N, j) * qf ** j * (1 - qf) ** (N - j) * j ** k for j in range(N + 1))
    return float(s)


def gaussian_nd(theta, cov, beta):
    p = len(theta)
    deg = sum(beta)
    nodes, weights = special.roots_hermitenorm(deg // 2 + 2)
    weights = weights / math.sqrt(2 * math.pi)
    L = np.linalg.cholesky(cov)
    total = 0.0
    for idx in itertools.product(range(len(nodes)), repeat=p):
        z = nodes[list(idx)]
        w = np.prod(weights[list(idx)])
        omega = theta + L @ z
        total += w * np.prod(omega ** np.array(beta))
    return float(total)
