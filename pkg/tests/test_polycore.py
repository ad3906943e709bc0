import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from drchance.polycore import (Polynomial, VariableSpace, enumerate_monomials, grlex_key,
                               n_monomials, poly_diff, poly_eval, stokes_polynomial)


def test_variable_space_rejects_bad_sizes():
    with pytest.raises(ValueError):
        VariableSpace(0, 1, 0)
    with pytest.raises(ValueError):
        VariableSpace(1, 0, 0)
    with pytest.raises(ValueError):
        VariableSpace(1, 1, -1)


def test_enumerate_two_vars_degree_two():
    sp = VariableSpace(2, 1, 0)
    mons = enumerate_monomials(sp, ["x"], 2)
    assert mons == [(0, 0, 0), (1, 0, 0), (0, 1, 0), (2, 0, 0), (1, 1, 0), (0, 2, 0)]


def test_enumerate_degree_zero_is_constant_only():
    sp = VariableSpace(3, 2, 4)
    assert enumerate_monomials(sp, ["x", "omega", "a"], 0) == [(0,) * 9]


def test_enumerate_x_and_omega_degree_three():
    sp = VariableSpace(1, 1, 2)
    assert len(enumerate_monomials(sp, ["x", "omega"], 3)) == 10


@settings(max_examples=60, deadline=None)
@given(v=st.integers(1, 5), d=st.integers(0, 14))
def test_enumeration_count_is_binomial(v, d):
    sp = VariableSpace(v, 1, 0)
    mons = enumerate_monomials(sp, ["x"], d)
    assert len(mons) == math.comb(v + d, d) == n_monomials(v, d)
    assert len(set(mons)) == len(mons)
    assert all(sum(m) <= d for m in mons)


exps = st.lists(st.integers(0, 4), min_size=3, max_size=3).map(tuple)


@settings(max_examples=200, deadline=None)
@given(a=exps, b=exps, c=exps)
def test_grlex_is_a_total_order(a, b, c):
    ka, kb, kc = grlex_key(a), grlex_key(b), grlex_key(c)
    assert sum([ka < kb, ka == kb, ka > kb]) == 1
    assert (ka == kb) == (a == b)
    if ka < kb and kb < kc:
        assert ka < kc


def test_enumeration_is_grlex_sorted():
    sp = VariableSpace(2, 1, 1)
    mons = enumerate_monomials(sp, ["x", "omega", "a"], 4)
    keys = [grlex_key(m) for m in mons]
    assert keys == sorted(keys)


def test_eval_examples():
    sp = VariableSpace(1, 1, 0)
    x = sp.x()
    assert poly_eval(x * x, [3.0, 0.0]) == 9.0
    assert poly_eval(sp.zero(), [0.3, -2.0]) == 0.0

    sp2 = VariableSpace(2, 1, 0)
    x1, x2, w = sp2.x(0), sp2.x(1), sp2.omega()
    f = 2 * w * x2 * x2 - 2 * w * x1 * x1 - 1
    assert poly_eval(f, [0.0, 1.0, 1.0]) == pytest.approx(1.0)


def test_eval_dimension_mismatch():
    sp = VariableSpace(2, 1, 0)
    with pytest.raises(ValueError):
        poly_eval(sp.x(), [1.0, 2.0])


def test_zero_coefficients_are_not_stored():
    sp = VariableSpace(1, 1, 0)
    x = sp.x()
    p = (x + 1) * (x - 1) - x * x
    assert set(p.terms) == {(0, 0)}
    assert (x - x).is_zero
    assert (x - x).degree == 0
    tiny = x + 1e-16 * x * x
    assert (2, 0) not in tiny.terms


def test_diff_examples():
    sp = VariableSpace(1, 1, 0)
    x, w = sp.x(), sp.omega()
    assert poly_diff(w ** 3, ("omega", 0)) == 3 * w * w
    assert poly_diff(w - x, ("omega", 0)) == sp.const(1.0)
    assert poly_diff(w * (x - w), ("omega", 0)) == x - 2 * w


@st.composite
def random_poly(draw):
    sp = VariableSpace(2, 1, 1)
    nterms = draw(st.integers(1, 8))
    terms = {}
    for _ in range(nterms):
        e = tuple(draw(st.lists(st.integers(0, 3), min_size=4, max_size=4)))
        if sum(e) <= 6:
            terms[e] = draw(st.floats(-3, 3, allow_nan=False).filter(lambda v: abs(v) > 1e-3))
    return Polynomial(sp, terms)


@settings(max_examples=60, deadline=None)
@given(f=random_poly(), pt=st.lists(st.floats(-1, 1), min_size=4, max_size=4), var=st.integers(0, 3))
def test_diff_matches_central_differences(f, pt, var):
    blocks = [("x", 0), ("x", 1), ("omega", 0), ("a", 0)]
    df = poly_diff(f, blocks[var])
    h = 1e-6
    p = np.array(pt)
    e = np.zeros(4)
    e[var] = h
    fd = (f(p + e) - f(p - e)) / (2 * h)
    exact = df(p)
    scale = max(1.0, sum(abs(c) for c in f.terms.values()))
    assert abs(fd - exact) <= 1e-6 * scale


@settings(max_examples=50, deadline=None)
@given(f=random_poly(), g=random_poly(), pt=st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_ring_operations_agree_with_evaluation(f, g, pt):
    p = np.array(pt)
    assert (f + g)(p) == pytest.approx(f(p) + g(p), abs=1e-9)
    assert (f * g)(p) == pytest.approx(f(p) * g(p), abs=1e-8)
    assert (f - g)(p) == pytest.approx(f(p) - g(p), abs=1e-9)
    assert (f * g).degree <= f.degree + g.degree


def test_json_round_trip():
    sp = VariableSpace(2, 1, 2)
    f = 2 * sp.omega() * sp.x(1) ** 2 - 1.5 * sp.a(1) + 0.25
    assert Polynomial.from_json(sp, f.to_json()) == f


# -- Stokes polynomial --------------------------------------------------------
def test_stokes_examples():
    sp = VariableSpace(1, 1, 2)
    x, w, a, s = sp.x(), sp.omega(), sp.a(0), sp.a(1)
    f = x - w
    assert stokes_polynomial(f, 0).allclose(-s * s - (x - w) * (w - a))
    assert stokes_polynomial(f, 1).allclose(s * s * (x - 2 * w) - w * (x - w) * (w - a))
    assert stokes_polynomial(sp.zero(), 3).is_zero


def test_stokes_degree_for_affine_f():
    sp = VariableSpace(1, 1, 2)
    f = sp.x() - sp.omega()
    # sigma^2 * d/domega and f * (omega - a) both give total degree beta + 2
    assert [stokes_polynomial(f, b).degree for b in range(4)] == [2, 3, 4, 5]


def test_stokes_rejects_multivariate_noise():
    sp = VariableSpace(1, 2, 5)
    with pytest.raises(ValueError):
        stokes_polynomial(sp.x() - sp.omega(0), 0)


def _stokes_integral(beta, x, m, s):
    # K_x = {omega : x - omega <= 0} = [x, inf)
    sp = VariableSpace(1, 1, 2)
    q = stokes_polynomial(sp.x() - sp.omega(), beta)
    dens = stats.norm(m, s).pdf
    val, err = integrate.quad(lambda w: q([x, w, m, s]) * dens(w), x, np.inf,
                              epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-1, 1), m=st.floats(-0.1, 0.1), s=st.floats(0.8, 1.0), beta=st.integers(0, 3))
def test_stokes_identity_by_quadrature(x, m, s, beta):
    assert abs(_stokes_integral(beta, x, m, s)) < 1e-8
