import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from conftest import spec_of
from drchance.oracle import (OracleError, compare, feasible_set_oracle, kappa_closed_form,
                             kappa_grid_mc)
from drchance.problem import spec_from_json
from drchance.sdpiface import InnerApproximation


def _spec(**changes):
    data = spec_of("ex1").to_json()
    data.update(changes)
    return spec_from_json(data)


def _reference_kappa(x, A_box):
    # independent brute force: dense grid on A with scipy's normal survival function
    ms = np.linspace(*A_box[0], 201)
    ss = np.linspace(*A_box[1], 201)
    M, S = np.meshgrid(ms, ss)
    return float(stats.norm.sf(x, loc=M, scale=S).max())


def test_closed_form_examples(ex1):
    A = ex1.A.box
    assert 1 - kappa_closed_form([0.6244], ex1.f, ex1.family, A) == pytest.approx(0.70, abs=1e-3)
    assert 1 - kappa_closed_form([1.0], ex1.f, ex1.family, A) == pytest.approx(0.8159, abs=1e-3)
    sp = ex1.space
    assert kappa_closed_form([0.3], sp.const(-1.0), ex1.family, A) == 1.0
    assert kappa_closed_form([0.3], sp.const(1.0), ex1.family, A) == 0.0


@settings(max_examples=25, deadline=None)
@given(x=st.floats(-1, 1))
def test_corner_rule_matches_brute_force(x):
    ex1 = spec_of("ex1")
    got = kappa_closed_form([x], ex1.f, ex1.family, ex1.A.box)
    assert got == pytest.approx(_reference_kappa(x, ex1.A.box), abs=1e-12)


def test_closed_form_rejects_nonaffine(ex1):
    w = ex1.space.omega()
    with pytest.raises(OracleError):
        kappa_closed_form([0.0], ex1.f * w, ex1.family, ex1.A.box)


def test_mc_close_to_closed_form(ex1):
    cf = kappa_closed_form([0.9], ex1.f, ex1.family, ex1.A.box)
    mc = kappa_grid_mc([0.9], ex1, A_steps=100, samples=10_000, seed=3)
    assert abs(mc - cf) <= 0.02


@pytest.mark.parametrize("samples", [1_000, 10_000, 100_000])
def test_mc_converges_at_clt_rate(ex1, samples):
    xs = np.linspace(-1, 1, 5)
    cf = np.array([kappa_closed_form([x], ex1.f, ex1.family, ex1.A.box) for x in xs])
    # corners are on the parameter grid, so the grid bias is zero here
    mc = np.array([kappa_grid_mc([x], ex1, A_steps=16, samples=samples, seed=11) for x in xs])
    assert np.all(np.abs(mc - cf) <= 3 / np.sqrt(samples) + 1e-12)


def test_mc_single_parameter_matches_tail(ex1):
    spec = _spec(A={"box": [[0.05, 0.05], [0.9, 0.9]]})
    mc = kappa_grid_mc([0.3], spec, A_steps=1, samples=1_000_000, seed=5)
    tail = spec.family.tail_probability([0.05, 0.9], (0.3, np.inf))
    assert abs(mc - tail) <= 0.005


def test_mc_constant_violation(ex1):
    spec = _spec(f_list=[ex1.space.const(-1.0).to_json()])
    assert kappa_grid_mc([0.1], spec, A_steps=4, samples=100, seed=1) == 1.0
    with pytest.raises(OracleError):
        kappa_grid_mc([0.1], spec, A_steps=4, samples=0, seed=1)


def test_feasible_set_example_one(ex1):
    orc = feasible_set_oracle(ex1, X_steps=2001)
    (lo, hi), = orc.feasible_intervals()
    assert lo == pytest.approx(0.624, abs=0.01) and hi == 1.0


def test_epsilon_near_one_everything_feasible(ex1):
    orc = feasible_set_oracle(ex1, epsilon=1 - 1e-9, X_steps=101)
    assert orc.feasible.all()


def test_ties_are_infeasible(ex1):
    orc = feasible_set_oracle(ex1, X_steps=11)
    tie = feasible_set_oracle(ex1, epsilon=float(orc.kappa_hat[5]), grid=orc.grid[5:6])
    assert not tie.feasible[0]


@pytest.mark.parametrize("method", ["closed_form", "grid_mc"])
def test_feasible_sets_nest_in_epsilon(ex1, method):
    eps = [0.1, 0.2, 0.3, 0.45]
    flags = [feasible_set_oracle(ex1, epsilon=e, X_steps=101, A_steps=16, samples=500,
                                 method=method).feasible for e in eps]
    for a, b in zip(flags, flags[1:]):
        assert np.all(~a | b)


def test_mc_is_deterministic(ex1):
    a = feasible_set_oracle(ex1, X_steps=21, A_steps=9, samples=300, method="grid_mc")
    b = feasible_set_oracle(ex1, X_steps=21, A_steps=9, samples=300, method="grid_mc")
    assert np.array_equal(a.kappa_hat, b.kappa_hat)
    # evaluating points one at a time gives the same values (per-parameter streams)
    one = [kappa_grid_mc(x, ex1, 9, 300, ex1.seed) for x in a.grid[:5]]
    assert np.array_equal(np.array(one), a.kappa_hat[:5])


def test_joint_union_event():
    spec = spec_of("joint1")
    sp = spec.space
    orc = feasible_set_oracle(spec, X_steps=41)
    # union of two half-lines: brute force over a dense parameter grid
    ms = np.linspace(*spec.A.box[0], 41)
    ss = np.linspace(*spec.A.box[1], 41)
    for x, k in zip(orc.grid[::8, 0], orc.kappa_hat[::8]):
        ref = max(stats.norm.cdf(x - 1.5, m, s) + stats.norm.sf(x + 1.5, m, s) for m in ms for s in ss)
        assert k == pytest.approx(ref, abs=1e-6)
    assert sp.n == 1


def test_compare_empty_inner(ex1):
    orc = feasible_set_oracle(ex1, X_steps=51)
    sp = ex1.space
    empty = InnerApproximation(sp.const(1.0), ex1.epsilon, 2, ex1.X.box)
    rep = compare(empty, orc)
    assert rep.coverage == 0.0 and rep.violations == 0
    assert {"coverage", "violations", "grid", "timings"} <= rep.to_json().keys()


def test_compare_grid_mismatch(ex1):
    orc = feasible_set_oracle(spec_of("ex2"), X_steps=5)
    inner = InnerApproximation(ex1.space.const(0.0), 0.3, 2, ex1.X.box)
    with pytest.raises(OracleError):
        compare(inner, orc)


def test_csv_columns(ex1):
    orc = feasible_set_oracle(ex1, X_steps=3)
    rows = list(csv.reader(io.StringIO(orc.to_csv())))
    assert rows[0] == ["x1", "kappa_hat", "feasible(0.3)"]
    assert len(rows) == 4


def test_no_oracle_for_moment_box():
    with pytest.raises(OracleError):
        feasible_set_oracle(spec_of("momentbox1"))
