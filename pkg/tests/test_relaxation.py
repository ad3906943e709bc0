import json
import math

import numpy as np
import pytest
from scipy import integrate

from conftest import spec_of
from drchance.polycore import Polynomial
from drchance.problem import ConfigError, spec_from_json
from drchance.relaxation import (RelaxationError, _assemble_joint, build, build_base, build_joint,
                                 build_moment_box, build_stokes, d_min, lebesgue_box_moments,
                                 slater_witness)


def _with_f(spec, *fs):
    data = spec.to_json()
    data["f_list"] = [f.to_json() for f in fs]
    data["variant"] = "joint" if len(fs) > 1 else "base"
    return spec_from_json(data)


def test_lebesgue_examples():
    m = lebesgue_box_moments([(-1, 1)], 4)
    assert m[(2,)] == pytest.approx(1 / 3)
    assert m[(1,)] == 0.0
    assert m[(0,)] == 1.0
    m2 = lebesgue_box_moments([(-1, 1), (-1, 1)], 4)
    assert m2[(2, 2)] == pytest.approx(1 / 9)


def test_lebesgue_matches_numeric_integration():
    box = [(-0.5, 2.0), (0.1, 0.3)]
    m = lebesgue_box_moments(box, 6)
    vol = 2.5 * 0.2
    for a in [(3, 1), (0, 4), (2, 2)]:
        val, _ = integrate.dblquad(lambda y, x: x ** a[0] * y ** a[1] / vol, *box[0], *box[1])
        assert m[a] == pytest.approx(val, rel=1e-10)


def test_lebesgue_rejects_degenerate_box():
    with pytest.raises(ValueError):
        lebesgue_box_moments([(1.0, 1.0)], 2)


def test_base_block_sizes_order_two(ex1):
    r = build_base(ex1, 2)
    assert r.measures["v"].size == math.comb(3 + 4, 4) == 35
    assert r.measures["y"].size == r.measures["u"].size == math.comb(2 + 4, 4) == 15
    # coupling rows: alpha <= 4 - beta after both filters (Gaussian deg p_beta = beta)
    assert len(r.rows_of_kind("coupling")) == 15
    assert len(r.rows_of_kind("marginal")) == 5


def test_psd_block_sizes_are_binomial(ex1):
    for builder in (build_base, build_stokes):
        r = builder(ex1, 3)
        for b in r.psd:
            nv = sum(r.space.block_size(k) for k in r.measures[b.measure].blocks)
            assert b.size == math.comb(nv + b.order, b.order)
            assert b.order == r.order - math.ceil(b.multiplier.degree / 2)


def test_order_below_minimum(ex1):
    assert d_min(ex1) == 1
    with pytest.raises(RelaxationError):
        build_base(ex1, 0)


def test_constant_f_duplicates_moment_matrix(ex1):
    sp = ex1.space
    r = build_base(_with_f(ex1, sp.const(-1.0)), 2)
    ys = [b for b in r.psd if b.measure == "y"]
    plain = next(b for b in ys if b.tag == "moment")
    loc = next(b for b in ys if b.tag == "-f")
    y = np.random.default_rng(0).normal(size=r.n_vars)
    assert np.allclose(plain.matrix(y), loc.matrix(y))


def _unit_mass_combination(r):
    """Coupling row at (0, 0) plus the v marginal row at 0 leaves sum of y00 + u00 = 1."""
    E, f = r.equality_matrix()
    E = E.toarray()
    zero_c = next(i for i, eq in enumerate(r.equalities)
                  if eq.kind == "coupling" and sum(eq.key[0]) + sum(eq.key[1]) == 0)
    zero_m = next(i for i, eq in enumerate(r.equalities)
                  if eq.kind == "marginal" and sum(eq.key) == 0 and eq.coeffs.keys() <= set(
                      range(r.measures["v"].offset, r.measures["v"].offset + r.measures["v"].size)))
    return E[zero_c] + E[zero_m], f[zero_c] + f[zero_m]


def test_mass_identity_from_assembled_rows(ex1):
    for r in (build_base(ex1, 2), build_stokes(ex1, 2)):
        row, rhs = _unit_mass_combination(r)
        zero = (0,) * r.space.dim
        want = np.zeros(r.n_vars)
        want[r.measures["y"].gidx(zero)] = 1.0
        want[r.measures["u"].gidx(zero)] = 1.0
        assert np.array_equal(row, want) and rhs == 1.0


def test_stokes_rows_and_objective(ex1):
    base = build_base(ex1, 4)
    st = build_stokes(ex1, 4, beta_max=2)
    betas = sorted({eq.key[1] for eq in st.equalities if eq.kind == "stokes"})
    assert betas == [0, 1, 2]
    assert st.objective == base.objective
    none = build_stokes(ex1, 4, beta_max=-1)
    assert not none.rows_of_kind("stokes")
    # without Stokes rows the base rows are reproduced unchanged
    kinds = ("coupling", "marginal")
    Eb, fb = base.equality_matrix()
    En, fn = none.equality_matrix()
    rows_b = base.rows_of_kind(*kinds)
    rows_n = none.rows_of_kind(*kinds)
    nb = base.n_vars
    assert np.array_equal(fb[rows_b], fn[rows_n])
    assert (Eb[rows_b] - En[rows_n][:, :nb]).nnz == 0


def test_stokes_default_caps(ex1):
    r = build_stokes(ex1, 4)
    assert r.info["beta_max"] == 2 * 4 - 1 - 2
    assert r.info["gamma_max"] == 2


def test_stokes_needs_gaussian(ex1):
    data = ex1.to_json()
    data["family"] = {"family": "exponential"}
    data["t"] = 1
    data["A"] = {"box": [[0.5, 1.0]]}
    data["variant"] = "base"
    data.pop("f_list")
    data["f"] = [{"exps": [1, 0, 0], "coef": 1.0}, {"exps": [0, 1, 0], "coef": -1.0}]
    spec = spec_from_json(data)
    with pytest.raises(RelaxationError):
        build_stokes(spec, 2)


def test_joint_structure(ex1):
    sp = ex1.space
    x, w = sp.x(), sp.omega()
    spec = _with_f(ex1, x - w, w - x - 2)
    r = build_joint(spec, 3)
    labels = sorted(r.measures)
    assert labels == ["u", "v", "y1", "y2"]
    assert len(r.objective) == 2
    with pytest.raises(RelaxationError):
        build_joint(ex1, 3)


def test_joint_single_f_equals_base(ex1):
    base = build_base(ex1, 3)
    joint = _assemble_joint(ex1, 3, ["y1"], "joint").finish()
    Eb, fb = base.equality_matrix()
    Ej, fj = joint.equality_matrix()
    assert (Eb != Ej).nnz == 0 and np.array_equal(fb, fj)
    assert base.objective == joint.objective
    assert len(base.psd) == len(joint.psd)
    for a, b in zip(base.psd, joint.psd):
        assert a.measure.replace("y", "y1") == b.measure or a.measure == b.measure
        assert np.array_equal(a.hankel, b.hankel) and (a.shift != b.shift).nnz == 0


def test_moment_box_structure():
    spec = spec_of("momentbox1")
    assert spec.space.t == 2
    assert len(spec.A.inequalities) == 4
    r = build_moment_box(spec, 2)
    assert sorted(r.measures) == ["mu", "nu", "v", "y"]
    kinds = {eq.kind for eq in r.equalities}
    assert {"mb_sum", "marginal"} <= kinds


def test_moment_box_first_moment_row_at_alpha_zero():
    spec = spec_of("momentbox1")
    r = build_moment_box(spec, 2)
    rows = [eq for eq in r.equalities if eq.kind not in ("mb_sum", "marginal")
            and sum(eq.key[0]) == 0 and eq.key[1] == (0,)]
    assert rows
    eq = rows[0]
    y, nu, v = r.measures["y"], r.measures["nu"], r.measures["v"]
    sp = r.space
    w1 = (0,) * sp.n + (1,) + (0,) * sp.t
    m1 = (0,) * (sp.n + sp.p) + (1, 0)
    # E_phi[w] + E_nu[w] = E_psi[m]; phi + nu = mu is its own row group
    assert {y.gidx(w1), nu.gidx(w1), v.gidx(m1)} <= eq.coeffs.keys()
    assert eq.coeffs[y.gidx(w1)] == eq.coeffs[nu.gidx(w1)]


def test_moment_box_rejects_large_p():
    data = json.loads(json.dumps(spec_of("momentbox1").to_json()))
    data["p"] = 4
    with pytest.raises(ConfigError):
        spec_from_json(data)


@pytest.mark.parametrize("name,order,variant", [
    ("ex1", 2, "stokes"), ("ex1", 3, "stokes"), ("ex1", 2, "base"), ("ex1", 3, "base"),
    ("joint1", 2, "joint"), ("joint1", 3, "joint"), ("momentbox1", 2, "moment_box"),
    ("momentbox1", 3, "moment_box"),
])
def test_slater_witness_is_feasible(name, order, variant):
    spec = spec_of(name)
    r = build_base(spec, order) if variant == "base" else build(spec, order)
    assert r.variant == variant
    y = slater_witness(r)
    res, mineig = r.check_point(y)
    assert res <= 1e-6
    assert mineig >= -1e-6


def test_problem_dump_is_json(ex1, tmp_path):
    r = build_stokes(ex1, 2)
    r.dump(tmp_path / "relax.json")
    data = json.loads((tmp_path / "relax.json").read_text())
    assert len(data["equalities"]) == len(r.equalities)
    assert [b["size"] for b in data["psd"]] == [b.size for b in r.psd]


def test_scaled_w_is_mapped_back(ex1):
    # the moment map of the scaled problem is the original map after substitution
    r = build_base(ex1, 2)
    sp = r.scaled
    p2 = sp.moment_map((2,))
    assert isinstance(p2, Polynomial) and p2.degree == 2
