import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from specpencil.estimators import BranchClassifier, GeneralizedEigensolver, VEMEigensolver
from specpencil.exceptions import ConfigError
from specpencil.experiments import (
    PI2,
    exact_laplace_eigs,
    label_curves,
    parse_grid,
    parse_int_list,
    run_convergence,
    run_sweep,
    run_tables,
    run_toy,
    toy_pencil,
)
from specpencil.mesh import generate_square_grid, generate_voronoi
from specpencil.pencil import solve_gep


@pytest.fixture(scope="module")
def vor30():
    return generate_voronoi(30, seed=2, lloyd_iters=40)


def test_exact_laplace_eigs():
    assert np.allclose(exact_laplace_eigs(6) / PI2, [2, 5, 5, 8, 10, 10], rtol=1e-15)
    assert np.allclose(exact_laplace_eigs(9) / PI2, [2, 5, 5, 8, 10, 10, 13, 13, 17], rtol=1e-15)
    with pytest.raises(ValueError):
        exact_laplace_eigs(0)


def test_exact_laplace_eigs_brute_force():
    brute = sorted(i * i + j * j for i in range(1, 40) for j in range(1, 40))[:200]
    assert np.array_equal(np.rint(exact_laplace_eigs(200) / PI2), brute)


@pytest.mark.parametrize("case, variant, axis", [(1, None, None), (2, None, None), (3, "intersect", None),
                                                 (3, "disjoint", None), (3, "intersect", "beta")])
def test_toy_cases_match_closed_form(case, variant, axis):
    t = run_toy(case, parse_grid("0:3:0.25"), variant, axis)
    assert t.meta["passed"] and t.meta["max_discrepancy"] <= 1e-12
    assert len(t.rows) == 13 * 6


def test_toy_bad_case():
    with pytest.raises(ConfigError):
        toy_pencil(4)
    with pytest.raises(ConfigError):
        toy_pencil(3, "other")


def test_parse_grid_forms():
    assert np.array_equal(parse_grid("0:1:0.25"), [0, 0.25, 0.5, 0.75, 1.0])
    assert np.array_equal(parse_grid("2.5"), [2.5])
    g = parse_grid("log:0.01:10:4")
    assert g[0] == 0.01 and g[-1] == 10 and np.allclose(g, [0.01, 0.1, 1, 10])
    for bad in ("1:0:0.1", "0:1:0", "a:b:c", "0:1", "log:0:1:3", "log:1:2:0", "-1:1:0.5"):
        with pytest.raises(ConfigError):
            parse_grid(bad)


def test_grids_nest_bitwise():
    coarse, fine = parse_grid("0.1:3.1:0.2"), parse_grid("0.1:3.1:0.1")
    assert set(coarse.tolist()) <= set(fine.tolist())
    coarse, fine = parse_grid("log:0.01:10:7"), parse_grid("log:0.01:10:13")
    assert np.array_equal(fine[::2], coarse)


def test_parse_int_list():
    assert parse_int_list("4,8, 16") == [4, 8, 16]
    with pytest.raises(ConfigError):
        parse_int_list("4,x")
    with pytest.raises(ConfigError):
        parse_int_list("")


def test_tables_on_small_meshes(vor30):
    t = run_tables([generate_square_grid(2), vor30], [1, 2])
    rows = {(r[0], r[1], r[2]): r[3] for r in t.rows}
    assert rows[("kernel_a1", 1, 4)] == 0
    assert rows[("infsup", 1, 30)] > 0
    assert [r[0] for r in t.rows] == sorted((r[0] for r in t.rows), key=["kernel_a1", "kernel_b1", "infsup"].index)
    with pytest.raises(ConfigError):
        run_tables([vor30], [4])


def test_sweep_single_point_equals_direct_solve(vor30):
    t = run_sweep(vor30, 2, "alpha", 1.0, [0.7], m=8, raw=True)
    g_pencil = t.meta["result"]
    from specpencil.assembly import assemble
    g = assemble(vor30, 2)
    direct = solve_gep(g.A(0.7).toarray(), g.B(1.0).toarray(), eigvals_only=True).finite[:8]
    assert np.allclose(t.column("value"), direct, rtol=1e-9)
    assert g_pencil.values.shape[2] == 8


def test_sweep_values_nest(vor30):
    coarse = run_sweep(vor30, 1, "beta", 1.0, parse_grid("0:2:0.5"), m=6)
    fine = run_sweep(vor30, 1, "beta", 1.0, parse_grid("0:2:0.25"), m=6)
    cv = {(r[0], r[1]): r[2] for r in coarse.rows}
    fv = {(r[0], r[1]): r[2] for r in fine.rows}
    for key, v in cv.items():
        assert fv[key] == v


def test_sweep_below_returns_all_values(vor30):
    t = run_sweep(vor30, 1, "alpha", 1.0, [1.0], m=None, below=20.0)
    vals = np.asarray(t.column("value"))
    assert np.all(vals <= 20.0) and len(vals) >= 4


def test_sweep_rejects_bad_input(vor30):
    with pytest.raises(ConfigError):
        run_sweep(vor30, 1, "gamma", 1.0, [1.0])
    with pytest.raises(ConfigError):
        run_sweep(vor30, 1, "alpha", 1.0, [1.0, 0.5])
    with pytest.raises(ConfigError):
        run_sweep(vor30, 1, "alpha", 1.0, [1.0], m=0)


def test_label_curves_on_synthetic_spectra():
    params = np.linspace(0.1, 2.0, 12)
    spectra = [np.sort([2.0, 5.0 * a, 9.0, np.inf]) for a in params]
    tags, found = label_curves(params, spectra, "alpha")
    kinds = {tag for _, _, tag in found}
    assert kinds == {"constant", "linear_alpha"}
    for s, t in zip(spectra, tags):
        assert t[list(s).index(2.0)] == "constant"
        assert t[3] == "infinite"


def test_convergence_rates():
    # the 8 -> 16 rate is still pre-asymptotic (about 0.85)
    t = run_convergence(1, [8, 16, 32])
    rates = t.column("rate")
    assert rates[0] is None
    errs = t.column("rel_error")
    assert errs[0] > errs[1] > errs[2]
    assert 1.5 < rates[-1] < 2.5
    assert run_convergence(1, [8]).column("rate") == [None]


def test_estimators_get_params_and_clone(vor30):
    est = GeneralizedEigensolver(tol=1e-8, eigvals_only=True)
    assert est.get_params() == {"tol": 1e-8, "eigvals_only": True}
    assert clone(est).get_params() == est.get_params()
    p = toy_pencil(1)
    est.fit(p.A(1.0), p.B(1.0))
    assert np.allclose(est.eigenvalues_, [1, 2, 3, 4, 5, 6])
    assert est.infinite_count_ == 0

    v = VEMEigensolver(k=1, n_eigs=3).fit(vor30)
    assert len(v.eigenvalues_) == 3 and v.n_dofs_ == v.pencil_.n
    # beta = 1 mass stabilization pulls the coarse-mesh value below 2
    assert 1.0 < v.eigenvalues_[0] / PI2 < 2.1
    v0 = clone(v).set_params(beta=0.0, n_eigs=1).fit(vor30)
    assert abs(v0.eigenvalues_[0] / PI2 - 2.0) < 0.2

    b = BranchClassifier()
    with pytest.raises(NotFittedError):
        b.predict([1.0])
    x = np.linspace(0.5, 3, 8)
    b.fit(x, 4.0 / x)
    assert b.kind_ == "hyperbolic"
    assert np.allclose(b.predict([2.0]), [2.0])
    assert math.isclose(clone(b).rel_tol, b.rel_tol)
