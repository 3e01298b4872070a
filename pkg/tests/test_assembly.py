import math

import numpy as np
import pytest
import scipy.linalg as sla

from helpers import full_apply, interpolate
from specpencil.assembly import (
    GlobalPencilVEM,
    assemble,
    build_dof_map,
    export_coo,
    infsup_probe,
    local_to_global,
)
from specpencil.mesh import generate_square_grid, generate_voronoi
from specpencil.pencil import kernel_dim


@pytest.fixture(scope="module")
def vor20():
    return generate_voronoi(20, seed=4, lloyd_iters=30)


@pytest.mark.parametrize("m, k, total, interior", [(1, 1, 4, 0), (1, 2, 9, 1), (2, 1, 9, 1), (2, 2, 25, 9), (2, 3, 45, 21)])
def test_dof_map_counts(m, k, total, interior):
    d = build_dof_map(generate_square_grid(m), k)
    assert (d.n_total, d.n_interior) == (total, interior)


def test_two_by_two_k1_stiffness():
    g = assemble(generate_square_grid(2), 1)
    assert g.n == 1
    assert math.isclose(g.a1[0, 0], 2.0, rel_tol=1e-14)


def test_local_to_global_signs(vor20):
    d = build_dof_map(vor20, 3)
    seen = {}
    for c in range(vor20.n_cells):
        glob, sign = local_to_global(vor20, d, c)
        assert len(set(glob.tolist())) == len(glob)
        for g_, s in zip(glob, sign):
            seen.setdefault(int(g_), []).append(s)
    # an interior edge's odd moment is seen with opposite signs by its two cells
    for e, (_, _, _, right) in enumerate(vor20.edges):
        if right >= 0:
            assert sorted(seen[int(d.edge_dofs[e, 1])]) == [-1.0, 1.0]
            assert seen[int(d.edge_dofs[e, 0])] == [1.0, 1.0]


@pytest.mark.parametrize("k", [1, 2, 3])
def test_patch_test_affine(vor20, k):
    f = lambda x, y: 0.3 + 1.7 * x - 0.9 * y
    v = interpolate(vor20, k, f)
    for which in ("a1", "a2"):
        out, d = full_apply(vor20, k, v, which)
        assert np.max(np.abs(out[~d.boundary])) < 1e-10


@pytest.mark.parametrize("k", [1, 2, 3])
def test_matrices_symmetric_and_definite(vor20, k):
    g = assemble(vor20, k)
    for name in ("a1", "a2", "b1", "b2"):
        m = getattr(g, name)
        assert (m - m.T).nnz == 0 or np.max(np.abs((m - m.T).data)) == 0.0
    for alpha, beta in ((1.0, 1.0), (0.1, 10.0)):
        assert sla.eigvalsh(g.A(alpha).toarray())[0] > 0
        assert sla.eigvalsh(g.B(beta).toarray())[0] > 0
        assert kernel_dim(g.A(alpha)) == 0


@pytest.mark.parametrize("k", [1, 2, 3])
def test_factored_kernel_counts_agree(vor20, k):
    g = assemble(vor20, k)
    assert g.kernel_dim_a1() == kernel_dim(g.a1)
    assert g.kernel_dim_b1() == kernel_dim(g.b1)


def test_assembly_reproducible(vor20):
    g1, g2 = assemble(vor20, 2), assemble(vor20, 2)
    for name in ("a1", "a2", "b1", "b2"):
        assert np.array_equal(getattr(g1, name).toarray(), getattr(g2, name).toarray())


def test_infsup_identity_pencil():
    eye = np.eye(3)
    g = GlobalPencilVEM(eye, np.zeros((3, 3)), eye, np.zeros((3, 3)))
    assert math.isclose(infsup_probe(g), 1.0)
    with pytest.raises(ValueError):
        infsup_probe(GlobalPencilVEM(eye, eye, np.zeros((3, 3)), eye))


def test_infsup_single_cell_k2_positive():
    assert infsup_probe(assemble(generate_square_grid(1), 2)) > 0


def test_export_coo(tmp_path):
    g = assemble(generate_square_grid(2), 2)
    p = tmp_path / "a1.coo"
    export_coo(g.a1, p)
    lines = p.read_text().splitlines()
    assert len(lines) == g.a1.nnz
    i, j, v = lines[0].split()
    assert (int(i), int(j)) == (0, 0) and float(v) == g.a1[0, 0]
    rebuilt = np.zeros(g.a1.shape)
    for line in lines:
        i, j, v = line.split()
        rebuilt[int(i), int(j)] = float(v)
    assert np.array_equal(rebuilt, g.a1.toarray())
