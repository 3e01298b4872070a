"""Global DoF numbering, Dirichlet elimination and assembly of the VEM pencil."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ._validation import DEFAULT_TOL, relative_threshold
from .exceptions import BothSingularError
from .mesh import PolygonalMesh
from .pencil import ParametricPencil, Spectrum, kernel_dim, solve_gep
from .vem import LocalElement, _check_degree, local_matrices

__all__ = [
    "DofMap",
    "GlobalPencilVEM",
    "build_dof_map",
    "assemble",
    "kernel_dim",
    "infsup_probe",
    "export_coo",
]


@dataclass(eq=False)
class DofMap:
    """Global numbering: vertex DoFs, then edge moments, then cell moments.

    ``interior_index[g]`` is the row of global DoF ``g`` in the assembled
    (Dirichlet-eliminated) matrices, or ``-1`` on the boundary.
    """

    k: int
    vertex_dofs: np.ndarray
    edge_dofs: np.ndarray
    cell_dofs: np.ndarray
    boundary: np.ndarray
    interior_index: np.ndarray = field(repr=False)

    @property
    def n_total(self) -> int:
        return len(self.boundary)

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(~self.boundary))


def build_dof_map(mesh: PolygonalMesh, k: int) -> DofMap:
    k = _check_degree(k)
    nv, ne, nc = mesh.n_vertices, mesh.n_edges, mesh.n_cells
    per_edge, per_cell = k - 1, k * (k - 1) // 2
    vertex_dofs = np.arange(nv)
    edge_dofs = nv + np.arange(ne * per_edge).reshape(ne, per_edge)
    cell_dofs = nv + ne * per_edge + np.arange(nc * per_cell).reshape(nc, per_cell)
    n_total = nv + ne * per_edge + nc * per_cell
    boundary = np.zeros(n_total, dtype=bool)
    boundary[vertex_dofs[mesh.boundary_vertices]] = True
    boundary[edge_dofs[mesh.boundary_edges].ravel()] = True
    interior_index = np.full(n_total, -1, dtype=np.int64)
    interior_index[~boundary] = np.arange(np.count_nonzero(~boundary))
    return DofMap(k, vertex_dofs, edge_dofs, cell_dofs, boundary, interior_index)


def local_to_global(mesh: PolygonalMesh, dofs: DofMap, cell: int):
    """Global DoF indices of a cell's local DoFs and their orientation signs.

    Odd edge moments change sign when the cell walks an edge against its
    global direction (lower to higher vertex index).
    """
    k = dofs.k
    loop = mesh.cells[cell]
    nxt = np.roll(loop, -1)
    idx = [dofs.vertex_dofs[loop]]
    sign = [np.ones(len(loop))]
    for a, b in zip(loop.tolist(), nxt.tolist()):
        e = mesh.edge_index[(min(a, b), max(a, b))]
        s = 1.0 if a < b else -1.0
        idx.append(dofs.edge_dofs[e])
        sign.append(s ** np.arange(k - 1))
    idx.append(dofs.cell_dofs[cell])
    sign.append(np.ones(dofs.cell_dofs.shape[1]))
    return np.concatenate(idx).astype(np.int64), np.concatenate(sign)


@dataclass(eq=False)
class GlobalPencilVEM:
    """Assembled interior matrices of ``A = a1 + alpha*a2``, ``B = b1 + beta*b2``.

    ``a1_factor``/``b1_factor`` (when available) satisfy
    ``a1 = a1_factor.T @ a1_factor``; they have fewer rows than ``a1`` has
    columns on most meshes and make kernel counts cheaper.
    """

    a1: sp.csr_matrix
    a2: sp.csr_matrix
    b1: sp.csr_matrix
    b2: sp.csr_matrix
    dof_map: DofMap | None = None
    mesh: PolygonalMesh | None = None
    a1_factor: sp.csr_matrix | None = field(default=None, repr=False)
    b1_factor: sp.csr_matrix | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("a1", "a2", "b1", "b2"):
            setattr(self, name, sp.csr_matrix(getattr(self, name), dtype=float))

    @property
    def n(self) -> int:
        return self.a1.shape[0]

    def A(self, alpha: float):
        return self.a1 + alpha * self.a2

    def B(self, beta: float):
        return self.b1 + beta * self.b2

    def to_pencil(self, alpha: float = 0.0, beta: float = 0.0, dense: bool | None = None) -> ParametricPencil:
        dense = self.n <= 1200 if dense is None else dense
        mats = [self.a1, self.a2, self.b1, self.b2]
        if dense:
            mats = [m.toarray() for m in mats]
        return ParametricPencil(*mats, alpha=alpha, beta=beta)

    def kernel_dim_a1(self, tol: float = DEFAULT_TOL) -> int:
        return _factored_kernel_dim(self.a1, self.a1_factor, tol)

    def kernel_dim_b1(self, tol: float = DEFAULT_TOL) -> int:
        return _factored_kernel_dim(self.b1, self.b1_factor, tol)


def _factored_kernel_dim(c, factor, tol):
    n = c.shape[0]
    if factor is None or factor.shape[0] >= n:
        return kernel_dim(c, tol)
    # nonzero spectra of F^T F and F F^T coincide
    gram = (factor @ factor.T).toarray()
    gram = np.triu(gram) + np.triu(gram, 1).T
    w = sla.eigvalsh(gram)
    rank = int(np.count_nonzero(w > relative_threshold(w, tol)))
    return n - rank


def _psd_factor(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    keep = w > 1e-14 * max(w.max(), 0.0)
    return (v[:, keep] * np.sqrt(w[keep])).T


def assemble(mesh: PolygonalMesh, k: int, stab_mode: str = "dofi", *, return_locals: bool = False):
    """Scatter the local matrices of every cell onto the interior DoFs.

    Cells are visited in ascending order and duplicates are summed in that
    order, so the result is bitwise reproducible and exactly symmetric.
    """
    dofs = build_dof_map(mesh, k)
    n = dofs.n_interior
    rows, cols = [], []
    vals = {name: [] for name in ("a1", "a2", "b1", "b2")}
    frows = {"a1": [], "b1": []}
    fcols = {"a1": [], "b1": []}
    fvals = {"a1": [], "b1": []}
    fcount = {"a1": 0, "b1": 0}
    locals_ = []
    for c in range(mesh.n_cells):
        try:
            el = local_matrices(mesh.cell_coords(c), k, stab_mode)
        except Exception as exc:
            raise type(exc)(f"cell {c}: {exc}") from exc
        if return_locals:
            locals_.append(el)
        glob, sign = local_to_global(mesh, dofs, c)
        inner = dofs.interior_index[glob]
        keep = inner >= 0
        ids = inner[keep]
        flip = np.outer(sign, sign)[np.ix_(keep, keep)]
        r, q = np.meshgrid(ids, ids, indexing="ij")
        rows.append(r.ravel())
        cols.append(q.ravel())
        for name, mat in (("a1", el.a1_local), ("a2", el.a2_local), ("b1", el.b1_local), ("b2", el.b2_local)):
            vals[name].append((mat[np.ix_(keep, keep)] * flip).ravel())
        for name, mat in (("a1", el.a1_local), ("b1", el.b1_local)):
            f = _psd_factor(mat)[:, keep] * sign[keep]
            fr, fc = np.nonzero(np.ones_like(f, dtype=bool))
            frows[name].append(fr + fcount[name])
            fcols[name].append(ids[fc])
            fvals[name].append(f.ravel())
            fcount[name] += f.shape[0]

    rows = np.concatenate(rows) if rows else np.empty(0, np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, np.int64)
    mats = {
        name: sp.csr_matrix((np.concatenate(v) if v else np.empty(0), (rows, cols)), shape=(n, n))
        for name, v in vals.items()
    }
    factors = {}
    for name in ("a1", "b1"):
        if fvals[name]:
            factors[name] = sp.csr_matrix(
                (np.concatenate(fvals[name]), (np.concatenate(frows[name]), np.concatenate(fcols[name]))),
                shape=(fcount[name], n),
            )
        else:
            factors[name] = None
    g = GlobalPencilVEM(mats["a1"], mats["a2"], mats["b1"], mats["b2"], dofs, mesh,
                        factors["a1"], factors["b1"])
    return (g, locals_) if return_locals else g


def infsup_probe(g: GlobalPencilVEM, tol: float = DEFAULT_TOL) -> float:
    """Smallest finite eigenvalue of the unstabilized pencil ``(a1, b1)``.

    Raises :class:`BothSingularError` if ``a1`` and ``b1`` share a kernel.
    """
    if g.b1.nnz == 0 or not np.any(g.b1.data):
        raise ValueError("b1 vanishes identically")
    a1, b1 = g.a1.toarray(), g.b1.toarray()
    try:
        spec: Spectrum = solve_gep(a1, b1, tol, eigvals_only=True)
    except BothSingularError as exc:
        if exc.common_kernel_dim:
            raise
        # no shared kernel: a1 + b1 is definite and theta = lambda / (1 + lambda)
        theta = sla.eigh(a1, a1 + b1, eigvals_only=True)
        finite = theta[theta < 1.0 - tol]
        return float(finite[0] / (1.0 - finite[0]))
    return float(spec.finite[0])


def export_coo(matrix, path) -> None:
    """Write ``i j value`` triplets (0-based, ``%.17g``) of the nonzeros."""
    m = sp.coo_matrix(matrix)
    order = np.lexsort((m.col, m.row))
    lines = [f"{m.row[t]} {m.col[t]} {m.data[t]:.17g}" for t in order]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
