"""Local virtual element machinery for the Laplacian, degrees k = 1, 2, 3.

Degrees of freedom of a cell, in local order:

* values at the vertices, in loop order;
* per edge ``i`` (from vertex ``i`` to ``i+1``) the moments
  ``int_{-1/2}^{1/2} v t^j dt`` for ``j = 0..k-2``, where ``t`` is the arc
  length from the edge midpoint divided by the edge length, measured in the
  local loop direction;
* the cell moments ``|P|^-1 int_P v m_a`` for the scaled monomials of degree
  ``<= k-2``.

Polynomials on a cell are expanded in scaled monomials
``((x - x_P) / h_P)^a ((y - y_P) / h_P)^b`` in graded lexicographic order
``1, x, y, x^2, xy, y^2, ...`` with ``x_P`` the centroid and ``h_P`` the
diameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import NonStarShapedError, SingularConstraintError, SingularMassError
from .mesh import polygon_area, polygon_centroid, polygon_diameter

MAX_DEGREE = 3


@lru_cache(maxsize=None)
def monomial_exponents(k: int) -> tuple[tuple[int, int], ...]:
    return tuple((a, d - a) for d in range(k + 1) for a in range(d, -1, -1))


def dim_poly(k: int) -> int:
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


@dataclass(frozen=True)
class ScaledMonomialBasis:
    k: int
    center: tuple[float, float]
    h: float

    @property
    def exponents(self) -> tuple[tuple[int, int], ...]:
        return monomial_exponents(self.k)

    @property
    def size(self) -> int:
        return dim_poly(self.k)

    def _scaled(self, points):
        p = np.atleast_2d(np.asarray(points, float))
        return (p[:, 0] - self.center[0]) / self.h, (p[:, 1] - self.center[1]) / self.h

    def evaluate(self, points) -> np.ndarray:
        """Values, shape ``(n_points, size)``."""
        x, y = self._scaled(points)
        return np.column_stack([x**a * y**b for a, b in self.exponents])

    def gradient(self, points) -> np.ndarray:
        """Gradients, shape ``(n_points, size, 2)``."""
        x, y = self._scaled(points)
        gx, gy = [], []
        for a, b in self.exponents:
            gx.append(a * x ** max(a - 1, 0) * y**b if a else np.zeros_like(x))
            gy.append(b * x**a * y ** max(b - 1, 0) if b else np.zeros_like(x))
        return np.stack([np.column_stack(gx), np.column_stack(gy)], axis=-1) / self.h

    def laplacian_matrix(self) -> np.ndarray:
        """``L[b, a]`` = coefficient of monomial ``b`` in the Laplacian of ``a``."""
        index = {e: i for i, e in enumerate(self.exponents)}
        lap = np.zeros((self.size, self.size))
        for i, (a, b) in enumerate(self.exponents):
            if a >= 2:
                lap[index[(a - 2, b)], i] += a * (a - 1)
            if b >= 2:
                lap[index[(a, b - 2)], i] += b * (b - 1)
        return lap / self.h**2


# ---------------------------------------------------------------------------
# quadrature


@lru_cache(maxsize=None)
def _gauss01(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(degree: int):
    """Collapsed Gauss rule on the reference triangle, exact to ``degree``."""
    n = degree // 2 + 1
    u, wu = _gauss01(n + 1)
    v, wv = _gauss01(n)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ww = np.outer(wu * (1.0 - u), wv)
    return np.column_stack([uu.ravel(), (vv * (1.0 - uu)).ravel()]), ww.ravel()


def polygon_quadrature(coords, degree: int, center=None):
    """Points and weights exact for polynomials of ``degree`` on a polygon.

    The polygon is fanned into triangles from its centroid (or ``center``);
    a fan triangle with non-positive area means the polygon is not
    star-shaped with respect to that point.
    """
    c = np.asarray(coords, float)
    o = polygon_centroid(c) if center is None else np.asarray(center, float)
    ref, wref = triangle_rule(degree)
    pts, wts = [], []
    m = len(c)
    for i in range(m):
        p, q = c[i], c[(i + 1) % m]
        e1, e2 = p - o, q - o
        det = e1[0] * e2[1] - e1[1] * e2[0]
        if det <= 0.0:
            raise NonStarShapedError(f"fan triangle {i} from the centroid is flipped or flat")
        pts.append(o + ref[:, :1] * e1 + ref[:, 1:] * e2)
        wts.append(wref * det)
    return np.vstack(pts), np.concatenate(wts)


def integrate_monomials(coords, basis: ScaledMonomialBasis, degree_needed: int | None = None) -> np.ndarray:
    """Exact polynomial mass matrix ``H[i, j] = int_P m_i m_j``.

    ``H[0]`` holds the plain moments ``int_P m_j``.  The quadrature is exact
    up to ``degree_needed`` (default ``2k``).
    """
    degree = 2 * basis.k if degree_needed is None else int(degree_needed)
    if degree > 2 * basis.k:
        raise ValueError(f"degree_needed={degree} exceeds 2k={2 * basis.k}")
    pts, w = polygon_quadrature(coords, max(degree, 0))
    vals = basis.evaluate(pts)
    return (vals * w[:, None]).T @ vals


def stiffness_monomials(coords, basis: ScaledMonomialBasis) -> np.ndarray:
    """Exact ``G[i, j] = int_P grad m_i . grad m_j``."""
    pts, w = polygon_quadrature(coords, max(2 * basis.k - 2, 0))
    g = basis.gradient(pts)
    return np.einsum("q,qia,qja->ij", w, g, g)


@lru_cache(maxsize=None)
def edge_reconstruction(k: int) -> np.ndarray:
    """Map edge DoFs ``[v(-1/2), v(1/2), moment_0 .. moment_{k-2}]`` to the
    coefficients of ``v`` in powers of ``t`` (degree ``k``)."""
    rows = [[(-0.5) ** i for i in range(k + 1)], [0.5**i for i in range(k + 1)]]
    for j in range(k - 1):
        # int_{-1/2}^{1/2} t^(i+j) dt
        rows.append([((0.5 ** (i + j + 1)) * (1 - (-1) ** (i + j + 1)) / (i + j + 1)) for i in range(k + 1)])
    return np.linalg.inv(np.array(rows))


# ---------------------------------------------------------------------------
# DoFs


@dataclass(frozen=True)
class DofLayout:
    k: int
    n_vertex: int
    n_edge: int
    n_internal: int

    @classmethod
    def for_polygon(cls, n_vertices: int, k: int) -> "DofLayout":
        return cls(k, n_vertices, n_vertices * (k - 1), k * (k - 1) // 2)

    @property
    def total(self) -> int:
        return self.n_vertex + self.n_edge + self.n_internal

    def edge_dofs(self, i: int) -> np.ndarray:
        start = self.n_vertex + i * (self.k - 1)
        return np.arange(start, start + self.k - 1)

    @property
    def internal_dofs(self) -> np.ndarray:
        return np.arange(self.n_vertex + self.n_edge, self.total)

    def descriptors(self) -> list[tuple[str, int, int]]:
        """``(kind, entity, moment)`` per local DoF."""
        out = [("vertex", i, 0) for i in range(self.n_vertex)]
        out += [("edge_moment", i, j) for i in range(self.n_vertex) for j in range(self.k - 1)]
        out += [("internal_moment", 0, j) for j in range(self.n_internal)]
        return out


def _check_degree(k: int) -> int:
    if int(k) != k or not 1 <= k <= MAX_DEGREE:
        raise ValueError(f"k must be 1, 2 or 3, got {k!r}")
    return int(k)


class _Cell:
    """Geometry and the D/B building blocks shared by both projectors."""

    def __init__(self, coords, k: int):
        self.k = k = _check_degree(k)
        self.coords = c = np.asarray(coords, float)
        self.area = polygon_area(c)
        if self.area <= 0:
            raise NonStarShapedError("polygon must be counter-clockwise with positive area")
        self.centroid = polygon_centroid(c)
        self.diameter = polygon_diameter(c)
        self.basis = ScaledMonomialBasis(k, tuple(self.centroid), self.diameter)
        self.layout = DofLayout.for_polygon(len(c), k)
        self.mass = integrate_monomials(c, self.basis)
        self.stiffness = stiffness_monomials(c, self.basis)
        self._build_d_and_b()

    def _build_d_and_b(self):
        k, c, lay, basis = self.k, self.coords, self.layout, self.basis
        nk, nd, nv = basis.size, lay.total, len(c)
        D = np.zeros((nd, nk))
        B = np.zeros((nk, nd))
        tq, wq = _gauss01(k + 1)
        tq = tq - 0.5
        recon = edge_reconstruction(k)
        phi = np.vander(tq, k + 1, increasing=True) @ recon  # (nq, k+1) edge shape values

        D[:nv] = basis.evaluate(c)
        for i in range(nv):
            p, q = c[i], c[(i + 1) % nv]
            length = float(np.hypot(*(q - p)))
            normal = np.array([q[1] - p[1], p[0] - q[0]]) / length
            pts = 0.5 * (p + q) + tq[:, None] * (q - p)
            local = np.concatenate([[i, (i + 1) % nv], lay.edge_dofs(i)])
            vals = basis.evaluate(pts)
            for j in range(k - 1):
                D[lay.n_vertex + i * (k - 1) + j] = (wq * tq**j) @ vals
            dn = basis.gradient(pts) @ normal  # (nq, nk)
            B[:, local] += length * (dn * wq[:, None]).T @ phi
            B[0, local] += length * (wq @ phi)  # boundary mean, constant mode
        internal = lay.internal_dofs
        n_low = dim_poly(k - 2)
        if n_low:
            D[internal] = self.mass[:n_low] / self.area
            lap = basis.laplacian_matrix()[:n_low]  # (n_low, nk)
            B[1:, internal] -= self.area * lap[:, 1:].T
        self.D, self.B = D, B
        self.n_low = n_low

    def pi_nabla(self) -> np.ndarray:
        G = self.B @ self.D
        try:
            coeffs = np.linalg.solve(G, self.B)
        except np.linalg.LinAlgError as exc:
            raise SingularConstraintError("projector system is singular") from exc
        if not np.all(np.isfinite(coeffs)) or np.linalg.cond(G) > 1e14:
            raise SingularConstraintError("projector system is singular")
        return coeffs

    def pi_zero(self, pi_nabla: np.ndarray) -> np.ndarray:
        n_low = self.n_low
        if not n_low:
            return pi_nabla.copy()
        H = self.mass
        H_low = H[:n_low, :n_low]
        if np.linalg.cond(H_low) > 1e14:
            raise SingularMassError("mass matrix is singular")
        rhs = -H[:n_low] @ pi_nabla
        rhs[:, self.layout.internal_dofs] += self.area * np.eye(n_low)
        out = pi_nabla.copy()
        out[:n_low] += np.linalg.solve(H_low, rhs)
        return out


def polynomial_dofs(coords, k: int) -> np.ndarray:
    """Matrix whose column ``a`` holds the DoFs of scaled monomial ``a``."""
    return _Cell(coords, k).D


def projector_nabla(coords, k: int) -> np.ndarray:
    """Energy projector: DoFs -> scaled-monomial coefficients, shape ``(n_k, N_P)``.

    Solves ``a^P(Pi v - v, p) = 0`` for non-constant ``p`` with the constant
    fixed by ``int_{dP} (Pi v - v) = 0``.
    """
    return _Cell(coords, k).pi_nabla()


def projector_l2(coords, k: int) -> np.ndarray:
    """L2 projector on the enhanced space, shape ``(n_k, N_P)``.

    ``Pi0 v - Pi v`` lies in ``P_{k-2}`` and is the L2 projection of
    ``v - Pi v`` there, which only needs the cell moments of ``v``.
    """
    cell = _Cell(coords, k)
    return cell.pi_zero(cell.pi_nabla())


STAB_MODES = ("dofi", "trace")


@dataclass(frozen=True, eq=False)
class LocalElement:
    """Per-cell matrices.

    ``sa_local``/``sb_local`` are the DoF-inner-product stabilizations
    (``sigma_P * I`` and ``tau_P * h_P^2 * I``) before the global
    ``alpha``/``beta`` scaling; ``a2_local``/``b2_local`` compose them with
    ``I - Pi`` as used in the assembled pencil.
    """

    coords: np.ndarray
    diameter: float
    area: float
    centroid: np.ndarray
    dof_layout: DofLayout
    dofs_of_monomials: np.ndarray
    pi_nabla: np.ndarray
    pi_zero: np.ndarray
    a1_local: np.ndarray
    b1_local: np.ndarray
    sa_local: np.ndarray
    sb_local: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.dof_layout.total

    def _residual(self, proj):
        return np.eye(self.n_dofs) - self.dofs_of_monomials @ proj

    @property
    def a2_local(self) -> np.ndarray:
        r = self._residual(self.pi_nabla)
        return _sym(r.T @ self.sa_local @ r)

    @property
    def b2_local(self) -> np.ndarray:
        r = self._residual(self.pi_zero)
        return _sym(r.T @ self.sb_local @ r)


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def local_matrices(coords, k: int, stab_mode: str = "dofi") -> LocalElement:
    """Consistency and stabilization matrices of one cell.

    ``stab_mode="dofi"`` uses ``sigma_P = tau_P = 1``; ``"trace"`` takes
    ``sigma_P`` as the mean eigenvalue of ``a1_local`` and ``tau_P`` as the
    mean eigenvalue of ``b1_local / h_P^2``.
    """
    if stab_mode not in STAB_MODES:
        raise ValueError(f"stab_mode must be one of {STAB_MODES}, got {stab_mode!r}")
    cell = _Cell(coords, k)
    pn = cell.pi_nabla()
    p0 = cell.pi_zero(pn)
    G = cell.stiffness.copy()
    a1 = _sym(pn.T @ G @ pn)
    b1 = _sym(p0.T @ cell.mass @ p0)
    n = cell.layout.total
    h2 = cell.diameter**2
    if stab_mode == "trace":
        sigma = np.trace(a1) / n
        tau = np.trace(b1) / (h2 * n)
    else:
        sigma = tau = 1.0
    return LocalElement(
        coords=cell.coords,
        diameter=cell.diameter,
        area=cell.area,
        centroid=cell.centroid,
        dof_layout=cell.layout,
        dofs_of_monomials=cell.D,
        pi_nabla=pn,
        pi_zero=p0,
        a1_local=a1,
        b1_local=b1,
        sa_local=sigma * np.eye(n),
        sb_local=tau * h2 * np.eye(n),
    )
