"""Independent oracles shared by the test modules."""

import numpy as np

from specpencil.assembly import build_dof_map, local_to_global
from specpencil.mesh import polygon_area, polygon_centroid, polygon_diameter
from specpencil.vem import ScaledMonomialBasis, local_matrices, monomial_exponents


def random_star_polygon(rng, max_vertices=10):
    """Random polygon star-shaped about its own centroid.

    Vertices at sorted random angles with radii in [0.45, 1]; instances
    whose centroid fan flips are redrawn.  Random scale, rotation and shift.
    """
    while True:
        n = int(rng.integers(3, max_vertices + 1))
        ang = np.sort(rng.uniform(0, 2 * np.pi, n))
        if np.max(np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))) >= np.pi * 0.95:
            continue
        r = rng.uniform(0.45, 1.0, n)
        pts = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
        c = polygon_centroid(pts)
        d = pts - c
        nxt = np.roll(d, -1, axis=0)
        cross = d[:, 0] * nxt[:, 1] - d[:, 1] * nxt[:, 0]
        edge = np.linalg.norm(nxt - d, axis=1)
        if np.any(cross <= 1e-3) or np.min(edge) < 1e-2:
            continue
        scale = 10.0 ** rng.uniform(-2, 1)
        th = rng.uniform(0, 2 * np.pi)
        rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        return (pts @ rot.T) * scale + rng.uniform(-5, 5, 2)


def greens_integral(coords, f, order=12):
    """``int_P f`` as ``oint F dy`` with ``F(x, y) = int_{x0}^x f(s, y) ds``.

    Both integrals use Gauss-Legendre rules of ``order`` points, exact for
    polynomial ``f`` of degree below ``2*order - 2``; no triangulation.
    """
    t, w = np.polynomial.legendre.leggauss(order)
    t, w = 0.5 * (t + 1), 0.5 * w
    x0 = float(np.min(coords[:, 0]))
    total = 0.0
    for p, q in zip(coords, np.roll(coords, -1, axis=0)):
        pts = p + t[:, None] * (q - p)
        inner = np.array([(x - x0) * (w @ f(x0 + t * (x - x0), np.full_like(t, y))) for x, y in pts])
        total += (q[1] - p[1]) * (w @ inner)
    return total


def interpolate(mesh, k, f):
    """Global DoF vector (all DoFs, boundary included) of a function ``f``.

    Vertex values, edge moments ``int_{-1/2}^{1/2} f t^j dt`` along the global
    low-to-high edge direction, and cell moments ``|P|^-1 int_P f m``.
    """
    dofs = build_dof_map(mesh, k)
    v = np.zeros(dofs.n_total)
    v[dofs.vertex_dofs] = f(mesh.vertices[:, 0], mesh.vertices[:, 1])
    t, w = np.polynomial.legendre.leggauss(8)
    t, w = 0.5 * t, 0.5 * w
    for e, (lo, hi, _, _) in enumerate(mesh.edges):
        a, b = mesh.vertices[lo], mesh.vertices[hi]
        pts = 0.5 * (a + b) + t[:, None] * (b - a)
        vals = f(pts[:, 0], pts[:, 1])
        for j in range(k - 1):
            v[dofs.edge_dofs[e, j]] = w @ (vals * t**j)
    n_low = k * (k - 1) // 2
    for c in range(mesh.n_cells):
        coords = mesh.cell_coords(c)
        area = polygon_area(coords)
        basis = ScaledMonomialBasis(k, tuple(polygon_centroid(coords)), polygon_diameter(coords))
        for j in range(n_low):
            g = lambda x, y, j=j: f(x, y) * basis.evaluate(np.column_stack([x, y]))[:, j]
            v[dofs.cell_dofs[c, j]] = greens_integral(coords, g) / area
    return v


def full_apply(mesh, k, v, which="a2", stab_mode="dofi"):
    """``M v`` for the assembled matrix before Dirichlet elimination."""
    dofs = build_dof_map(mesh, k)
    out = np.zeros(dofs.n_total)
    for c in range(mesh.n_cells):
        el = local_matrices(mesh.cell_coords(c), k, stab_mode)
        glob, sign = local_to_global(mesh, dofs, c)
        out[glob] += sign * (getattr(el, f"{which}_local") @ (sign * v[glob]))
    return out, dofs


def monomial(k, center, h, index):
    """Callable scaled monomial number ``index`` of degree ``<= k``."""
    s1, s2 = monomial_exponents(k)[index]
    return lambda x, y: ((x - center[0]) / h) ** s1 * ((y - center[1]) / h) ** s2
