"""Polygonal meshes of the unit square.

Voronoi meshes are built by clipping the unit square against the bisector
half-planes of the seeds, optionally after Lloyd (centroidal) relaxation.
Seeds come from :class:`Pcg32`, so a ``(n_cells, seed, lloyd_iters)`` triple
always gives the same mesh, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import cKDTree

from .exceptions import DegenerateSeedsError, MalformedMeshError, MeshParseError

SNAP_TOL = 1e-9
_MASK64 = (1 << 64) - 1


class Pcg32:
    """PCG-XSH-RR 64/32 generator.

    State update ``s <- s * 6364136223846793005 + inc (mod 2**64)`` with
    ``inc = 2*stream + 1``; output is the xorshift-high/random-rotate
    permutation of the old state.  Seeding follows the reference
    ``pcg32_srandom_r``: ``s = 0``, step, ``s += seed``, step.

    Doubles are ``(a * 2**26 + b) / 2**53`` with ``a`` the top 27 bits of
    one output and ``b`` the top 26 bits of the next, redrawn if zero so
    values lie in the open interval (0, 1).
    """

    MULTIPLIER = 6364136223846793005

    def __init__(self, seed: int, stream: int = 54):
        self.inc = ((stream << 1) | 1) & _MASK64
        self.state = 0
        self.next_u32()
        self.state = (self.state + (seed & _MASK64)) & _MASK64
        self.next_u32()

    def next_u32(self) -> int:
        old = self.state
        self.state = (old * self.MULTIPLIER + self.inc) & _MASK64
        xorshifted = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & 0xFFFFFFFF

    def uniform(self) -> float:
        while True:
            a = self.next_u32() >> 5
            b = self.next_u32() >> 6
            u = (a * 67108864 + b) / 9007199254740992.0
            if u > 0.0:
                return u

    def points(self, n: int) -> np.ndarray:
        return np.array([[self.uniform(), self.uniform()] for _ in range(n)])


# ---------------------------------------------------------------------------
# polygon geometry


def polygon_area(coords) -> float:
    """Signed shoelace area (positive for counter-clockwise loops)."""
    x, y = np.asarray(coords, float).T
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(coords) -> np.ndarray:
    c = np.asarray(coords, float)
    x, y = c.T
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * area)


def polygon_diameter(coords) -> float:
    c = np.asarray(coords, float)
    d = c[:, None, :] - c[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def _clip(poly, nx, ny, offset):
    """Keep the part of a convex polygon with ``nx*x + ny*y <= offset``."""
    out = []
    m = len(poly)
    for i in range(m):
        px, py = poly[i]
        qx, qy = poly[(i + 1) % m]
        fp = nx * px + ny * py - offset
        fq = nx * qx + ny * qy - offset
        if fp <= 0.0:
            out.append((px, py))
        if (fp < 0.0 < fq) or (fq < 0.0 < fp):
            t = fp / (fp - fq)
            out.append((px + t * (qx - px), py + t * (qy - py)))
    return out


_UNIT_SQUARE = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]


def voronoi_cells(seeds: np.ndarray) -> list[list[tuple[float, float]]]:
    """Voronoi cells of ``seeds`` clipped to the unit square, as CCW loops.

    Bisectors are applied nearest-first; once a seed's bisector lies beyond
    the current cell's farthest vertex no later seed can cut it.
    """
    seeds = np.asarray(seeds, float)
    n = len(seeds)
    cells = []
    for i in range(n):
        si = seeds[i]
        diff = seeds - si
        dist2 = (diff**2).sum(1)
        order = np.argsort(dist2, kind="stable")
        poly = list(_UNIT_SQUARE)
        sx, sy = float(si[0]), float(si[1])
        reach2 = max((px - sx) ** 2 + (py - sy) ** 2 for px, py in poly)
        for j in order:
            if j == i:
                continue
            if dist2[j] > 4.0 * reach2:
                break
            dx, dy = float(diff[j, 0]), float(diff[j, 1])
            offset = dx * (sx + 0.5 * dx) + dy * (sy + 0.5 * dy)
            poly = _clip(poly, dx, dy, offset)
            reach2 = max((px - sx) ** 2 + (py - sy) ** 2 for px, py in poly)
        cells.append(poly)
    return cells


def _check_seeds(seeds: np.ndarray) -> None:
    pairs = cKDTree(seeds).query_pairs(1e-12)
    if pairs:
        i, j = min(pairs)
        raise DegenerateSeedsError(f"seeds {i} and {j} coincide")


def lloyd_relax(seeds, iterations: int):
    """Move each seed to its cell's area centroid ``iterations`` times.

    Returns the final seeds and the total absolute displacement of every
    iteration.
    """
    seeds = np.array(seeds, float)
    moves = []
    for _ in range(iterations):
        _check_seeds(seeds)
        new = np.array([polygon_centroid(c) for c in voronoi_cells(seeds)])
        moves.append(float(np.abs(new - seeds).sum()))
        seeds = new
    return seeds, moves


# ---------------------------------------------------------------------------
# mesh data model


@dataclass(eq=False)
class PolygonalMesh:
    """Vertices plus counter-clockwise cells given as vertex-index loops.

    ``edges`` is derived: one row ``(v_low, v_high, left_cell, right_cell)``
    per edge, sorted lexicographically, with ``left_cell`` the lower cell
    index and ``right_cell = -1`` on the boundary.
    """

    vertices: np.ndarray
    cells: list[np.ndarray]
    seeds: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        self.cells = [np.asarray(c, dtype=np.int64) for c in self.cells]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edges(self) -> np.ndarray:
        incident: dict[tuple[int, int], list[int]] = {}
        for c, loop in enumerate(self.cells):
            for a, b in zip(loop, np.roll(loop, -1)):
                key = (int(min(a, b)), int(max(a, b)))
                incident.setdefault(key, []).append(c)
        rows = []
        for key in sorted(incident):
            cs = incident[key]
            rows.append((key[0], key[1], cs[0], cs[1] if len(cs) > 1 else -1))
        return np.array(rows, dtype=np.int64).reshape(-1, 4)

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {(int(r[0]), int(r[1])): e for e, r in enumerate(self.edges)}

    @property
    def boundary_edges(self) -> np.ndarray:
        return self.edges[:, 3] < 0

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        b = self.edges[self.boundary_edges]
        mask[b[:, 0]] = True
        mask[b[:, 1]] = True
        return mask

    def cell_coords(self, cell_id: int) -> np.ndarray:
        return self.vertices[self.cells[cell_id]]

    def __eq__(self, other):
        if not isinstance(other, PolygonalMesh):
            return NotImplemented
        return (
            self.vertices.shape == other.vertices.shape
            and bool(np.array_equal(self.vertices, other.vertices))
            and len(self.cells) == len(other.cells)
            and all(np.array_equal(a, b) for a, b in zip(self.cells, other.cells))
        )

    __hash__ = None


def mesh_from_polygons(polygons, snap: float = SNAP_TOL) -> PolygonalMesh:
    """Merge per-cell vertex loops into a shared-vertex mesh.

    Points closer than ``snap`` are identified (transitively); the first
    occurrence supplies the coordinates.  Coordinates within 1e-12 of the
    square's sides are put exactly on them.
    """
    pts = np.array([p for poly in polygons for p in poly], float)
    parent = np.arange(len(pts))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in sorted(cKDTree(pts).query_pairs(snap)):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(len(pts))])

    new_id = {}
    for r in roots:
        if r not in new_id:
            new_id[r] = len(new_id)
    vertices = pts[list(new_id)]
    vertices[np.abs(vertices) < 1e-12] = 0.0
    vertices[np.abs(vertices - 1.0) < 1e-12] = 1.0

    cells = []
    pos = 0
    for poly in polygons:
        ids = [new_id[roots[pos + t]] for t in range(len(poly))]
        pos += len(poly)
        loop = [v for t, v in enumerate(ids) if v != ids[t - 1]]
        cells.append(np.array(loop, dtype=np.int64))
    return PolygonalMesh(vertices, cells)


def voronoi_from_seeds(seeds) -> PolygonalMesh:
    seeds = np.asarray(seeds, float).reshape(-1, 2)
    if len(seeds) < 1:
        raise ValueError("need at least one seed")
    _check_seeds(seeds)
    mesh = mesh_from_polygons(voronoi_cells(seeds))
    mesh.seeds = seeds
    return mesh


def generate_voronoi(n_cells: int, seed: int = 1, lloyd_iters: int = 100) -> PolygonalMesh:
    """Seeded (optionally Lloyd-relaxed) Voronoi mesh of the unit square."""
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    if lloyd_iters < 0:
        raise ValueError("lloyd_iters must be >= 0")
    seeds = Pcg32(seed).points(n_cells)
    _check_seeds(seeds)
    seeds, _ = lloyd_relax(seeds, lloyd_iters)
    return voronoi_from_seeds(seeds)


def generate_square_grid(m: int) -> PolygonalMesh:
    """``m x m`` uniform squares; vertices numbered row by row from (0, 0)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    t = np.arange(m + 1) / m
    xx, yy = np.meshgrid(t, t)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])
    cells = []
    for j in range(m):
        for i in range(m):
            v = j * (m + 1) + i
            cells.append(np.array([v, v + 1, v + m + 2, v + m + 1]))
    return PolygonalMesh(vertices, cells)


# ---------------------------------------------------------------------------
# geometry queries and validation


def cell_geometry(mesh: PolygonalMesh, cell_id: int):
    """``(h_P, area, centroid)`` of one cell."""
    c = mesh.cell_coords(cell_id)
    return polygon_diameter(c), polygon_area(c), polygon_centroid(c)


def inscribed_radius(coords) -> float:
    """Radius of the largest disc inside every edge's inner half-plane.

    P is star-shaped with respect to every point of that disc, so this is
    the best radius for the star-shapedness condition.
    """
    c = np.asarray(coords, float)
    d = np.roll(c, -1, axis=0) - c
    lengths = np.hypot(d[:, 0], d[:, 1])
    normals = np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]
    offsets = (normals * c).sum(1)
    res = linprog(
        c=[0.0, 0.0, -1.0],
        A_ub=np.column_stack([normals, np.ones(len(c))]),
        b_ub=offsets,
        bounds=[(None, None), (None, None), (0.0, None)],
        method="highs",
    )
    return float(res.x[2]) if res.success else 0.0


@dataclass
class RegularityReport:
    h: float
    diameters: np.ndarray
    areas: np.ndarray
    radii: np.ndarray
    min_edge_ratios: np.ndarray
    gamma_observed: float
    gamma: float

    @property
    def star_center_found(self) -> np.ndarray:
        return self.radii > 0

    @property
    def passed(self) -> bool:
        return self.gamma_observed >= self.gamma


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def check_structure(mesh: PolygonalMesh, domain_area: float = 1.0) -> None:
    """Raise :class:`MalformedMeshError` for the first broken invariant."""
    nv = mesh.n_vertices
    used = np.zeros(nv, dtype=bool)
    for c, loop in enumerate(mesh.cells):
        if len(loop) < 3:
            raise MalformedMeshError("degenerate", f"cell {c} has {len(loop)} vertices")
        if loop.min() < 0 or loop.max() >= nv:
            raise MalformedMeshError("index", f"cell {c} references a missing vertex")
        if len(set(loop.tolist())) != len(loop):
            raise MalformedMeshError("simplicity", f"cell {c} repeats a vertex")
        used[loop] = True
        coords = mesh.vertices[loop]
        if polygon_area(coords) <= 0:
            raise MalformedMeshError("orientation", f"cell {c} is not counter-clockwise")
        m = len(loop)
        for i in range(m):
            for j in range(i + 2, m):
                if i == 0 and j == m - 1:
                    continue
                if _segments_cross(coords[i], coords[(i + 1) % m], coords[j], coords[(j + 1) % m]):
                    raise MalformedMeshError("simplicity", f"cell {c} self-intersects")
    if not used.all():
        raise MalformedMeshError("index", "unused vertices")

    directed = {}
    for c, loop in enumerate(mesh.cells):
        for a, b in zip(loop.tolist(), np.roll(loop, -1).tolist()):
            if (a, b) in directed:
                raise MalformedMeshError("edge", f"edge {a}->{b} traversed twice in one direction")
            directed[(a, b)] = c
    counts = {}
    for (a, b) in directed:
        key = (min(a, b), max(a, b))
        counts[key] = counts.get(key, 0) + 1
    if any(v > 2 for v in counts.values()):
        raise MalformedMeshError("edge", "edge shared by more than two cells")

    total = sum(polygon_area(mesh.cell_coords(c)) for c in range(mesh.n_cells))
    if abs(total - domain_area) > 1e-10:
        raise MalformedMeshError("tiling", f"cell areas sum to {total!r}")
    euler = mesh.n_vertices - len(counts) + mesh.n_cells
    if euler != 1:
        raise MalformedMeshError("euler", f"V - E + F = {euler}")


def validate(mesh: PolygonalMesh, gamma: float = 0.0, domain_area: float = 1.0) -> RegularityReport:
    """Structural checks plus the two mesh-regularity measures.

    ``gamma_observed`` is the minimum over cells of ``radius / h_P`` and
    ``min_e h_e / h_P``; the report passes when it reaches ``gamma``.
    """
    check_structure(mesh, domain_area)
    nc = mesh.n_cells
    diam, area, radius, ratio = (np.empty(nc) for _ in range(4))
    for c in range(nc):
        coords = mesh.cell_coords(c)
        diam[c] = polygon_diameter(coords)
        area[c] = polygon_area(coords)
        radius[c] = inscribed_radius(coords)
        e = np.roll(coords, -1, axis=0) - coords
        ratio[c] = np.hypot(e[:, 0], e[:, 1]).min() / diam[c]
    observed = float(np.minimum(radius / diam, ratio).min())
    return RegularityReport(float(diam.max()), diam, area, radius, ratio, observed, float(gamma))


# ---------------------------------------------------------------------------
# vempoly text format


def save(mesh: PolygonalMesh, path) -> None:
    lines = ["vempoly 1", f"nv {mesh.n_vertices}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append(f"nc {mesh.n_cells}")
    lines += [" ".join(map(str, [len(c), *c.tolist()])) for c in mesh.cells]
    Path(path).write_text("\n".join(lines) + "\n")


def load(path) -> PolygonalMesh:
    text = Path(path).read_text()
    rows = [
        (no, line.split())
        for no, line in enumerate(text.splitlines(), start=1)
        if line.strip() and not line.lstrip().startswith("#")
    ]
    it = iter(rows)

    def take(what):
        try:
            return next(it)
        except StopIteration:
            raise MeshParseError(len(text.splitlines()) + 1, f"unexpected end of file, expected {what}") from None

    def count(what):
        no, tok = take(f"'{what} <int>'")
        if len(tok) != 2 or tok[0] != what:
            raise MeshParseError(no, f"expected '{what} <int>'")
        try:
            value = int(tok[1])
        except ValueError:
            raise MeshParseError(no, f"bad {what} count {tok[1]!r}") from None
        if value < 0:
            raise MeshParseError(no, f"negative {what} count")
        return value

    no, tok = take("header")
    if tok != ["vempoly", "1"]:
        raise MeshParseError(no, "expected header 'vempoly 1'")
    nv = count("nv")
    vertices = np.empty((nv, 2))
    for i in range(nv):
        no, tok = take("vertex")
        if len(tok) != 2:
            raise MeshParseError(no, "vertex line needs two coordinates")
        try:
            vertices[i] = [float(tok[0]), float(tok[1])]
        except ValueError:
            raise MeshParseError(no, "bad coordinate") from None
    nc = count("nc")
    cells = []
    for _ in range(nc):
        no, tok = take("cell")
        try:
            ints = [int(t) for t in tok]
        except ValueError:
            raise MeshParseError(no, "cell line must be integers") from None
        if not ints or ints[0] != len(ints) - 1:
            raise MeshParseError(no, "cell vertex count does not match")
        if ints[0] < 3:
            raise MeshParseError(no, "cell needs at least 3 vertices")
        if any(v < 0 or v >= nv for v in ints[1:]):
            raise MeshParseError(no, f"vertex index out of range [0, {nv})")
        cells.append(np.array(ints[1:], dtype=np.int64))
    extra = next(it, None)
    if extra is not None:
        raise MeshParseError(extra[0], "trailing content")
    return PolygonalMesh(vertices, cells)


def euler_characteristic(mesh: PolygonalMesh) -> int:
    return mesh.n_vertices - mesh.n_edges + mesh.n_cells
