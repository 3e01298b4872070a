"""Experiment drivers behind the command-line interface.

Every driver returns a :class:`Table` (header plus rows) that serializes to a
deterministic CSV.  Eigenvalues are reported divided by pi**2 unless
``raw=True``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .assembly import GlobalPencilVEM, assemble, infsup_probe
from .exceptions import ConfigError
from .mesh import PolygonalMesh, generate_square_grid
from .pencil import (
    DENSE_LIMIT,
    ParametricPencil,
    SweepResult,
    classify_branch,
    evaluate_branches,
    predict_diagonal_spectrum,
    smallest_eigenvalues,
    solve_gep,
    sweep,
    track_branches,
)

PI2 = math.pi ** 2

#: toy pencils as diagonals (a1, a2, b1, b2)
TOY_CASES = {
    (1, None): ([3, 4, 5, 6, 0, 0], [0, 0, 0, 0, 1, 2], [1, 1, 1, 1, 1, 1], [0, 0, 0, 0, 0, 0]),
    (2, None): ([1, 1, 1, 1, 1, 1], [0, 0, 0, 0, 0, 0], [3, 4, 5, 6, 0, 0], [0, 0, 0, 0, 1, 2]),
    (3, "disjoint"): ([0, 0, 3, 4, 5, 6], [1, 2, 0, 0, 0, 0], [7, 8, 9, 10, 0, 0], [0, 0, 0, 0, 0.8, 1]),
    (3, "intersect"): ([3, 0, 0, 4, 5, 6], [0, 1, 2, 0, 0, 0], [7, 8, 0, 0, 9, 10], [0, 0, 0.8, 1, 0, 0]),
}
TOY_DEFAULT_AXIS = {1: "alpha", 2: "beta", 3: "alpha"}
TOY_TOL = 1e-9

FLAT_GATE = 5e-4
POWER_GATE = 0.05
MIN_CURVE_POINTS = 4


def fmt(x) -> str:
    """Round-trip float formatting used in every CSV."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


@dataclass
class Table:
    header: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_csv(self, target=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([fmt(v) for v in row])
        text = buf.getvalue()
        if target is not None:
            if hasattr(target, "write"):
                target.write(text)
            else:
                Path(target).write_text(text)
        return text

    def column(self, name: str) -> list:
        j = self.header.index(name)
        return [r[j] for r in self.rows]


# ---------------------------------------------------------------------------
# grids


def parse_grid(text: str) -> np.ndarray:
    """``a:b:step`` (linear) or ``log:a:b:n`` (``n`` log-spaced points).

    Points are generated as ``a + i*step`` (resp. exponent ``la + i*d``) so a
    grid with half the step contains the coarse grid bitwise.
    """
    parts = text.split(":")
    try:
        if parts[0] == "log" and len(parts) == 4:
            a, b, n = float(parts[1]), float(parts[2]), int(parts[3])
            if a <= 0 or b < a or n < 1:
                raise ConfigError(f"bad log grid {text!r}")
            if n == 1:
                return np.array([a])
            la, lb = math.log10(a), math.log10(b)
            d = (lb - la) / (n - 1)
            grid = 10.0 ** (la + d * np.arange(n))
            grid[0], grid[-1] = a, b
            return grid
        if len(parts) == 1:
            return np.array([float(parts[0])])
        if len(parts) != 3:
            raise ConfigError(f"grid must be a:b:step or log:a:b:n, got {text!r}")
        a, b, step = map(float, parts)
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}: {exc}") from None
    if not (step > 0) or b < a or a < 0:
        raise ConfigError(f"bad grid {text!r}: need 0 <= a <= b and step > 0")
    n = int(math.floor((b - a) / step + 1e-9)) + 1
    return a + step * np.arange(n)


def parse_int_list(text: str, name: str = "list") -> list[int]:
    try:
        out = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"bad {name} {text!r}") from None
    if not out:
        raise ConfigError(f"empty {name}")
    return out


def _check_k(k: int) -> int:
    if k not in (1, 2, 3):
        raise ConfigError(f"k must be 1, 2 or 3, got {k}")
    return k


# ---------------------------------------------------------------------------
# exact reference


def exact_laplace_eigs(m: int) -> np.ndarray:
    """First ``m`` Dirichlet Laplace eigenvalues of the unit square, with multiplicity."""
    if m < 1:
        raise ValueError("m must be >= 1")
    # (1, j) alone gives m values <= m**2 + 1, so i, j <= m is enough
    i = np.arange(1, m + 1)
    vals = np.sort((i[:, None] ** 2 + i[None, :] ** 2).ravel())[:m]
    return PI2 * vals.astype(float)


# ---------------------------------------------------------------------------
# toy pencils


def toy_pencil(case: int, variant: str | None = None) -> ParametricPencil:
    if case == 3:
        variant = variant or "intersect"
        if variant not in ("intersect", "disjoint"):
            raise ConfigError(f"variant must be intersect or disjoint, got {variant!r}")
    elif case in (1, 2):
        variant = None
    else:
        raise ConfigError(f"case must be 1, 2 or 3, got {case}")
    return ParametricPencil.from_diagonals(*TOY_CASES[(case, variant)])


def run_toy(case: int, grid: Sequence[float], variant: str | None = None,
            axis: str | None = None, fixed: float = 1.0) -> Table:
    """Brute-force spectra next to the closed-form branches on a grid.

    ``meta["max_discrepancy"]`` is the worst absolute difference over the
    whole grid; an infinite-count mismatch counts as ``inf``.
    """
    p = toy_pencil(case, variant)
    axis = axis or TOY_DEFAULT_AXIS[case]
    if axis not in ("alpha", "beta"):
        raise ConfigError(f"axis must be alpha or beta, got {axis!r}")
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(grid < 0):
        raise ConfigError("grid must be nonempty and nonnegative")
    pred = predict_diagonal_spectrum(p)
    table = Table(("param", "index", "value", "predicted", "classification", "max_discrepancy"))
    worst = 0.0
    for t in grid:
        alpha, beta = (t, fixed) if axis == "alpha" else (fixed, t)
        spec = solve_gep(p.A(alpha), p.B(beta), eigvals_only=True)
        want, kinds = evaluate_branches(pred, alpha, beta)
        got = spec.padded()
        fin = np.isfinite(want)
        if np.count_nonzero(~fin) != spec.infinite_count:
            disc = math.inf
        else:
            disc = float(np.max(np.abs(got[fin] - want[fin]), initial=0.0))
        worst = max(worst, disc)
        for r in range(p.n):
            table.rows.append((t, r, got[r], want[r], kinds[r].value, disc))
    table.meta["max_discrepancy"] = worst
    table.meta["passed"] = worst <= TOY_TOL
    return table


# ---------------------------------------------------------------------------
# kernel and inf-sup tables


def run_tables(meshes: Iterable[PolygonalMesh], k_list: Sequence[int], tol: float = 1e-10) -> Table:
    """Kernel dimensions of a1 and b1 per (k, N) and the k=1 inf-sup probe per N."""
    table = Table(("table", "k", "N", "value"))
    k_list = [_check_k(k) for k in k_list]
    for mesh in meshes:
        n_cells = mesh.n_cells
        for k in k_list:
            g = assemble(mesh, k)
            table.rows.append(("kernel_a1", k, n_cells, g.kernel_dim_a1(tol)))
            table.rows.append(("kernel_b1", k, n_cells, g.kernel_dim_b1(tol)))
            if k == 1:
                table.rows.append(("infsup", 1, n_cells, infsup_probe(g, tol) / PI2))
    order = {"kernel_a1": 0, "kernel_b1": 1, "infsup": 2}
    table.rows.sort(key=lambda r: (order[r[0]], r[1], r[2]))
    return table


# ---------------------------------------------------------------------------
# sweeps


def label_curves(params, spectra, axis: str = "alpha", *, flat_gate: float = FLAT_GATE,
                 power_gate: float = POWER_GATE, min_points: int = MIN_CURVE_POINTS):
    """Per-value branch tags for a 1-D sweep.

    Curves are continued with :func:`track_branches` twice: once as flat
    curves with a tight gate, once along the parameter's own power law
    (linear in alpha, hyperbolic in beta).  Each continued curve with at
    least ``min_points`` positive-parameter points is passed to
    :func:`classify_branch`; its values take the resulting tag.  Flat tags
    win over power-law tags.  Returns a list of string arrays aligned with
    ``spectra`` and the list of ``(curve, fit, tag)`` triples.
    """
    params = np.asarray(params, dtype=float)
    spectra = [np.asarray(s, dtype=float) for s in spectra]
    tags = []
    for s in spectra:
        t = np.full(len(s), "mixed", dtype=object)
        t[np.isinf(s)] = "infinite"
        t[np.isnan(s)] = "failed"
        tags.append(t)
    power_kind, power_tag, exponent = (
        ("linear", "linear_alpha", 1.0) if axis == "alpha" else ("hyperbolic", "hyperbolic_beta", -1.0)
    )
    found = []
    for exp, gate, kind, tag in ((exponent, power_gate, power_kind, power_tag),
                                 (0.0, flat_gate, "constant", "constant")):
        for c in track_branches(params, spectra, exp, gate):
            pos = params[c.positions] > 0
            if np.count_nonzero(pos) < min_points:
                continue
            fit = classify_branch(params[c.positions][pos], c.values[pos])
            if fit.kind != kind:
                continue
            found.append((c, fit, tag))
            for i, slot in zip(c.positions, c.slots):
                tags[i][slot] = tag
    return tags, found


def _vem_pencil(g: GlobalPencilVEM) -> ParametricPencil:
    return g.to_pencil()


def run_sweep(mesh: PolygonalMesh, k: int, axis: str, fixed: float, grid: Sequence[float],
              m: int | None = 30, *, raw: bool = False, below: float | None = None,
              stab_mode: str = "dofi", pencil: ParametricPencil | None = None) -> Table:
    """Eigenvalues of the assembled VEM pencil along one parameter axis.

    Either the ``m`` smallest eigenvalues or, with ``below``, every
    eigenvalue up to that bound (in the reported units) per grid point.
    ``meta["result"]`` holds the raw :class:`SweepResult`, ``meta["curves"]``
    the classified continued curves.
    """
    _check_k(k)
    if axis not in ("alpha", "beta"):
        raise ConfigError(f"axis must be alpha or beta, got {axis!r}")
    if m is not None and m < 1:
        raise ConfigError("m must be >= 1")
    if below is None and m is None:
        raise ConfigError("give m or below")
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(grid < 0) or np.any(np.diff(grid) < 0):
        raise ConfigError("grid must be nonempty, nonnegative and ascending")
    if fixed < 0:
        raise ConfigError("fixed parameter must be nonnegative")
    if pencil is None:
        pencil = _vem_pencil(assemble(mesh, k, stab_mode))
    scale = 1.0 if raw else PI2
    alphas, betas = (grid, [fixed]) if axis == "alpha" else ([fixed], grid)
    res: SweepResult = sweep(pencil, alphas, betas, n_eigs=m,
                             max_value=None if below is None else below * scale,
                             on_error="record")
    spectra = [res.values[i, 0] if axis == "alpha" else res.values[0, i] for i in range(len(grid))]
    spectra = [s / scale for s in spectra]
    tags, curves = label_curves(grid, spectra, axis)
    width = res.values.shape[2]
    exact = exact_laplace_eigs(max(width, 1)) / scale
    table = Table(("param", "index", "value", "exact", "classification"))
    for i, t in enumerate(grid):
        key = (i, 0) if axis == "alpha" else (0, i)
        if key in res.failures:
            table.rows.append((t, 0, math.nan, exact[0], "failed"))
            continue
        s = spectra[i]
        for r in range(width):
            if below is not None and not np.isfinite(s[r]):
                break
            table.rows.append((t, r, s[r], exact[r], tags[i][r]))
    table.meta.update(result=res, curves=curves, spectra=spectra, failures=dict(res.failures))
    return table


# ---------------------------------------------------------------------------
# convergence


def lowest_eigenvalues(g: GlobalPencilVEM, alpha: float, beta: float, m: int) -> np.ndarray:
    if g.n <= DENSE_LIMIT:
        spec = solve_gep(g.A(alpha).toarray(), g.B(beta).toarray(), eigvals_only=True)
    else:
        spec = smallest_eigenvalues(g.A(alpha), g.B(beta), m)
    return spec.finite[:m]


def run_convergence(k: int, mesh_sizes: Sequence[int], alpha: float = 1.0, beta: float = 1.0,
                    m: int = 1, *, raw: bool = False) -> Table:
    """Relative errors against the exact spectrum on square grids, with rates.

    ``rate`` is ``log2(e_H / e_h)`` between consecutive grids; it is empty on
    the first grid.
    """
    _check_k(k)
    if not mesh_sizes or any(s < 1 for s in mesh_sizes):
        raise ConfigError("mesh sizes must be positive")
    if m < 1:
        raise ConfigError("m must be >= 1")
    scale = 1.0 if raw else PI2
    exact = exact_laplace_eigs(m)
    table = Table(("grid", "h", "index", "value", "exact", "rel_error", "rate"))
    prev = None
    for size in mesh_sizes:
        g = assemble(generate_square_grid(size), k)
        lam = lowest_eigenvalues(g, alpha, beta, m)
        err = np.abs(lam - exact[: len(lam)]) / exact[: len(lam)]
        h = math.sqrt(2.0) / size
        for i in range(len(lam)):
            rate = None
            if prev is not None and i < len(prev[1]) and err[i] > 0 and prev[1][i] > 0:
                rate = math.log(prev[1][i] / err[i]) / math.log(prev[0] / h)
            table.rows.append((size, h, i, lam[i] / scale, exact[i] / scale, err[i], rate))
        prev = (h, err)
    return table
