"""Parameter-dependent symmetric pencils ``A1 + alpha*A2``, ``B1 + beta*B2``.

This module holds the dense generalized eigensolver used everywhere else,
the kernel/assumption diagnostics, the closed-form branch predictor for
diagonal pencils and the parameter sweep driver.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from threadpoolctl import threadpool_limits

from ._validation import (
    DEFAULT_TOL,
    check_grid,
    check_nonnegative,
    check_same_shape,
    check_symmetric,
    check_symmetric_sparse,
    relative_threshold,
)
from .exceptions import (
    BothSingularError,
    NonPositiveValueError,
    NotDiagonalError,
    SweepPointError,
    TooFewPointsError,
    ZeroRowError,
)

#: matrices larger than this are solved with shift-invert Lanczos in sweeps
#: when only a few eigenvalues are requested
DENSE_LIMIT = 1200


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Finite eigenvalues in ascending order plus the number of infinite ones."""

    finite: np.ndarray
    infinite_count: int = 0
    vectors: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.finite) + self.infinite_count

    def padded(self, size: int | None = None) -> np.ndarray:
        """Finite values followed by ``+inf`` for every infinite eigenvalue."""
        out = np.concatenate([self.finite, np.full(self.infinite_count, np.inf)])
        return out if size is None else out[:size]


def kernel_basis(c, tol: float = DEFAULT_TOL):
    """Orthonormal bases of ``ker c`` and its complement for symmetric PSD ``c``.

    Returns ``(kernel, complement, eigenvalues)``.  An eigenvalue belongs to
    the kernel when it is at most ``tol * lambda_max``.
    """
    c = check_symmetric(c, "c")
    w, v = sla.eigh(c)
    small = w <= relative_threshold(w, tol)
    return v[:, small], v[:, ~small], w


def kernel_dim(c, tol: float = DEFAULT_TOL) -> int:
    """Number of eigenvalues of ``c`` at or below ``tol * lambda_max``."""
    c = check_symmetric(c, "c")
    w = sla.eigvalsh(c)
    return int(np.count_nonzero(w <= relative_threshold(w, tol)))


def common_kernel_dim(a, b, tol: float = DEFAULT_TOL) -> int:
    """Dimension of ``ker a ∩ ker b`` for PSD ``a`` and ``b``."""
    a = check_symmetric(a, "a")
    b = check_symmetric(b, "b")
    tiny = np.finfo(float).tiny
    s = a / max(np.max(np.abs(a)), tiny) + b / max(np.max(np.abs(b)), tiny)
    return kernel_dim(s, tol)


def _is_definite(w: np.ndarray, tol: float) -> bool:
    return bool(w[0] > relative_threshold(w, tol))


def _canonicalize(values: np.ndarray, vectors: np.ndarray):
    # largest-magnitude component (first on ties) made positive
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    vectors = vectors * signs
    # exact ties in value: order by lexicographic vector content
    keys = [vectors[i] for i in range(vectors.shape[0] - 1, -1, -1)] + [values]
    order = np.lexsort(keys)
    return values[order], vectors[:, order]


def solve_gep(a, b, tol: float = DEFAULT_TOL, *, eigvals_only: bool = False,
              upper: float | None = None) -> Spectrum:
    """Solve ``a x = lambda b x`` for symmetric ``a``, ``b``.

    A matrix is definite when its smallest eigenvalue exceeds ``tol`` times
    its largest.  If ``b`` is definite all ``n`` eigenvalues are finite and
    the eigenvectors are ``b``-orthonormal.  Otherwise, if ``a`` is definite,
    the reciprocal pencil ``b x = mu a x`` is solved: the ``dim ker b``
    vanishing ``mu`` become infinite eigenvalues and the rest map to
    ``lambda = 1/mu``, with ``a``-orthonormal eigenvectors.

    With ``upper`` (values only) just the finite eigenvalues ``<= upper`` are
    returned; ``infinite_count`` is still exact.

    Raises :class:`BothSingularError` when neither matrix is definite.
    """
    if upper is not None and not eigvals_only:
        raise ValueError("upper is only supported with eigvals_only=True")
    a = check_symmetric(a, "a")
    b = check_symmetric(b, "b")
    n = check_same_shape(a, b)

    wb = sla.eigvalsh(b)
    if _is_definite(wb, tol):
        if eigvals_only:
            if upper is not None:
                return Spectrum(sla.eigh(a, b, eigvals_only=True, subset_by_value=(-np.inf, upper)), 0)
            return Spectrum(sla.eigh(a, b, eigvals_only=True), 0)
        w, v = sla.eigh(a, b)
        w, v = _canonicalize(w, v)
        return Spectrum(w, 0, v)

    wa = sla.eigvalsh(a)
    if not _is_definite(wa, tol):
        raise BothSingularError(common_kernel_dim(a, b, tol))

    # dim ker b equals the number of vanishing mu when a is definite
    infinite = int(np.count_nonzero(wb <= relative_threshold(wb, tol)))
    if infinite == n:
        return Spectrum(np.empty(0), n, None if eigvals_only else np.empty((n, 0)))
    if eigvals_only:
        if upper is not None:
            if upper <= 0:
                return Spectrum(np.empty(0), infinite)
            mu = sla.eigh(b, a, eigvals_only=True, subset_by_value=(1.0 / upper, np.inf))
            mu = mu[mu >= 1.0 / upper][-(n - infinite):]
        else:
            mu = sla.eigh(b, a, eigvals_only=True, subset_by_index=[infinite, n - 1])
        return Spectrum(1.0 / mu[::-1], infinite)
    mu, v = sla.eigh(b, a, subset_by_index=[infinite, n - 1])
    lam, vec = _canonicalize(1.0 / mu[::-1], v[:, ::-1])
    return Spectrum(lam, infinite, vec)


def smallest_eigenvalues(a, b, m: int, tol: float = DEFAULT_TOL, *, infinite_count: int = 0) -> Spectrum:
    """The ``m`` smallest finite eigenvalues of a large sparse PSD pencil.

    Shift-invert Lanczos about a small negative shift, so a singular ``a``
    or a singular ``b`` (but not both) is tolerated.  The caller supplies
    ``infinite_count`` since it cannot be read off a partial spectrum.
    """
    a = sp.csc_matrix(a, dtype=float)
    b = sp.csc_matrix(b, dtype=float)
    n = a.shape[0]
    m = min(m, n - infinite_count)
    want = min(m + 10, n - 1)
    norm_a = spla.norm(a, 1)
    norm_b = spla.norm(b, 1)
    if norm_b == 0.0:
        return Spectrum(np.empty(0), n)
    sigma = -1e-6 * max(norm_a, np.finfo(float).tiny) / norm_b
    v0 = np.random.default_rng(20240601).standard_normal(n)
    w = spla.eigsh(a, k=want, M=b, sigma=sigma, which="LM", v0=v0,
                   return_eigenvectors=False, tol=tol * 1e-2)
    w = np.sort(w)[:m]
    return Spectrum(w, infinite_count)


# ---------------------------------------------------------------------------
# assumption check


@dataclass(frozen=True)
class AssumptionReport:
    kernel_dim_c1: int
    c2_pd_on_kernel: bool
    c2_vanishes_on_complement: bool
    intersection_dim: int

    @property
    def holds(self) -> bool:
        return self.c2_pd_on_kernel and self.c2_vanishes_on_complement


def check_assumption(c1, c2, tol: float = DEFAULT_TOL) -> AssumptionReport:
    """Check the splitting hypothesis for ``C = C1 + gamma*C2``.

    ``C2`` must be definite on ``ker C1`` and vanish on its orthogonal
    complement.  ``intersection_dim`` is ``dim(ker C1 ∩ ker C2)``, which is
    also the number of eigenvalues pinned at zero when the first property
    fails.
    """
    c1 = check_symmetric(c1, "c1")
    c2 = check_symmetric(c2, "c2")
    check_same_shape(c1, c2)
    kernel, complement, _ = kernel_basis(c1, tol)
    scale = float(np.max(np.abs(sla.eigvalsh(c2))))

    if kernel.shape[1]:
        restricted = sla.eigvalsh(kernel.T @ c2 @ kernel)
        inter = int(np.count_nonzero(restricted <= tol * scale))
    else:
        inter = 0
    vanishes = True
    if complement.shape[1]:
        vanishes = bool(np.max(np.linalg.norm(c2 @ complement, axis=0)) <= tol * scale)
    return AssumptionReport(
        kernel_dim_c1=kernel.shape[1],
        c2_pd_on_kernel=inter == 0,
        c2_vanishes_on_complement=vanishes,
        intersection_dim=inter,
    )


# ---------------------------------------------------------------------------
# parametric pencils


@dataclass(frozen=True, eq=False)
class ParametricPencil:
    """The pencil ``(A1 + alpha*A2, B1 + beta*B2)``.

    Dense inputs are symmetrized from their upper triangle and checked for
    positive semidefiniteness; sparse inputs (large assembled pencils) are
    only checked for symmetry.
    """

    a1: np.ndarray
    a2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    alpha: float = 0.0
    beta: float = 0.0
    tol: float = field(default=DEFAULT_TOL, repr=False)

    def __post_init__(self):
        mats = {}
        for name in ("a1", "a2", "b1", "b2"):
            m = getattr(self, name)
            if sp.issparse(m):
                mats[name] = check_symmetric_sparse(m, name)
            else:
                m = check_symmetric(m, name)
                w = sla.eigvalsh(m)
                if w[0] < -relative_threshold(np.abs(w), self.tol):
                    raise ValueError(f"{name} is not positive semidefinite (min eig {w[0]:.3e})")
                mats[name] = m
        check_same_shape(*mats.values())
        for name, m in mats.items():
            object.__setattr__(self, name, m)
        object.__setattr__(self, "alpha", check_nonnegative(self.alpha, "alpha"))
        object.__setattr__(self, "beta", check_nonnegative(self.beta, "beta"))

    @classmethod
    def from_diagonals(cls, a1, a2, b1, b2, alpha=0.0, beta=0.0) -> "ParametricPencil":
        return cls(np.diag(np.asarray(a1, float)), np.diag(np.asarray(a2, float)),
                   np.diag(np.asarray(b1, float)), np.diag(np.asarray(b2, float)),
                   alpha, beta)

    @property
    def n(self) -> int:
        return self.a1.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.a1)

    def with_params(self, alpha=None, beta=None) -> "ParametricPencil":
        return ParametricPencil(self.a1, self.a2, self.b1, self.b2,
                                self.alpha if alpha is None else alpha,
                                self.beta if beta is None else beta, self.tol)

    def A(self, alpha=None):
        alpha = self.alpha if alpha is None else alpha
        return self.a1 + alpha * self.a2

    def B(self, beta=None):
        beta = self.beta if beta is None else beta
        return self.b1 + beta * self.b2


class BranchKind(str, enum.Enum):
    CONSTANT = "constant"
    LINEAR_ALPHA = "linear_alpha"
    HYPERBOLIC_BETA = "hyperbolic_beta"
    RATIO_ALPHA_BETA = "ratio_alpha_beta"
    INFINITE = "infinite"


class Branch(NamedTuple):
    coefficient: float
    kind: BranchKind

    def value(self, alpha: float, beta: float) -> float:
        kind, c = self.kind, self.coefficient
        if kind is BranchKind.CONSTANT:
            return c
        if kind is BranchKind.LINEAR_ALPHA:
            return alpha * c
        if kind is BranchKind.INFINITE or beta == 0.0:
            return math.inf
        if kind is BranchKind.HYPERBOLIC_BETA:
            return c / beta
        return alpha * c / beta


@dataclass(frozen=True)
class BranchPrediction:
    branches: tuple[Branch, ...]

    def __len__(self):
        return len(self.branches)

    def count(self, kind: BranchKind) -> int:
        return sum(1 for b in self.branches if b.kind is kind)


def predict_diagonal_spectrum(p: ParametricPencil) -> BranchPrediction:
    """Closed-form eigenvalue branches of a diagonal parametric pencil.

    Each index lies in exactly one of ``ker A1 ∩ ker B1``, ``ker A1 ∩ ker B1⊥``,
    ``ker A1⊥ ∩ ker B1``, ``ker A1⊥ ∩ ker B1⊥`` and contributes respectively a
    ratio ``alpha/beta``, linear-in-alpha, hyperbolic-in-beta or constant
    branch.  An index with no B-side entry yields an infinite eigenvalue.
    """
    diags = []
    for name in ("a1", "a2", "b1", "b2"):
        m = getattr(p, name)
        m = m.toarray() if sp.issparse(m) else m
        d = np.diag(m)
        if np.any(m - np.diag(d)):
            raise NotDiagonalError(f"{name} is not diagonal")
        diags.append(d)
    a1, a2, b1, b2 = diags

    branches = []
    for i in range(p.n):
        if a1[i] and a2[i]:
            raise ValueError(f"index {i}: both a1 and a2 are nonzero")
        if b1[i] and b2[i]:
            raise ValueError(f"index {i}: both b1 and b2 are nonzero")
        num = a1[i] or a2[i]
        if not (num or b1[i] or b2[i]):
            raise ZeroRowError(i)
        if b1[i]:
            kind = BranchKind.LINEAR_ALPHA if a2[i] else BranchKind.CONSTANT
            branches.append(Branch(num / b1[i], kind))
        elif b2[i]:
            if not num:
                branches.append(Branch(0.0, BranchKind.CONSTANT))
            else:
                kind = BranchKind.RATIO_ALPHA_BETA if a2[i] else BranchKind.HYPERBOLIC_BETA
                branches.append(Branch(num / b2[i], kind))
        else:
            branches.append(Branch(math.inf, BranchKind.INFINITE))
    return BranchPrediction(tuple(branches))


def evaluate_branches(pred: BranchPrediction, alpha: float, beta: float):
    """Branch values at ``(alpha, beta)`` sorted ascending, with their kinds.

    Infinite values (``beta == 0`` on a beta-dependent branch, or an
    infinite branch) are ``+inf`` and sort last.
    """
    alpha = check_nonnegative(alpha, "alpha")
    beta = check_nonnegative(beta, "beta")
    values = np.array([b.value(alpha, beta) for b in pred.branches])
    order = np.argsort(values, kind="stable")
    return values[order], [pred.branches[i].kind for i in order]


def evaluate_prediction(pred: BranchPrediction, alpha: float, beta: float) -> Spectrum:
    values, _ = evaluate_branches(pred, alpha, beta)
    finite = values[np.isfinite(values)]
    return Spectrum(finite, int(len(values) - len(finite)))


# ---------------------------------------------------------------------------
# sweeps


def thread_count() -> int:
    """Worker count for grid sweeps, capped by ``SPECPENCIL_THREADS``."""
    raw = os.environ.get("SPECPENCIL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(eq=False)
class SweepResult:
    """Sorted spectra over an ``alpha x beta`` grid.

    ``values[i, j, r]`` is the r-th smallest eigenvalue at
    ``(alphas[i], betas[j])``; infinite eigenvalues are ``+inf`` and grid
    points whose solve failed are ``nan`` with the error in ``failures``.
    """

    alphas: np.ndarray
    betas: np.ndarray
    values: np.ndarray
    infinite_counts: np.ndarray
    failures: dict = field(default_factory=dict)

    @property
    def n_curves(self) -> int:
        return self.values.shape[2]

    def curve(self, index: int, axis: str = "alpha", at: int = 0):
        """``(params, values)`` of curve ``index`` along one grid axis."""
        if axis == "alpha":
            return self.alphas, self.values[:, at, index]
        if axis == "beta":
            return self.betas, self.values[at, :, index]
        raise ValueError(f"axis must be 'alpha' or 'beta', got {axis!r}")

    def classify(self, axis: str = "alpha", at: int = 0, rel_tol: float = 0.1):
        """Branch fit of every curve along ``axis``; ``None`` where not classifiable."""
        fits = []
        for r in range(self.n_curves):
            params, vals = self.curve(r, axis, at)
            ok = (params > 0) & np.isfinite(vals) & (vals > 0)
            try:
                fits.append(classify_branch(params[ok], vals[ok], rel_tol))
            except (TooFewPointsError, NonPositiveValueError):
                fits.append(None)
        return fits


def _solve_point(p: ParametricPencil, alpha: float, beta: float, tol: float, n_eigs, max_value=None):
    A, B = p.A(alpha), p.B(beta)
    if max_value is not None:
        spec = solve_gep(A, B, tol, eigvals_only=True, upper=max_value)
        if n_eigs is not None:
            spec = Spectrum(spec.finite[:n_eigs], spec.infinite_count)
        return spec
    if p.is_sparse and n_eigs is not None and p.n > DENSE_LIMIT and n_eigs < p.n // 4:
        inf = kernel_dim(B, tol) if beta == 0.0 else 0
        return smallest_eigenvalues(A, B, n_eigs, tol, infinite_count=inf)
    return solve_gep(A, B, tol, eigvals_only=True)


def sweep(
    p: ParametricPencil,
    alpha_grid: Sequence[float],
    beta_grid: Sequence[float],
    tol: float = DEFAULT_TOL,
    *,
    n_eigs: int | None = None,
    max_value: float | None = None,
    on_error: str = "raise",
) -> SweepResult:
    """Solve the pencil at every ``(alpha, beta)`` grid point.

    Spectra are sorted ascending per point; no continuation across branch
    crossings is attempted (see :func:`track_branches`).  With ``n_eigs``
    only the smallest values are kept (large sparse pencils then use
    shift-invert Lanczos, assuming ``B1 + beta*B2`` is definite for
    ``beta > 0``).  With ``max_value`` every finite eigenvalue up to that
    bound is computed densely; missing slots are padded with ``+inf``.
    ``on_error="record"`` stores failures instead of raising
    :class:`SweepPointError`.
    """
    if on_error not in ("raise", "record"):
        raise ValueError("on_error must be 'raise' or 'record'")
    alphas = check_grid(alpha_grid, "alpha_grid")
    betas = check_grid(beta_grid, "beta_grid")
    if n_eigs is not None and int(n_eigs) < 1:
        raise ValueError("n_eigs must be >= 1")
    failures = {}
    points = [(i, j) for i in range(len(alphas)) for j in range(len(betas))]

    def work(ij):
        i, j = ij
        try:
            return ij, _solve_point(p, alphas[i], betas[j], tol, n_eigs, max_value), None
        except Exception as exc:  # noqa: BLE001 - reported per grid point
            return ij, None, exc

    workers = min(thread_count(), len(points))
    # single-threaded BLAS keeps results bitwise independent of the worker count
    with threadpool_limits(limits=1, user_api="blas"):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(work, points))
        else:
            results = [work(ij) for ij in points]

    if max_value is None:
        width = p.n if n_eigs is None else min(int(n_eigs), p.n)
    else:
        width = max([len(spec.finite) for _, spec, _ in results if spec is not None], default=0)
    values = np.full((len(alphas), len(betas), width), np.nan)
    infinite = np.full((len(alphas), len(betas)), -1, dtype=int)
    for (i, j), spec, exc in results:
        if exc is not None:
            if on_error == "raise":
                raise SweepPointError(alphas[i], betas[j], exc) from exc
            failures[(i, j)] = f"{type(exc).__name__}: {exc}"
            continue
        row = (spec.finite if max_value is not None else spec.padded())[:width]
        values[i, j, : len(row)] = row
        values[i, j, len(row):] = np.inf
        infinite[i, j] = spec.infinite_count
    return SweepResult(alphas, betas, values, infinite, failures)


class TrackedCurve(NamedTuple):
    """One continued eigenvalue curve.

    ``positions`` are grid indices, ``slots`` the index of each value within
    the spectrum passed in at that grid position.
    """

    positions: np.ndarray
    values: np.ndarray
    slots: np.ndarray


def track_branches(params, spectra, exponent: float | None = None, gate: float = 0.05) -> list[TrackedCurve]:
    """Continue eigenvalue curves across a 1-D parameter grid.

    Consecutive spectra are matched greedily, cheapest pair first, on the log
    distance to the power-law continuation ``value * (p'/p)**e``.  With
    ``exponent`` fixed only that family is followed (``0`` flat, ``1``
    linear, ``-1`` hyperbolic); otherwise each match uses the best of the
    three.  Unlike sorting by index this keeps branches apart through
    crossings.  Matches costing more than ``gate`` end a curve.  Non-finite
    and non-positive values are ignored; a zero parameter only admits flat
    continuation.
    """
    params = np.asarray(params, dtype=float)
    if len(spectra) != len(params):
        raise ValueError("need one spectrum per parameter value")
    exps = (-1.0, 0.0, 1.0) if exponent is None else (float(exponent),)
    clean, where = [], []
    for row in spectra:
        row = np.asarray(row, dtype=float)
        ok = np.nonzero(np.isfinite(row) & (row > 0))[0]
        ok = ok[np.argsort(row[ok], kind="stable")]
        clean.append(row[ok])
        where.append(ok)
    curves: list[list] = []
    prev_ids = np.empty(0, dtype=int)
    for i, row in enumerate(clean):
        ids = np.full(len(row), -1, dtype=int)
        if i > 0 and len(row) and len(prev_ids):
            x = np.log(clean[i - 1])[:, None]
            y = np.log(row)[None, :]
            if params[i - 1] > 0:
                step = np.log(params[i] / params[i - 1])
                cost = np.min([np.abs(y - x - e * step) for e in exps], axis=0)
            else:
                cost = np.abs(y - x) if 0.0 in exps else np.full((x.size, y.size), np.inf)
            # greedy, cheapest first: exact continuations are never traded
            # away for a smaller total as an optimal assignment would do
            ra, cb = np.nonzero(cost <= gate)
            order = np.lexsort((cb, ra, cost[ra, cb]))
            used_a = np.zeros(x.size, dtype=bool)
            for t in order:
                a, b = ra[t], cb[t]
                if not used_a[a] and ids[b] < 0:
                    used_a[a] = True
                    ids[b] = prev_ids[a]
        for b in range(len(row)):
            if ids[b] < 0:
                ids[b] = len(curves)
                curves.append([])
            curves[ids[b]].append((i, row[b], where[i][b]))
        prev_ids = ids
    return [TrackedCurve(*(np.array([q[t] for q in pts]) for t in range(3))) for pts in curves]


# ---------------------------------------------------------------------------
# branch classification


class BranchFit(NamedTuple):
    kind: str
    coefficient: float
    slope: float


def classify_branch(params, values, rel_tol: float = 0.1) -> BranchFit:
    """Classify a curve by the slope of its log-log least-squares fit.

    Slope near 0 is ``constant``, near +1 ``linear``, near -1 ``hyperbolic``;
    anything else is ``mixed``.  The coefficient is the geometric mean of
    ``value * param**(-round(slope))``.
    """
    params = np.asarray(params, dtype=float).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if params.shape != values.shape:
        raise ValueError("params and values must have the same length")
    if len(params) < 4:
        raise TooFewPointsError(f"need at least 4 points, got {len(params)}")
    if np.any(params <= 0) or np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise NonPositiveValueError("params and values must be strictly positive")
    lx, ly = np.log(params), np.log(values)
    if np.ptp(lx) == 0:
        raise TooFewPointsError("parameter values must not all coincide")
    slope = float(np.polyfit(lx, ly, 1)[0])
    if abs(slope) < rel_tol:
        kind, exponent = "constant", 0
    elif abs(slope - 1.0) < rel_tol:
        kind, exponent = "linear", 1
    elif abs(slope + 1.0) < rel_tol:
        kind, exponent = "hyperbolic", -1
    else:
        kind, exponent = "mixed", round(slope)
    coefficient = float(np.exp(np.mean(ly - exponent * lx)))
    return BranchFit(kind, coefficient, slope)
