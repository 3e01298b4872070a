"""Input validation helpers shared by the pencil, assembly and estimator layers."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionMismatchError, NotSymmetricError

#: default relative threshold used for definiteness and kernel detection
DEFAULT_TOL = 1e-10


def check_symmetric(a, name: str = "matrix", *, rtol: float = 1e-12) -> np.ndarray:
    """Return ``a`` as a dense float array with exactly symmetric storage.

    The upper triangle is authoritative: the result is rebuilt from it, so
    ``out[i, j] == out[j, i]`` holds bitwise.  Inputs whose two triangles
    differ by more than ``rtol * max|a|`` are rejected.
    """
    if sp.issparse(a):
        a = a.toarray()
    a = np.array(a, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {a.shape}")
    if a.shape[0] < 1:
        raise DimensionMismatchError(f"{name} must have n >= 1")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if np.max(np.abs(a - a.T), initial=0.0) > rtol * max(scale, np.finfo(float).tiny):
        raise NotSymmetricError(f"{name} is not symmetric")
    upper = np.triu(a)
    return upper + np.triu(a, 1).T


def check_same_shape(*mats) -> int:
    n = mats[0].shape[0]
    for m in mats[1:]:
        if m.shape != (n, n):
            raise DimensionMismatchError(
                f"matrix shapes differ: {mats[0].shape} vs {m.shape}"
            )
    return n


def check_symmetric_sparse(a, name: str = "matrix") -> sp.csr_matrix:
    a = sp.csr_matrix(a, dtype=float)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {a.shape}")
    diff = abs(a - a.T)
    scale = abs(a).max() if a.nnz else 0.0
    if diff.nnz and diff.max() > 1e-12 * max(scale, np.finfo(float).tiny):
        raise NotSymmetricError(f"{name} is not symmetric")
    return a


def check_nonnegative(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be a finite nonnegative number, got {value!r}")
    return value


def check_grid(grid, name: str = "grid") -> np.ndarray:
    """Validate a parameter grid: nonempty, ascending, nonnegative, finite."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-D sequence")
    if not np.all(np.isfinite(grid)) or np.any(grid < 0):
        raise ValueError(f"{name} must contain finite nonnegative values")
    if np.any(np.diff(grid) < 0):
        raise ValueError(f"{name} must be ascending")
    return grid


def relative_threshold(eigenvalues: np.ndarray, tol: float) -> float:
    """``tol * largest eigenvalue``, the shared kernel/definiteness cutoff.

    Purely relative, so kernel counts do not change when a matrix is
    rescaled (VEM mass matrices have entries of order ``|P|``).
    """
    top = float(np.max(eigenvalues)) if len(eigenvalues) else 0.0
    return tol * max(top, 0.0)
