"""Estimator-style wrappers over the functional API.

They follow the scikit-learn conventions (constructor stores parameters,
``fit`` returns ``self``, learned attributes end in ``_``) so that
``get_params``/``set_params``/``clone`` work, but they are not
scikit-learn models: ``fit`` takes matrices or meshes, not ``(X, y)``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import DEFAULT_TOL
from .assembly import assemble
from .experiments import lowest_eigenvalues
from .pencil import classify_branch, solve_gep


class GeneralizedEigensolver(BaseEstimator):
    """Dense ``A x = lambda B x`` with semidefinite ``A`` or ``B``."""

    def __init__(self, tol: float = DEFAULT_TOL, eigvals_only: bool = False):
        self.tol = tol
        self.eigvals_only = eigvals_only

    def fit(self, A, B):
        spec = solve_gep(A, B, self.tol, eigvals_only=self.eigvals_only)
        self.eigenvalues_ = spec.finite
        self.infinite_count_ = spec.infinite_count
        self.eigenvectors_ = spec.vectors
        self.spectrum_ = spec
        return self


class VEMEigensolver(BaseEstimator):
    """Lowest Laplace eigenvalues of the stabilized VEM pencil on a mesh."""

    def __init__(self, k: int = 1, alpha: float = 1.0, beta: float = 1.0, n_eigs: int = 30,
                 stab_mode: str = "dofi"):
        self.k = k
        self.alpha = alpha
        self.beta = beta
        self.n_eigs = n_eigs
        self.stab_mode = stab_mode

    def fit(self, mesh, y=None):
        self.pencil_ = assemble(mesh, self.k, self.stab_mode)
        self.eigenvalues_ = lowest_eigenvalues(self.pencil_, self.alpha, self.beta, self.n_eigs)
        self.n_dofs_ = self.pencil_.n
        return self


class BranchClassifier(BaseEstimator):
    """Power-law classification of an eigenvalue curve (log-log slope)."""

    def __init__(self, rel_tol: float = 0.1):
        self.rel_tol = rel_tol

    def fit(self, params, values):
        fit = classify_branch(params, values, self.rel_tol)
        self.kind_ = fit.kind
        self.coefficient_ = fit.coefficient
        self.slope_ = fit.slope
        return self

    def predict(self, params):
        """Values of the fitted power law at ``params``."""
        check_is_fitted(self, "kind_")
        exponent = {"constant": 0, "linear": 1, "hyperbolic": -1}.get(self.kind_, round(self.slope_))
        return self.coefficient_ * np.asarray(params, dtype=float) ** exponent
