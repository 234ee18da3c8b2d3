"""scikit-learn style wrapper around :func:`purify`.

Each sample is one measured 2-RDM flattened as the row-major lower triangle
of its packed matrix (the layout of the JSON exchange format). ``transform``
returns purified 2-RDMs in the same layout.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .hamiltonians import ReducedHamiltonian
from .purifier import CP, MODES, V2RDM, PurificationConfig, purify
from .rdm import TwoRDM, lower_to_matrix, n_pairs
from .sdp import SolverOptions


def flatten_rdm(D: TwoRDM) -> np.ndarray:
    rows, cols = np.tril_indices(D.dim)
    return D.data[rows, cols].copy()


def unflatten_rdm(row, r: int, N: int) -> TwoRDM:
    return TwoRDM.from_noisy(lower_to_matrix(row, n_pairs(r)), r, N)


class CorrelatedPurifier(TransformerMixin, BaseEstimator):
    """Purify measured 2-RDMs against a fixed reduced Hamiltonian.

    Parameters
    ----------
    hamiltonian : ReducedHamiltonian
        Supplies r, N and the energy term.
    w : float
        Weight of the nuclear-norm term; small w favors low energy.
    mode : str
        ``"correlated-purification"`` or ``"projection"``.
    feas_tol, max_iter, penalty :
        Passed to the SDP solver.
    warm_start : bool
        Start each sample from the previous sample's solution.
    """

    def __init__(self, hamiltonian=None, w=0.1, mode=CP, feas_tol=1e-6, max_iter=50000,
                 penalty=1.0, warm_start=False):
        self.hamiltonian = hamiltonian
        self.w = w
        self.mode = mode
        self.feas_tol = feas_tol
        self.max_iter = max_iter
        self.penalty = penalty
        self.warm_start = warm_start

    def _config(self) -> PurificationConfig:
        return PurificationConfig(
            w=float(self.w), mode=self.mode,
            solver=SolverOptions(feas_tol=self.feas_tol, max_iter=self.max_iter,
                                 penalty=self.penalty),
        )

    def fit(self, X, y=None):
        if not isinstance(self.hamiltonian, ReducedHamiltonian):
            raise TypeError("hamiltonian must be a ReducedHamiltonian")
        if self.mode not in MODES or self.mode == V2RDM:
            raise ValueError(f"mode must be {CP!r} or 'projection', got {self.mode!r}")
        self._config()  # validates w
        X = check_array(X, dtype=np.float64)
        p = n_pairs(self.hamiltonian.r)
        expected = p * (p + 1) // 2
        if X.shape[1] != expected:
            raise ValueError(
                f"X has {X.shape[1]} features; r={self.hamiltonian.r} needs {expected}"
            )
        self.n_features_in_ = X.shape[1]
        self.r_ = self.hamiltonian.r
        self.n_electrons_ = self.hamiltonian.N
        return self

    def purify_one(self, D_e: TwoRDM, warm_start=None):
        check_is_fitted(self)
        return purify(self.hamiltonian, D_e, self.n_electrons_, self._config(), warm_start)

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        out = np.empty_like(X)
        results = []
        prev = None
        for n, row in enumerate(X):
            res = self.purify_one(unflatten_rdm(row, self.r_, self.n_electrons_),
                                  warm_start=prev if self.warm_start else None)
            out[n] = flatten_rdm(res.D_p)
            results.append(res)
            prev = res.solution
        self.results_ = results
        return out
