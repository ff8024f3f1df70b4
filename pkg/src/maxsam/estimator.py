"""Estimator-style wrapper: fit hidden variables, then query or sample the ensemble."""
from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import ensembles as ens
from .sampler import SampleSet, sample_ensemble
from .solver import solve
from .validation import as_constraints, check_eps, check_model


class MaxEntModel(BaseEstimator):
    """Maximum-entropy null model fitted by likelihood maximization.

    Parameters
    ----------
    model : str
        One of UBCM, DBCM, RBCM, UWCM, DWCM, RWCM, UECM.
    eps : float
        Largest tolerated relative error between observed and expected
        constraints.
    max_iter : int
        Iteration cap of the solver.
    binarize : bool
        Let binary models read weighted graphs as ``w > 0``.
    force_refine : bool
        Always run the Newton polishing stage.

    Attributes
    ----------
    hidden_ : HiddenVariables
    report_ : SolveReport
    observed_ : ConstraintSet
    n_nodes_ : int
    """

    def __init__(self, model="UBCM", eps=1e-6, max_iter=10_000, binarize=False, force_refine=False):
        self.model = model
        self.eps = eps
        self.max_iter = max_iter
        self.binarize = binarize
        self.force_refine = force_refine

    def _model_name(self) -> str:
        return check_model(self.model)

    def fit(self, X, y=None, init: Optional[ens.HiddenVariables] = None):
        """Fit to a Graph, a ConstraintSet, an adjacency matrix or stacked constraints."""
        model = self._model_name()
        eps = check_eps(self.eps)
        observed = as_constraints(X, model, binarize=self.binarize)
        hv, report = solve(model, observed, eps=eps, max_iter=int(self.max_iter),
                           init=init, force_refine=self.force_refine)
        self.hidden_ = hv
        self.report_ = report
        self.observed_ = observed
        self.n_nodes_ = observed.n
        return self

    def score(self, X=None, y=None) -> float:
        """Log-likelihood of ``X`` (default: the training constraints)."""
        check_is_fitted(self, "hidden_")
        model = self._model_name()
        observed = self.observed_ if X is None else as_constraints(X, model, self.binarize)
        return ens.log_likelihood(model, self.hidden_, observed)

    def expected_constraints(self):
        check_is_fitted(self, "hidden_")
        return ens.expected_constraints(self._model_name(), self.hidden_)

    def constraint_variances(self) -> dict:
        check_is_fitted(self, "hidden_")
        return ens.constraint_variances(self._model_name(), self.hidden_)

    def expected_matrices(self) -> ens.ExpectedMatrices:
        check_is_fitted(self, "hidden_")
        return ens.expected_matrices(self._model_name(), self.hidden_)

    def connection_probabilities(self) -> np.ndarray:
        """Matrix of ``<a_ij>`` under the fitted ensemble."""
        return self.expected_matrices().adjacency

    def sample(self, count: int, seed: int, **kwargs) -> SampleSet:
        """Draw ``count`` graphs; keyword arguments go to :func:`sample_ensemble`."""
        check_is_fitted(self, "hidden_")
        return sample_ensemble(self._model_name(), self.hidden_, count, seed, **kwargs)


def _fixed(name: str, doc: str):
    def __init__(self, eps=1e-6, max_iter=10_000, binarize=False, force_refine=False):
        self.eps = eps
        self.max_iter = max_iter
        self.binarize = binarize
        self.force_refine = force_refine

    return type(name, (MaxEntModel,), {
        "__init__": __init__,
        "_model_name": lambda self: name,
        "__doc__": doc,
        "__module__": __name__,
    })


UBCM = _fixed("UBCM", "Undirected binary configuration model.")
DBCM = _fixed("DBCM", "Directed binary configuration model.")
RBCM = _fixed("RBCM", "Reciprocal binary configuration model.")
UWCM = _fixed("UWCM", "Undirected weighted configuration model.")
DWCM = _fixed("DWCM", "Directed weighted configuration model.")
RWCM = _fixed("RWCM", "Reciprocal weighted configuration model.")
UECM = _fixed("UECM", "Undirected enhanced configuration model (degrees and strengths).")
