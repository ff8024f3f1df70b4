"""Maximum-entropy network null models.

Seven canonical ensembles (UBCM, DBCM, RBCM, UWCM, DWCM, RWCM, UECM) are
fitted by likelihood maximization, sampled exactly, analyzed, and distilled
into microcanonical samples by exact-constraint filtering.
"""
from .ensembles import (
    HiddenVariables,
    constraint_variances,
    expected_constraints,
    expected_matrices,
    likelihood_gradient,
    log_likelihood,
    pair_distribution,
)
from .estimator import DBCM, DWCM, RBCM, RWCM, UBCM, UECM, UWCM, MaxEntModel
from .exceptions import ConstraintError, DomainError, GraphFormatError, MaxSamError, ModelMismatchError
from .netcore import (
    MODELS,
    ConstraintSet,
    Graph,
    compute_constraints,
    parse_constraint_file,
    parse_edge_list,
    parse_matrix,
    reciprocal_decompose,
)
from .sampler import SampleSet, draw_geometric, sample_ensemble, sample_graph
from .solver import SolveReport, residual_report, solve

__version__ = "0.1.0"

__all__ = [
    "MODELS", "Graph", "ConstraintSet", "HiddenVariables", "SampleSet", "SolveReport",
    "parse_matrix", "parse_edge_list", "parse_constraint_file", "compute_constraints",
    "reciprocal_decompose", "pair_distribution", "log_likelihood", "likelihood_gradient",
    "expected_constraints", "expected_matrices", "constraint_variances", "solve",
    "residual_report", "draw_geometric", "sample_graph", "sample_ensemble", "MaxEntModel",
    "UBCM", "DBCM", "RBCM", "UWCM", "DWCM", "RWCM", "UECM",
    "MaxSamError", "GraphFormatError", "ConstraintError", "ModelMismatchError", "DomainError",
]
