"""Input coercion helpers shared by the estimator and the command line."""
from __future__ import annotations

from typing import Union

import numpy as np

from .exceptions import ConstraintError, ModelMismatchError
from .netcore import MODELS, ConstraintSet, Graph, compute_constraints, constraints_from_arrays, model_spec


def check_model(model) -> str:
    """Return the canonical model name or raise listing the valid ones."""
    if not isinstance(model, str):
        raise ModelMismatchError(f"model must be a string, got {type(model).__name__}")
    name = model.upper()
    model_spec(name)
    return name


def check_eps(eps) -> float:
    eps = float(eps)
    if not np.isfinite(eps) or eps <= 0:
        raise ValueError("eps must be a positive number")
    return eps


def as_graph(X, model: str) -> Graph:
    """Square array -> Graph of the kind ``model`` expects."""
    spec = model_spec(model)
    arr = np.asarray(X)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ConstraintError("adjacency input must be a square matrix")
    if not np.all(np.mod(arr, 1) == 0):
        raise ConstraintError("matrix entries must be integers")
    weighted = spec.weighted or bool((arr > 1).any())
    return Graph(arr.astype(np.int64), directed=spec.directed, weighted=weighted)


def as_constraints(X: Union[Graph, ConstraintSet, np.ndarray], model: str, binarize: bool = False) -> ConstraintSet:
    """Coerce a graph, constraint set or array to observed constraints of ``model``.

    Arrays of shape ``(n, n)`` are read as adjacency matrices; arrays of shape
    ``(B, n)`` (or ``(n,)`` for one-block models) as stacked constraint
    vectors in the model's block order.
    """
    model = check_model(model)
    if isinstance(X, ConstraintSet):
        if X.model != model:
            raise ModelMismatchError(f"constraints are for {X.model}, not {model}")
        return X
    if isinstance(X, Graph):
        return compute_constraints(X, model, binarize=binarize)
    arr = np.asarray(X)
    B = len(MODELS[model].blocks)
    if arr.ndim == 1 and B == 1:
        return constraints_from_arrays(model, [arr])
    if arr.ndim == 2 and arr.shape[0] == B and arr.shape[0] != arr.shape[1]:
        return constraints_from_arrays(model, list(arr))
    if arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
        return compute_constraints(as_graph(arr, model), model, binarize=binarize)
    raise ConstraintError(
        f"cannot read an array of shape {arr.shape} as {model} input"
    )
