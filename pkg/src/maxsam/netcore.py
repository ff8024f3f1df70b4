"""Graph and constraint data model, file ingestion and reciprocity decomposition.

Node ids are dense 0-based integers. Weights are non-negative integers; the
diagonal is always zero.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .exceptions import ConstraintError, GraphFormatError, ModelMismatchError


class ModelSpec(NamedTuple):
    blocks: tuple  # constraint names, in file-column order
    params: tuple  # hidden-variable name paired with each block
    directed: bool
    weighted: bool


MODELS: dict[str, ModelSpec] = {
    "UBCM": ModelSpec(("k",), ("x",), False, False),
    "DBCM": ModelSpec(("k_out", "k_in"), ("x", "y"), True, False),
    "RBCM": ModelSpec(("k_right", "k_left", "k_recip"), ("x", "y", "z"), True, False),
    "UWCM": ModelSpec(("s",), ("x",), False, True),
    "DWCM": ModelSpec(("s_out", "s_in"), ("x", "y"), True, True),
    "RWCM": ModelSpec(("s_right", "s_left", "s_recip"), ("x", "y", "z"), True, True),
    "UECM": ModelSpec(("k", "s"), ("x", "y"), False, True),
}


def model_spec(model: str) -> ModelSpec:
    try:
        return MODELS[model]
    except KeyError:
        raise ModelMismatchError(
            f"unknown model {model!r}; valid models are {', '.join(MODELS)}"
        ) from None


@dataclass(frozen=True, eq=False)
class Graph:
    """An observed or sampled network.

    ``entries`` holds the n x n integer weight matrix (``0/1`` for binary
    graphs). The array is made read-only on construction.
    """

    entries: np.ndarray
    directed: bool = False
    weighted: bool = False
    labels: Optional[tuple] = None

    def __post_init__(self):
        w = np.array(self.entries, dtype=np.int64, copy=True)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise GraphFormatError(f"matrix is not square: shape {w.shape}")
        if (w < 0).any():
            raise GraphFormatError("negative entry")
        if np.diagonal(w).any():
            i = int(np.flatnonzero(np.diagonal(w))[0])
            raise GraphFormatError(f"self-loop at node {i}")
        if not self.directed and not np.array_equal(w, w.T):
            i, j = np.argwhere(w != w.T)[0]
            raise GraphFormatError(f"asymmetric entry ({i},{j}) in undirected graph")
        if not self.weighted and (w > 1).any():
            raise GraphFormatError("binary graph with entry greater than 1")
        if self.labels is not None and len(self.labels) != w.shape[0]:
            raise GraphFormatError("label count does not match node count")
        w.setflags(write=False)
        object.__setattr__(self, "entries", w)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def adjacency(self) -> np.ndarray:
        return (self.entries > 0).astype(np.int64)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.directed == other.directed
            and self.weighted == other.weighted
            and np.array_equal(self.entries, other.entries)
        )

    __hash__ = None

    def edges(self):
        """Yield ``(src, dst, weight)``; undirected edges are listed once with src < dst."""
        w = self.entries
        if self.directed:
            src, dst = np.nonzero(w)
        else:
            src, dst = np.nonzero(np.triu(w, 1))
        for i, j in zip(src.tolist(), dst.tolist()):
            yield i, j, int(w[i, j])

    def to_edge_list(self) -> str:
        return "".join(f"{i}\t{j}\t{wt}\n" for i, j, wt in self.edges())


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Model-tagged constraint vectors.

    Observed sets hold integers and are validated against the parity and
    balance rules of their model; expected sets hold reals and are not.
    ``strict=False`` keeps only the sign and UECM consistency checks, which
    lets non-graphical targets be posed to the microcanonical tools.
    """

    model: str
    values: Mapping[str, np.ndarray]
    observed: bool = True
    strict: bool = True

    def __post_init__(self):
        spec = model_spec(self.model)
        if set(self.values) != set(spec.blocks):
            raise ConstraintError(
                f"{self.model} expects vectors {spec.blocks}, got {tuple(self.values)}"
            )
        vals = {}
        lengths = set()
        for name in spec.blocks:
            raw = np.asarray(self.values[name])
            if self.observed:
                if raw.dtype.kind not in "iub" and not np.all(np.mod(raw, 1) == 0):
                    raise ConstraintError(f"non-integer entry in observed constraint {name}")
                v = np.array(raw, dtype=np.int64)
            else:
                v = np.array(raw, dtype=float)
            if v.ndim != 1:
                raise ConstraintError(f"constraint {name} is not a vector")
            v.setflags(write=False)
            vals[name] = v
            lengths.add(v.shape[0])
        if len(lengths) > 1:
            raise ConstraintError("constraint vectors have different lengths")
        object.__setattr__(self, "values", vals)
        if self.observed:
            _check_observed(self.model, vals, self.strict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    @property
    def n(self) -> int:
        return next(iter(self.values.values())).shape[0]

    @property
    def blocks(self) -> tuple:
        return MODELS[self.model].blocks

    def stacked(self) -> np.ndarray:
        """Constraint vectors as a ``(blocks, n)`` array."""
        return np.vstack([self.values[b] for b in self.blocks])

    def __eq__(self, other):
        if not isinstance(other, ConstraintSet):
            return NotImplemented
        return self.model == other.model and all(
            np.array_equal(self.values[b], other.values[b]) for b in self.blocks
        )

    __hash__ = None


def _check_observed(model, vals, strict=True):
    for name, v in vals.items():
        if (v < 0).any():
            raise ConstraintError(f"negative entry in {name} at node {int(np.argmax(v < 0))}")
    if not strict:
        _check_uecm(model, vals)
        return
    if model == "UBCM" and vals["k"].sum() % 2:
        raise ConstraintError("odd degree sum")
    if model == "DBCM" and vals["k_out"].sum() != vals["k_in"].sum():
        raise ConstraintError("out-degree and in-degree sums differ")
    if model == "DWCM" and vals["s_out"].sum() != vals["s_in"].sum():
        raise ConstraintError("out-strength and in-strength sums differ")
    if model == "RBCM":
        if vals["k_right"].sum() != vals["k_left"].sum():
            raise ConstraintError("non-reciprocated out and in degree sums differ")
        if vals["k_recip"].sum() % 2:
            raise ConstraintError("odd reciprocated degree sum")
    if model == "RWCM":
        if vals["s_right"].sum() != vals["s_left"].sum():
            raise ConstraintError("non-reciprocated out and in strength sums differ")
        if vals["s_recip"].sum() % 2:
            raise ConstraintError("odd reciprocated strength sum")
    if model == "UECM" and vals["k"].sum() % 2:
        raise ConstraintError("odd degree sum")
    _check_uecm(model, vals)


def _check_uecm(model, vals):
    if model == "UECM":
        k, s = vals["k"], vals["s"]
        bad = np.flatnonzero((s == 0) != (k == 0))
        if bad.size:
            i = int(bad[0])
            raise ConstraintError(f"s=0 with k>0 inconsistency at node {i}")
        bad = np.flatnonzero(s < k)
        if bad.size:
            raise ConstraintError(f"strength below degree at node {int(bad[0])}")


class PairDecomposition(NamedTuple):
    recip: int
    right: int
    left: int


_SPLIT = re.compile(r"[,\s]+")


def _data_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield lineno, line


def _parse_int(tok: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        val = float(tok)
    except ValueError:
        raise GraphFormatError(f"line {lineno}: non-numeric entry {tok!r}") from None
    if not np.isfinite(val) or not val.is_integer():
        raise GraphFormatError(f"line {lineno}: non-integer entry {tok!r}")
    return int(val)


def parse_matrix(text: str, directed: bool = False, weighted: bool = False) -> Graph:
    """Parse a comma- or whitespace-separated square grid."""
    rows = [
        [_parse_int(t, lineno) for t in _SPLIT.split(line) if t]
        for lineno, line in _data_lines(text)
    ]
    n = len(rows)
    if n == 0 or any(len(r) != n for r in rows):
        raise GraphFormatError("matrix is not square")
    return Graph(np.array(rows, dtype=np.int64), directed=directed, weighted=weighted)


def parse_edge_list(
    text: str,
    n: Optional[int] = None,
    directed: bool = False,
    weighted: bool = False,
) -> Graph:
    """Parse ``src dst [weight]`` rows into a Graph.

    Integer node ids are used as-is when every id parses as an integer;
    otherwise all ids are treated as labels and numbered by first appearance,
    and the labels are kept on the returned graph.
    """
    records = []
    for lineno, line in _data_lines(text):
        toks = [t for t in _SPLIT.split(line) if t]
        if len(toks) not in (2, 3):
            raise GraphFormatError(f"line {lineno}: expected 2 or 3 columns, got {len(toks)}")
        wt = _parse_int(toks[2], lineno) if len(toks) == 3 else 1
        if wt <= 0:
            raise GraphFormatError(f"line {lineno}: weight must be positive")
        if not weighted and wt != 1:
            raise GraphFormatError(f"line {lineno}: weight {wt} in binary graph")
        records.append((lineno, toks[0], toks[1], wt))

    labels = None
    try:
        ids = [(ln, int(a), int(b), wt) for ln, a, b, wt in records]
    except ValueError:
        order: dict[str, int] = {}
        for _, a, b, _ in records:
            order.setdefault(a, len(order))
            order.setdefault(b, len(order))
        ids = [(ln, order[a], order[b], wt) for ln, a, b, wt in records]
        labels = tuple(order)
        if n is None:
            n = len(order)
    if n is None:
        n = 1 + max((max(a, b) for _, a, b, _ in ids), default=-1)
    if labels is not None and len(labels) < n:
        labels = labels + tuple(str(i) for i in range(len(labels), n))

    w = np.zeros((n, n), dtype=np.int64)
    seen: dict[tuple, int] = {}
    for lineno, a, b, wt in ids:
        if not (0 <= a < n and 0 <= b < n):
            raise GraphFormatError(f"line {lineno}: node id out of range [0, {n})")
        if a == b:
            raise GraphFormatError(f"line {lineno}: self-loop at node {a}")
        if (a, b) in seen:
            raise GraphFormatError(f"line {lineno}: duplicate edge ({a},{b})")
        seen[(a, b)] = wt
        if not directed and (b, a) in seen:
            if seen[(b, a)] != wt:
                raise GraphFormatError(
                    f"line {lineno}: edge ({a},{b}) listed in both orientations with unequal weights"
                )
            continue
        w[a, b] = wt
        if not directed:
            w[b, a] = wt
    return Graph(w, directed=directed, weighted=weighted, labels=labels)


def parse_constraint_file(text: str, model: str) -> ConstraintSet:
    """Parse whitespace-separated constraint columns in model block order."""
    spec = model_spec(model)
    cols = len(spec.blocks)
    rows = []
    for lineno, line in _data_lines(text):
        toks = [t for t in _SPLIT.split(line) if t]
        if len(toks) != cols:
            raise ConstraintError(
                f"line {lineno}: {model} needs {cols} column(s), got {len(toks)}"
            )
        try:
            rows.append([_parse_int(t, lineno) for t in toks])
        except GraphFormatError as exc:
            raise ConstraintError(str(exc)) from None
    if not rows:
        raise ConstraintError("empty constraint file")
    arr = np.array(rows, dtype=np.int64)
    return ConstraintSet(model, {b: arr[:, c] for c, b in enumerate(spec.blocks)})


def check_graph_model(g: Graph, model: str, binarize: bool = False) -> np.ndarray:
    """Return the weight matrix the model sees, or raise if the pairing is invalid."""
    spec = model_spec(model)
    if spec.directed != g.directed:
        kind = "directed" if spec.directed else "undirected"
        raise ModelMismatchError(f"{model} requires a {kind} graph")
    w = g.entries
    if not spec.weighted and (w > 1).any():
        if not binarize:
            raise ModelMismatchError(
                f"{model} is a binary model but the graph has weights > 1; pass binarize=True"
            )
        w = (w > 0).astype(np.int64)
    return w


def compute_constraints(g: Graph, model: str, binarize: bool = False) -> ConstraintSet:
    """Observed constraint vectors of ``g`` under ``model``."""
    w = check_graph_model(g, model, binarize)
    values = _constraints_from_matrix(w, model)
    return ConstraintSet(model, values)


def _constraints_from_matrix(w: np.ndarray, model: str) -> dict:
    if model in ("UBCM", "UWCM"):
        return {MODELS[model].blocks[0]: w.sum(axis=1)}
    if model in ("DBCM", "DWCM"):
        out_name, in_name = MODELS[model].blocks
        return {out_name: w.sum(axis=1), in_name: w.sum(axis=0)}
    if model in ("RBCM", "RWCM"):
        recip = np.minimum(w, w.T)
        right = w - recip
        names = MODELS[model].blocks
        return {
            names[0]: right.sum(axis=1),
            names[1]: right.sum(axis=0),
            names[2]: recip.sum(axis=1),
        }
    if model == "UECM":
        return {"k": (w > 0).sum(axis=1), "s": w.sum(axis=1)}
    raise ModelMismatchError(f"unknown model {model!r}")


def reciprocal_decompose(g: Graph, i: int, j: int) -> PairDecomposition:
    """Split the content of pair (i, j) into reciprocated and one-way parts."""
    if i == j:
        raise GraphFormatError("reciprocal decomposition needs two distinct nodes")
    wij, wji = int(g.entries[i, j]), int(g.entries[j, i])
    recip = min(wij, wji)
    return PairDecomposition(recip=recip, right=wij - recip, left=wji - recip)


def constraints_from_arrays(model: str, arrays: Sequence, observed: bool = True) -> ConstraintSet:
    spec = model_spec(model)
    if len(arrays) != len(spec.blocks):
        raise ConstraintError(f"{model} takes {len(spec.blocks)} vectors")
    return ConstraintSet(model, dict(zip(spec.blocks, arrays)), observed=observed)
