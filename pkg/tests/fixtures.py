"""Deterministic graph fixtures shared by the test modules."""
from __future__ import annotations

import os

import numpy as np

from maxsam.analysis import heterogeneity_report
from maxsam.netcore import MODELS, Graph, compute_constraints, parse_edge_list

DATA = os.path.join(os.path.dirname(__file__), "data")
_CODE = {m: c for c, m in enumerate(MODELS)}


def _draw(model, rng, n):
    spec = MODELS[model]
    f = 1.0 + rng.pareto(1.3, n)
    f = np.minimum(f, 60.0)
    if spec.directed:
        g = f * rng.uniform(0.5, 1.5, n)
        prod = np.outer(f, g)
    else:
        prod = np.outer(f, f)
    off = ~np.eye(n, dtype=bool)
    c = 3.5 * n / prod[off].sum()
    P = np.minimum(0.8, c * prod)
    U = rng.random((n, n))
    A = (U < P) & off
    if spec.directed:
        # make part of the links reciprocated
        back = (rng.random((n, n)) < 0.35) & A
        A = A | back.T
    else:
        A = np.triu(A, 1)
        A = A | A.T
    W = A.astype(np.int64)
    if spec.weighted:
        lam = 0.6 * np.sqrt(prod)
        extra = rng.poisson(np.minimum(lam, 25.0))
        if not spec.directed:
            extra = np.triu(extra, 1)
            extra = extra + extra.T
        W = W * (1 + extra)
    return W


def _fix_uecm(W):
    """Give every non-isolated node at least one link heavier than 1."""
    W = W.copy()
    for i in range(W.shape[0]):
        row = W[i]
        if row.sum() > 0 and row.max() == 1:
            j = int(np.flatnonzero(row)[0])
            W[i, j] = W[j, i] = 2
    return W


def _acceptable(model, W):
    n = W.shape[0]
    spec = MODELS[model]
    g = Graph(W, directed=spec.directed, weighted=spec.weighted)
    h = compute_constraints(g, model).stacked()
    if not spec.weighted or model == "UECM":
        binary_rows = h if not spec.weighted else h[:1]
        if (binary_rows >= n - 1).any():
            return None
    rep = heterogeneity_report(g, symmetrize=True)
    if not (rep.ratio > 1.0 and rep.naive_above_one >= 1):
        return None
    return g


def heterogeneous_graph(model: str, index: int, n: int = 50) -> Graph:
    """Power-law-like graph whose largest degree exceeds the structural cut-off."""
    for attempt in range(500):
        rng = np.random.default_rng([_CODE[model], index, attempt])
        W = _draw(model, rng, n)
        if model == "UECM":
            W = _fix_uecm(W)
        g = _acceptable(model, W)
        if g is not None:
            return g
    raise RuntimeError("could not build a heterogeneous fixture")


def internet_like_graph() -> Graph:
    """Sparse graph with k_max = 1458, second hub 754 and k_tot = 25280."""
    M = 1500
    n = M + 2
    edges = set()
    hub_a, hub_b = 0, 1
    edges.add((0, 1))
    for v in range(2, 1459):
        edges.add((hub_a, v))
    for v in range(2, 755):
        edges.add((hub_b, v))
    others = np.arange(2, n)
    for off in range(1, 7):
        for t in range(M):
            a, b = others[t], others[(t + off) % M]
            edges.add((min(a, b), max(a, b)))
    for t in range(1429):
        a, b = others[t], others[(t + 7) % M]
        edges.add((min(a, b), max(a, b)))
    W = np.zeros((n, n), dtype=np.int64)
    for a, b in edges:
        W[a, b] = W[b, a] = 1
    return Graph(W)


def lesmis_graph() -> Graph:
    """Les Miserables co-occurrence network: 77 nodes, 254 weighted edges."""
    with open(os.path.join(DATA, "lesmis.tsv")) as fh:
        return parse_edge_list(fh.read(), weighted=True)
