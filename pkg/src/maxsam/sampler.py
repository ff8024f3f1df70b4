"""Exact sampling from the canonical ensembles.

Every sample ``s`` gets its own Philox stream keyed by ``(seed, s)``. Within a
sample the uniforms are laid out as ``(draws per pair, pairs)`` with pairs in a
fixed order: ``i < j`` row-major for undirected and reciprocal models, all
ordered ``i != j`` row-major for DBCM and DWCM. Any sample can therefore be
regenerated on its own, and the sample set does not depend on the number of
worker threads.
"""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import ensembles as ens
from .exceptions import DomainError, ModelMismatchError
from .netcore import MODELS, Graph, _constraints_from_matrix, model_spec

# uniforms consumed per pair
_DRAWS = {"UBCM": 1, "DBCM": 1, "RBCM": 1, "UWCM": 1, "DWCM": 1, "RWCM": 3, "UECM": 2}


def sample_stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for sample ``index`` of a run seeded with ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def _geometric_from_uniform(q, u):
    """Inverse transform: ``P(W >= w) = q**w`` with ``u`` uniform on (0, 1]."""
    q = np.asarray(q, dtype=float)
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.floor(np.log(u) / np.log(q))
    w = np.where((q > 0) & (u < 1.0), w, 0.0)
    return w.astype(np.int64)


def draw_geometric(q, rng: np.random.Generator):
    """Draw ``w`` with probability ``q**w * (1 - q)``.

    ``q`` may be a scalar or an array; one uniform is consumed per entry.
    """
    qa = np.asarray(q, dtype=float)
    if np.any(~np.isfinite(qa)) or np.any(qa < 0) or np.any(qa >= 1):
        raise DomainError("geometric parameter must lie in [0, 1)")
    u = 1.0 - rng.random(qa.shape)
    w = _geometric_from_uniform(qa, u)
    return int(w) if w.ndim == 0 else w


def pair_order(model: str, n: int):
    """Row and column indices of the pairs in drawing order."""
    if model in ("DBCM", "DWCM"):
        I, J = np.nonzero(~np.eye(n, dtype=bool))
    else:
        I, J = np.triu_indices(n, k=1)
    return I, J


class _PairLaw:
    """Per-pair law parameters for one model, precomputed once per run."""

    def __init__(self, model: str, hv: ens.HiddenVariables):
        if hv.model != model:
            raise ModelMismatchError(f"hidden variables are for {hv.model}, not {model}")
        if not ens.domain_ok(model, hv.vectors()):
            raise DomainError(f"{model} hidden variables violate the parameter-product domain")
        self.model = model
        self.n = hv.n
        self.spec = model_spec(model)
        self.I, self.J = pair_order(model, hv.n)
        I, J = self.I, self.J
        x, y, z = hv.x, hv.y, hv.z
        with np.errstate(over="ignore", invalid="ignore"):
            if model == "UBCM":
                self.p = _prob(x[I] * x[J])
            elif model == "DBCM":
                self.p = _prob(x[I] * y[J])
            elif model == "RBCM":
                r, l, c = x[I] * y[J], x[J] * y[I], z[I] * z[J]
                self.cum = _categorical(r, l, c)
            elif model == "UWCM":
                self.q = x[I] * x[J]
            elif model == "DWCM":
                self.q = x[I] * y[J]
            elif model == "RWCM":
                a, b, c = x[I] * y[J], x[J] * y[I], z[I] * z[J]
                ab = 1.0 - a * b
                self.a, self.b, self.c = a, b, c
                self.p_none = (1 - a) * (1 - b) / ab
                self.p_right = a * (1 - b) / ab
            else:
                q = y[I] * y[J]
                t = x[I] * x[J] * q
                p = t / (1.0 - q + t)
                self.p = np.where(np.isfinite(t), p, 1.0)
                self.q = q

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        """Entry matrix of one sampled graph."""
        n, I, J = self.n, self.I, self.J
        U = rng.random((_DRAWS[self.model], I.size))
        W = np.zeros((n, n), dtype=np.int64)
        m = self.model
        if m in ("UBCM", "DBCM"):
            W[I, J] = U[0] < self.p
        elif m == "RBCM":
            k = (U[0][None, :] >= self.cum).sum(axis=0)  # 0 right, 1 left, 2 recip, 3 none
            W[I, J] = (k == 0) | (k == 2)
            W[J, I] = (k == 1) | (k == 2)
            return W
        elif m in ("UWCM", "DWCM"):
            W[I, J] = _geometric_from_uniform(self.q, 1.0 - U[0])
        elif m == "RWCM":
            recip = _geometric_from_uniform(self.c, 1.0 - U[0])
            right = U[1] >= self.p_none
            left = U[1] >= self.p_none + self.p_right
            right &= ~left
            extra_r = 1 + _geometric_from_uniform(self.a, 1.0 - U[2])
            extra_l = 1 + _geometric_from_uniform(self.b, 1.0 - U[2])
            W[I, J] = recip + np.where(right, extra_r, 0)
            W[J, I] = recip + np.where(left, extra_l, 0)
            return W
        else:
            link = U[0] < self.p
            W[I, J] = np.where(link, 1 + _geometric_from_uniform(self.q, 1.0 - U[1]), 0)
        if not self.spec.directed:
            W[J, I] = W[I, J]
        return W


def _prob(t):
    p = t / (1.0 + t)
    return np.where(np.isfinite(t), p, 1.0)


def _categorical(r, l, c):
    d = 1.0 + r + l + c
    probs = np.stack([r / d, l / d, c / d])
    big = ~np.isfinite(d)
    if big.any():
        # a saturated parameter: the largest term wins outright
        terms = np.stack([r, l, c])[:, big]
        top = np.argmax(terms, axis=0)
        probs[:, big] = 0.0
        probs[top, np.flatnonzero(big)] = 1.0
    return np.cumsum(probs, axis=0)


def sample_graph(model: str, hv: ens.HiddenVariables, rng: np.random.Generator) -> Graph:
    """Draw one graph from the canonical ensemble of ``model`` at ``hv``."""
    law = _PairLaw(model, hv)
    spec = law.spec
    return Graph(law.draw(rng), directed=spec.directed, weighted=spec.weighted)


@dataclass
class SampleSet:
    """Accumulated sampling results.

    Attributes
    ----------
    sum_binary, sum_weight, sum_weight_sq : ndarray of int64
        Entrywise sums over samples of ``a_ij``, ``w_ij`` and ``w_ij**2``.
    constraints : ndarray, shape (count, B, n)
        Constraint vectors of every sample, in the model's block order.
    node_stats : dict
        Per-sample node statistics, name -> array of shape (count, n).
    graphs : list of Graph
        Retained graphs, empty unless requested.
    """

    model: str
    n: int
    count: int
    seed: int
    sum_binary: np.ndarray
    sum_weight: Optional[np.ndarray]
    sum_weight_sq: Optional[np.ndarray]
    constraints: np.ndarray
    node_stats: dict = field(default_factory=dict)
    graphs: list = field(default_factory=list)

    @property
    def mean_binary(self) -> np.ndarray:
        return self.sum_binary / self.count

    @property
    def mean_weight(self) -> Optional[np.ndarray]:
        return None if self.sum_weight is None else self.sum_weight / self.count

    @property
    def var_weight(self) -> Optional[np.ndarray]:
        if self.sum_weight is None:
            return None
        mean = self.mean_weight
        return self.sum_weight_sq / self.count - mean ** 2

    def constraint_block(self, name: str) -> np.ndarray:
        return self.constraints[:, MODELS[self.model].blocks.index(name)]


def _run_chunk(law, model, seed, indices, retain, stat_fns):
    spec = law.spec
    n = law.n
    sa = np.zeros((n, n), dtype=np.int64)
    sw = np.zeros((n, n), dtype=np.int64) if spec.weighted else None
    sw2 = np.zeros((n, n), dtype=np.int64) if spec.weighted else None
    cons = np.empty((len(indices), len(spec.blocks), n), dtype=np.int64)
    stats = {name: np.empty((len(indices), n)) for name in stat_fns}
    graphs = []
    for k, s in enumerate(indices):
        W = law.draw(sample_stream(seed, s))
        sa += W > 0
        if sw is not None:
            sw += W
            sw2 += W * W
        vals = _constraints_from_matrix(W, model)
        cons[k] = np.vstack([vals[b] for b in spec.blocks])
        if stat_fns or retain:
            g = Graph(W, directed=spec.directed, weighted=spec.weighted)
            for name, fn in stat_fns.items():
                stats[name][k] = fn(g)
            if retain:
                graphs.append(g)
    return sa, sw, sw2, cons, stats, graphs


def sample_ensemble(
    model: str,
    hv: ens.HiddenVariables,
    count: int,
    seed: int,
    retain: bool = False,
    threads: int = 1,
    node_stats: Optional[dict] = None,
    chunk: int = 64,
) -> SampleSet:
    """Draw ``count`` independent graphs and accumulate entrywise moments.

    Parameters
    ----------
    node_stats : dict, optional
        Name -> function mapping a sampled :class:`Graph` to a length-``n``
        vector, evaluated on every sample.
    threads : int
        Worker threads. Results do not depend on this value.
    """
    if int(count) < 1:
        raise ValueError("count must be at least 1")
    count, seed = int(count), int(seed)
    law = _PairLaw(model, hv)
    stat_fns = dict(node_stats or {})
    blocks = [range(s, min(s + chunk, count)) for s in range(0, count, chunk)]
    work = lambda idx: _run_chunk(law, model, seed, idx, retain, stat_fns)  # noqa: E731
    if threads and threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]

    n, spec = law.n, law.spec
    sa = np.zeros((n, n), dtype=np.int64)
    sw = np.zeros((n, n), dtype=np.int64) if spec.weighted else None
    sw2 = np.zeros((n, n), dtype=np.int64) if spec.weighted else None
    for part in parts:
        sa += part[0]
        if sw is not None:
            sw += part[1]
            sw2 += part[2]
    cons = np.concatenate([p[3] for p in parts])
    stats = {name: np.concatenate([p[4][name] for p in parts]) for name in stat_fns}
    graphs = [g for p in parts for g in p[5]]
    return SampleSet(model, n, count, seed, sa, sw, sw2, cons, stats, graphs)


def sample_file_name(index: int, count: int) -> str:
    width = max(6, len(str(max(count - 1, 0))))
    return f"{index:0{width}d}.tsv"


def edge_list_text(g: Graph, labels: Optional[Sequence[str]] = None) -> str:
    """Edge list in the input format: one ``src<TAB>dst<TAB>weight`` line per edge."""
    lines = []
    for i, j, w in g.edges():
        a = labels[i] if labels is not None else str(i)
        b = labels[j] if labels is not None else str(j)
        lines.append(f"{a}\t{b}\t{w}")
    return "\n".join(lines) + ("\n" if lines else "")


def write_matrix_csv(path: str, mat: np.ndarray) -> None:
    with open(path, "w") as fh:
        for row in mat:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_samples(
    ss: SampleSet,
    out_dir: str,
    params_hash: Optional[str] = None,
    subdir: str = "samples",
    graphs: Optional[list] = None,
    indices: Optional[Sequence[int]] = None,
    extra: Optional[dict] = None,
) -> None:
    """Write retained graphs, mean matrices and ``manifest.json`` under ``out_dir``."""
    graphs = ss.graphs if graphs is None else graphs
    indices = list(range(len(graphs))) if indices is None else list(indices)
    os.makedirs(out_dir, exist_ok=True)
    if graphs:
        gdir = os.path.join(out_dir, subdir)
        os.makedirs(gdir, exist_ok=True)
        for idx, g in zip(indices, graphs):
            with open(os.path.join(gdir, sample_file_name(idx, ss.count)), "w") as fh:
                fh.write(edge_list_text(g))
    write_matrix_csv(os.path.join(out_dir, "mean_adjacency.csv"), ss.mean_binary)
    if ss.sum_weight is not None:
        write_matrix_csv(os.path.join(out_dir, "mean_weight.csv"), ss.mean_weight)
    manifest = {
        "model": ss.model,
        "seed": ss.seed,
        "count": ss.count,
        "n": ss.n,
        "params_sha256": params_hash,
        "retained": len(graphs),
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
