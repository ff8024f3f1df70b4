"""Microcanonical distillation by exact-constraint filtering.

All graphs with the same constraint values have the same canonical
probability, so the canonical samples that match the target exactly form a
uniform sample of the microcanonical ensemble. Fractions are kept in log10
because the probabilities involved are astronomically small.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import ensembles as ens
from .exceptions import ModelMismatchError
from .netcore import MODELS, ConstraintSet, Graph, _constraints_from_matrix, check_graph_model, model_spec
from .sampler import _PairLaw, pair_order, sample_stream

LOG10_FLOOR = -300.0


def check_order(model: str, observed: ConstraintSet, hv: Optional[ens.HiddenVariables] = None):
    """Flat indices of ``observed.stacked()`` in checking order.

    With ``hv`` the components are sorted by decreasing canonical standard
    deviation, so the constraints most likely to differ are compared first;
    without it the index order is used.
    """
    size = len(MODELS[model].blocks) * observed.n
    if hv is None:
        return np.arange(size)
    var = ens.constraint_variances(model, hv)
    sigma = np.concatenate([var[b] for b in MODELS[model].blocks])
    return np.argsort(-sigma, kind="stable")


def _matches(W, model, target, order) -> bool:
    vals = _constraints_from_matrix(W, model)
    got = np.concatenate([vals[b] for b in MODELS[model].blocks])
    for idx in order:
        if got[idx] != target[idx]:
            return False
    return True


def matches_exactly(
    g: Graph,
    observed: ConstraintSet,
    hv: Optional[ens.HiddenVariables] = None,
    order: Optional[np.ndarray] = None,
) -> bool:
    """True iff the constraints of ``g`` equal ``observed`` exactly.

    Components are compared in the order given by :func:`check_order`
    (fluctuation-guided when ``hv`` is supplied) and the check stops at the
    first mismatch.
    """
    model = observed.model
    W = check_graph_model(g, model)
    if g.n != observed.n:
        raise ModelMismatchError("graph and constraints have different sizes")
    if order is None:
        order = check_order(model, observed, hv)
    return _matches(W, model, observed.stacked().ravel(), order)


@dataclass
class DistillationEstimate:
    """Log10 bookkeeping of a distillation run.

    ``f_c`` is ``None`` for weighted models, whose canonical ensemble is
    infinite. ``accepted`` and ``acceptance_rate`` are ``None`` when no
    filtering was run.
    """

    model: str
    n: int
    log10_likelihood: float
    R_c: int
    log10_f_m: float
    log10_f_c: Optional[float]
    accepted: Optional[int] = None
    acceptance_rate: Optional[float] = None

    @property
    def fm_exceeds_fc(self) -> Optional[bool]:
        if self.log10_f_c is None:
            return None
        return self.log10_f_m >= self.log10_f_c

    def to_dict(self) -> dict:
        out = {
            "model": self.model,
            "n": self.n,
            "R_c": self.R_c,
            "R_m": self.accepted,
            "acceptance_rate": self.acceptance_rate,
            "log10_likelihood": self.log10_likelihood,
            "log10_f_m": self.log10_f_m,
            "log10_f_c": self.log10_f_c,
            "fm_exceeds_fc": self.fm_exceeds_fc,
        }
        for key in ("log10_likelihood", "log10_f_m", "log10_f_c"):
            v = out[key]
            out[key[6:]] = 10.0 ** v if v is not None and v > LOG10_FLOOR else None
        return out


def distillation_estimates(log_likelihood: float, R_c: int, n: int, model: str) -> DistillationEstimate:
    """f_m = P(G*) R_c and, for binary models, f_c = R_c / N_c, in log10.

    ``log_likelihood`` is the natural log of P(G*). N_c is
    ``2**(n(n-1)/2)`` for UBCM and ``2**(n(n-1))`` for the directed binary
    models.
    """
    spec = model_spec(model)
    if not math.isfinite(log_likelihood):
        raise ValueError("log-likelihood must be finite")
    if int(R_c) < 1:
        raise ValueError("R_c must be positive")
    l10 = log_likelihood / math.log(10.0)
    lr = math.log10(R_c)
    f_c = None
    if not spec.weighted:
        pairs = n * (n - 1) if spec.directed else n * (n - 1) // 2
        f_c = lr - pairs * math.log10(2.0)
    return DistillationEstimate(model, n, l10, int(R_c), l10 + lr, f_c)


def filter_stream(
    model: str,
    hv: ens.HiddenVariables,
    observed: ConstraintSet,
    R_c: int,
    seed: int,
    threads: int = 1,
    guided: bool = True,
    chunk: int = 1024,
) -> Tuple[List[Tuple[int, Graph]], DistillationEstimate]:
    """Draw ``R_c`` canonical samples and keep the exact matches.

    Returns the accepted ``(sample index, graph)`` pairs in index order and
    the estimate. Sample ``s`` uses the same stream as sample ``s`` of
    :func:`maxsam.sampler.sample_ensemble` with the same seed.
    """
    if int(R_c) < 1:
        raise ValueError("R_c must be positive")
    if observed.model != model:
        raise ModelMismatchError(f"constraints are for {observed.model}, not {model}")
    R_c, seed = int(R_c), int(seed)
    law = _PairLaw(model, hv)
    if hv.n != observed.n:
        raise ModelMismatchError("constraint and parameter lengths differ")
    order = check_order(model, observed, hv if guided else None)
    target = observed.stacked().ravel()

    def work(indices):
        hits = []
        for s in indices:
            W = law.draw(sample_stream(seed, s))
            if _matches(W, model, target, order):
                hits.append((s, W))
        return hits

    blocks = [range(s, min(s + chunk, R_c)) for s in range(0, R_c, chunk)]
    if threads and threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    spec = law.spec
    accepted = [(s, Graph(W, directed=spec.directed, weighted=spec.weighted))
                for part in parts for s, W in part]
    with np.errstate(divide="ignore"):
        ll = ens.log_likelihood(model, hv, observed)
    est = distillation_estimates(ll, R_c, hv.n, model) if math.isfinite(ll) else DistillationEstimate(
        model, hv.n, -math.inf, R_c, -math.inf, None
    )
    est.accepted = len(accepted)
    est.acceptance_rate = len(accepted) / R_c
    return accepted, est


# ---------------------------------------------------------------------------
# exhaustive enumeration for tiny systems

MAX_BINARY_N = 6
MAX_WEIGHTED_N = 4


def _pair_outcomes(model, i, j, cap):
    """List of ``(entries, contribution)`` for pair (i, j).

    ``entries`` is ``(w_ij, w_ji)``; ``contribution`` maps ``(block, node)``
    to the amount added to that constraint.
    """
    out = []
    if model == "UBCM":
        for a in (0, 1):
            out.append(((a, a), {(0, i): a, (0, j): a}))
    elif model == "DBCM":
        for a in (0, 1):
            out.append(((a, None), {(0, i): a, (1, j): a}))
    elif model == "RBCM":
        for wij, wji in ((0, 0), (1, 0), (0, 1), (1, 1)):
            r = min(wij, wji)
            out.append(((wij, wji), {(0, i): wij - r, (1, j): wij - r,
                                     (0, j): wji - r, (1, i): wji - r,
                                     (2, i): r, (2, j): r}))
    elif model == "UWCM":
        for w in range(cap + 1):
            out.append(((w, w), {(0, i): w, (0, j): w}))
    elif model == "DWCM":
        for w in range(cap + 1):
            out.append(((w, None), {(0, i): w, (1, j): w}))
    elif model == "RWCM":
        for wij in range(cap + 1):
            for wji in range(cap + 1):
                r = min(wij, wji)
                out.append(((wij, wji), {(0, i): wij - r, (1, j): wij - r,
                                         (0, j): wji - r, (1, i): wji - r,
                                         (2, i): r, (2, j): r}))
    else:
        for w in range(cap + 1):
            out.append(((w, w), {(0, i): int(w > 0), (0, j): int(w > 0),
                                 (1, i): w, (1, j): w}))
    return [(e, {k: v for k, v in c.items() if v}) for e, c in out]


@dataclass
class EnumerationResult:
    """Exact microcanonical count and canonical mass of a tiny target.

    ``Q = N_m * P(G*)`` is the canonical probability of matching the target.
    For weighted models entries above ``weight_cap`` are not enumerated and
    ``tail_bound`` bounds the canonical mass of the skipped configurations
    (0 when the cap cannot bind).
    """

    N_m: int
    Q: float
    graphs: list = field(default_factory=list)
    tail_bound: float = 0.0
    log_likelihood: Optional[float] = None


def enumerate_small(
    model: str,
    observed: ConstraintSet,
    weight_cap: int = 6,
    hv: Optional[ens.HiddenVariables] = None,
) -> EnumerationResult:
    """List every graph matching ``observed`` exactly.

    Binary models are limited to ``n <= 6`` and weighted ones to ``n <= 4``
    with entries up to ``weight_cap``. ``hv`` defaults to the likelihood
    maximizer of ``observed``.
    """
    spec = model_spec(model)
    if observed.model != model:
        raise ModelMismatchError(f"constraints are for {observed.model}, not {model}")
    n = observed.n
    limit = MAX_WEIGHTED_N if spec.weighted else MAX_BINARY_N
    if n > limit:
        raise ValueError(f"enumeration of {model} is limited to n <= {limit}")
    if spec.weighted and int(weight_cap) < 1:
        raise ValueError("weight_cap must be at least 1")
    cap = int(weight_cap)
    target = observed.stacked().astype(np.int64)
    B = target.shape[0]
    I, J = pair_order(model, n)
    pairs = list(zip(I.tolist(), J.tolist()))
    outcomes = [_pair_outcomes(model, i, j, cap) for i, j in pairs]

    # room[p] bounds what pairs p, p+1, ... can still add to each constraint
    room = np.zeros((len(pairs) + 1, B, n), dtype=np.int64)
    for p in range(len(pairs) - 1, -1, -1):
        best = np.zeros((B, n), dtype=np.int64)
        for _, contrib in outcomes[p]:
            for (b, v), amt in contrib.items():
                best[b, v] = max(best[b, v], amt)
        room[p] = room[p + 1] + best

    found = []
    partial = np.zeros((B, n), dtype=np.int64)
    W = np.zeros((n, n), dtype=np.int64)

    def dfs(p):
        if np.any(partial + room[p] < target):
            return
        if p == len(pairs):
            if np.array_equal(partial, target):
                found.append(W.copy())
            return
        i, j = pairs[p]
        for (wij, wji), contrib in outcomes[p]:
            ok = True
            for (b, v), amt in contrib.items():
                partial[b, v] += amt
                if partial[b, v] > target[b, v]:
                    ok = False
            if ok:
                W[i, j] = wij
                if wji is not None:
                    W[j, i] = wji
                dfs(p + 1)
            for (b, v), amt in contrib.items():
                partial[b, v] -= amt
        W[i, j] = 0
        if outcomes[p][0][0][1] is not None:
            W[j, i] = 0

    dfs(0)
    graphs = [Graph(w, directed=spec.directed, weighted=spec.weighted) for w in found]
    N_m = len(graphs)
    if N_m == 0:
        return EnumerationResult(0, 0.0, [], 0.0, None)
    if hv is None:
        from .solver import solve

        hv, _ = solve(model, observed)
    ll = ens.log_likelihood(model, hv, observed)
    tail = 0.0
    if spec.weighted and cap < int(target.max()):
        tail = _truncated_mass(model, hv, pairs, outcomes)
    return EnumerationResult(N_m, N_m * math.exp(ll), graphs, tail, ll)


def _truncated_mass(model, hv, pairs, outcomes):
    """Union bound on the canonical mass of configurations with an entry above the cap."""
    total = 0.0
    for (i, j), outs in zip(pairs, outcomes):
        law = ens.pair_distribution(model, hv, i, j)
        kept = 0.0
        for (wij, wji), _ in outs:
            if model in ("UWCM", "DWCM", "UECM"):
                kept += law.pmf(wij)
            else:
                r = min(wij, wji)
                kept += law.pmf(wij - r, wji - r, r)
        total += max(0.0, 1.0 - kept)
    return total
