"""Node statistics, ensemble summaries, fluctuation bounds and diagnostics.

Undefined values (ANND of an isolated node, clustering of a node with fewer
than two neighbours, relative fluctuations of a zero constraint) are NaN.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from . import ensembles as ens
from .exceptions import GraphFormatError, ModelMismatchError
from .netcore import MODELS, Graph, compute_constraints, model_spec
from .sampler import SampleSet

BINARY_STATS = ("degree", "annd", "clustering")
WEIGHTED_STATS = ("strength", "anns", "wclustering")


class BinaryStats(NamedTuple):
    degree: np.ndarray
    annd: np.ndarray
    clustering: np.ndarray


class WeightedStats(NamedTuple):
    strength: np.ndarray
    anns: np.ndarray
    wclustering: np.ndarray


def _undirected(g: Graph):
    if g.directed:
        raise GraphFormatError("statistic needs an undirected graph")


def _ratio(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def binary_stats(g: Graph, binarize: bool = False) -> BinaryStats:
    """Degree, average nearest-neighbour degree and clustering per node.

    Weighted graphs are accepted only with ``binarize=True``.
    """
    _undirected(g)
    if g.weighted and not binarize:
        raise GraphFormatError("binary statistics of a weighted graph need binarize=True")
    A = g.adjacency.astype(float)
    k = A.sum(axis=1)
    annd = _ratio(A @ k, k)
    tri = np.einsum("ij,jk,ki->i", A, A, A)
    clust = np.where(k > 1, _ratio(tri, k * (k - 1)), np.nan)
    return BinaryStats(k, annd, clust)


def weighted_stats(g: Graph) -> WeightedStats:
    """Strength, average nearest-neighbour strength and weighted clustering.

    The clustering denominator is the sum over ordered pairs ``j != k`` of
    ``w_ij w_ik``, i.e. ``s_i**2 - sum_j w_ij**2``.
    """
    _undirected(g)
    W = g.entries.astype(float)
    A = (W > 0).astype(float)
    k = A.sum(axis=1)
    s = W.sum(axis=1)
    anns = _ratio(A @ s, k)
    num = np.einsum("ij,jk,ki->i", W, W, W)
    den = s ** 2 - (W ** 2).sum(axis=1)
    wc = np.where(k > 1, _ratio(num, den), np.nan)
    return WeightedStats(s, anns, wc)


def _stat_degree(g):
    return binary_stats(g, binarize=True).degree


def _stat_annd(g):
    return binary_stats(g, binarize=True).annd


def _stat_clustering(g):
    return binary_stats(g, binarize=True).clustering


def _stat_strength(g):
    return weighted_stats(g).strength


def _stat_anns(g):
    return weighted_stats(g).anns


def _stat_wclustering(g):
    return weighted_stats(g).wclustering


STATISTICS = {
    "degree": _stat_degree,
    "annd": _stat_annd,
    "clustering": _stat_clustering,
    "strength": _stat_strength,
    "anns": _stat_anns,
    "wclustering": _stat_wclustering,
}


def statistic_function(name: str):
    """Per-node statistic by name; raises for unknown names."""
    try:
        return STATISTICS[name]
    except KeyError:
        raise ValueError(
            f"unknown statistic {name!r}; choose from {', '.join(STATISTICS)}"
        ) from None


def statistics_for(model: str) -> tuple:
    """Statistics that make sense on graphs sampled from ``model``."""
    spec = model_spec(model)
    if spec.directed:
        return ()
    return BINARY_STATS + (WEIGHTED_STATS if spec.weighted else ())


@dataclass
class EnsembleStatistic:
    """Per-node ensemble summary of one statistic."""

    name: str
    observed: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    count: int

    def within(self, which: str = "observed") -> np.ndarray:
        """Mask of nodes whose observed value (or mean) lies in the interval."""
        v = self.observed if which == "observed" else self.mean
        return (v >= self.lower) & (v <= self.upper)

    def to_dict(self) -> dict:
        return {
            "statistic": self.name,
            "level": self.level,
            "count": self.count,
            "observed": _json_list(self.observed),
            "mean": _json_list(self.mean),
            "ci_lo": _json_list(self.lower),
            "ci_hi": _json_list(self.upper),
        }


def _json_list(v):
    return [None if not np.isfinite(x) else float(x) for x in np.asarray(v, dtype=float)]


def _sample_values(samples, statistic: str, model: Optional[str]) -> np.ndarray:
    if isinstance(samples, SampleSet):
        blocks = MODELS[samples.model].blocks
        if statistic in samples.node_stats:
            return np.asarray(samples.node_stats[statistic], dtype=float)
        if statistic in blocks:
            return samples.constraint_block(statistic).astype(float)
        if samples.graphs:
            samples = samples.graphs
        else:
            raise ValueError(f"statistic {statistic!r} was not collected while sampling")
    graphs = list(samples)
    if model is not None and statistic in MODELS[model].blocks:
        return np.array([compute_constraints(g, model, binarize=True)[statistic] for g in graphs], dtype=float)
    fn = statistic_function(statistic)
    return np.array([fn(g) for g in graphs], dtype=float)


def ensemble_statistic(
    samples: Union[SampleSet, Sequence[Graph]],
    statistic: str,
    observed: Graph,
    level: float = 0.95,
    model: Optional[str] = None,
) -> EnsembleStatistic:
    """Mean and percentile interval of a per-node statistic over the samples.

    Parameters
    ----------
    samples : SampleSet or sequence of Graph
        A sample set with the statistic collected (or graphs retained), or
        plain graphs.
    statistic : str
        A name from :data:`STATISTICS` or a constraint block of the model.
    observed : Graph
        The graph the ensemble was fitted to.
    level : float
        Interval coverage; percentile ranks ``(1 - level) / 2`` and
        ``(1 + level) / 2`` with linear interpolation.
    """
    if not 0 < level < 1:
        raise ValueError("CI level must lie in (0, 1)")
    if isinstance(samples, SampleSet):
        model = samples.model
    vals = _sample_values(samples, statistic, model)
    count = vals.shape[0]
    need = int(np.ceil(2.0 / (1.0 - level) - 1e-9))
    if count < need:
        raise ValueError(f"{count} samples are too few for a {level:g} interval (need {need})")
    if model is not None and statistic in MODELS[model].blocks:
        obs = compute_constraints(observed, model, binarize=True)[statistic].astype(float)
    else:
        obs = statistic_function(statistic)(observed)
    if obs.shape[0] != vals.shape[1]:
        raise ModelMismatchError("observed graph and samples have different sizes")
    alpha = 1.0 - level
    with warnings.catch_warnings():
        # nodes undefined in every sample yield NaN silently
        warnings.simplefilter("ignore", category=RuntimeWarning)
        mean = np.nanmean(vals, axis=0)
        lo, hi = np.nanpercentile(vals, [100 * alpha / 2, 100 * (1 - alpha / 2)], axis=0)
    return EnsembleStatistic(statistic, obs, mean, lo, hi, level, count)


def write_statistic_csv(path: str, es: EnsembleStatistic) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "observed", "mean", "ci_lo", "ci_hi"])
        for i in range(es.observed.shape[0]):
            w.writerow([i] + [_fmt(v) for v in (es.observed[i], es.mean[i], es.lower[i], es.upper[i])])


def _fmt(v) -> str:
    return "nan" if not np.isfinite(v) else "%.17g" % v


# ---------------------------------------------------------------------------
# fluctuations


@dataclass
class FluctuationBlock:
    """Relative fluctuations of one constraint block.

    ``delta = sigma / expected``; entries of zero constraints are NaN and
    marked in ``excluded``. ``bound_kind`` is ``"bound"`` for proven
    inequalities, ``"lower"`` when only the lower curve is proven and
    ``"reference"`` for a comparison curve with no inequality attached.
    """

    name: str
    value: np.ndarray
    expected: np.ndarray
    sigma: np.ndarray
    delta: np.ndarray
    bound_lo: np.ndarray
    bound_hi: np.ndarray
    bound_kind: str
    excluded: np.ndarray

    def violations(self, slack: float = 1e-12) -> np.ndarray:
        """Indices of nodes whose delta leaves the bound interval."""
        if self.bound_kind == "reference":
            return np.array([], dtype=int)
        ok = ~self.excluded
        bad = ok & (self.delta < self.bound_lo - slack)
        if self.bound_kind == "bound":
            bad |= ok & (self.delta > self.bound_hi + slack)
        return np.flatnonzero(bad)

    def to_dict(self) -> dict:
        return {
            "block": self.name,
            "bound_kind": self.bound_kind,
            "value": _json_list(self.value),
            "delta": _json_list(self.delta),
            "bound_lo": _json_list(self.bound_lo),
            "bound_hi": _json_list(self.bound_hi),
            "excluded": [int(i) for i in np.flatnonzero(self.excluded)],
        }


@dataclass
class FluctuationReport:
    model: str
    n: int
    blocks: dict

    def to_dict(self) -> dict:
        return {"model": self.model, "n": self.n,
                "blocks": {k: b.to_dict() for k, b in self.blocks.items()}}


def _binary_curve(k, n):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sqrt(np.maximum(1.0 / k - 1.0 / (n - 1), 0.0))


def _weighted_curves(s, n):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sqrt(1.0 / s + 1.0 / (n - 1)), np.sqrt(1.0 / s + 1.0)


def fluctuation_report(model: str, hv: ens.HiddenVariables, observed) -> FluctuationReport:
    """Coefficients of variation of every constraint with their analytic bounds."""
    spec = model_spec(model)
    if observed.model != model:
        raise ModelMismatchError(f"constraints are for {observed.model}, not {model}")
    n = hv.n
    if n < 2:
        raise ValueError("fluctuations need at least two nodes")
    exp = ens.expected_constraints(model, hv)
    var = ens.constraint_variances(model, hv)
    blocks = {}
    for name in spec.blocks:
        value = observed[name].astype(float)
        mu = exp[name]
        sigma = np.sqrt(np.maximum(var[name], 0.0))
        excluded = (value == 0) | (mu <= 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            delta = np.where(excluded, np.nan, sigma / np.where(excluded, 1.0, mu))
        kind = "bound"
        if not spec.weighted or (model == "UECM" and name == "k"):
            lo, hi = np.zeros(n), _binary_curve(mu, n)
        elif model == "UECM":
            k = exp["k"]
            lo = hi = _binary_curve(k, n)
            kind = "reference"
        else:
            lo, hi = _weighted_curves(mu, n)
            if model == "RWCM" and name != "s_recip":
                hi = np.full(n, np.inf)
                kind = "lower"
        lo = np.where(excluded, np.nan, lo)
        hi = np.where(excluded, np.nan, hi)
        blocks[name] = FluctuationBlock(name, value, mu, sigma, delta, lo, hi, kind, excluded)
    return FluctuationReport(model, n, blocks)


def write_fluctuation_csv(path: str, block: FluctuationBlock) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "value", "delta", "bound_lo", "bound_hi"])
        for i in range(block.value.shape[0]):
            w.writerow([i, _fmt(block.value[i]), _fmt(block.delta[i]),
                        _fmt(block.bound_lo[i]), _fmt(block.bound_hi[i])])


# ---------------------------------------------------------------------------
# heterogeneity and convergence


@dataclass
class HeterogeneityReport:
    n: int
    k_max: int
    k_tot: int
    k_c: float
    ratio: float
    uniformity: float
    max_naive: float
    naive_above_one: int
    naive_table: np.ndarray
    naive_weight_table: Optional[np.ndarray] = None

    @property
    def cutoff_violated(self) -> bool:
        return self.ratio > 1.0

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k_max": self.k_max,
            "k_tot": self.k_tot,
            "k_c": self.k_c,
            "ratio": self.ratio,
            "uniformity_statistic": self.uniformity,
            "cutoff_violated": self.cutoff_violated,
            "max_naive_probability": self.max_naive,
            "naive_pairs_above_one": self.naive_above_one,
        }


def heterogeneity_report(g: Graph, symmetrize: bool = False) -> HeterogeneityReport:
    """Structural cut-off and uniformity diagnostics of the degree sequence.

    ``naive_table`` holds ``k_i k_j / k_tot`` for every distinct pair (zero on
    the diagonal); for weighted graphs ``naive_weight_table`` holds the
    analogous ``s_i s_j / s_tot``. Directed graphs need ``symmetrize=True``
    and are reduced to ``a_ij or a_ji``.
    """
    W = g.entries
    if g.directed:
        if not symmetrize:
            raise GraphFormatError("heterogeneity diagnostics need an undirected graph")
        W = np.maximum(W, W.T)
    A = (W > 0).astype(np.int64)
    k = A.sum(axis=1)
    k_tot = int(k.sum())
    if k_tot == 0:
        raise GraphFormatError("empty graph: total degree is zero")
    n = k.shape[0]
    kf = k.astype(float)
    k_c = float(np.sqrt(k_tot))
    k_max = int(k.max())
    naive = np.outer(kf, kf) / k_tot
    np.fill_diagonal(naive, 0.0)
    iu = np.triu_indices(n, 1)
    naive_w = None
    if g.weighted:
        s = W.sum(axis=1).astype(float)
        naive_w = np.outer(s, s) / s.sum()
        np.fill_diagonal(naive_w, 0.0)
    return HeterogeneityReport(
        n=n,
        k_max=k_max,
        k_tot=k_tot,
        k_c=k_c,
        ratio=k_max / k_c,
        uniformity=float(k_max * np.mean(kf ** 2) / np.mean(kf) ** 2),
        max_naive=float(naive[iu].max()) if n > 1 else 0.0,
        naive_above_one=int(np.sum(naive[iu] > 1.0)),
        naive_table=naive,
        naive_weight_table=naive_w,
    )


class ConvergenceReport(NamedTuple):
    max_abs_binary: float
    mean_abs_binary: float
    max_abs_weight: Optional[float]
    mean_abs_weight: Optional[float]

    def to_dict(self) -> dict:
        return dict(self._asdict())


def _offdiag(n):
    return ~np.eye(n, dtype=bool)


def convergence_report(samples: SampleSet, exact: ens.ExpectedMatrices) -> ConvergenceReport:
    """Max and mean absolute gap between sample means and exact expectations."""
    if exact.adjacency.shape != (samples.n, samples.n):
        raise ModelMismatchError("sample and exact matrices have different sizes")
    if (exact.weight is None) != (samples.sum_weight is None):
        raise ModelMismatchError("samples and exact matrices come from different model kinds")
    mask = _offdiag(samples.n)
    gap = np.abs(samples.mean_binary - exact.adjacency)[mask]
    out = [float(gap.max(initial=0.0)), float(gap.mean()) if gap.size else 0.0]
    if exact.weight is not None:
        gw = np.abs(samples.mean_weight - exact.weight)[mask]
        out += [float(gw.max(initial=0.0)), float(gw.mean()) if gw.size else 0.0]
    else:
        out += [None, None]
    return ConvergenceReport(*out)


def write_scatter_csv(path: str, exact: np.ndarray, sample_mean: np.ndarray) -> None:
    """Dump ``entry,exact,sample_mean`` for every off-diagonal entry (row-major index)."""
    n = exact.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["entry", "exact", "sample_mean"])
        for i in range(n):
            for j in range(n):
                if i != j:
                    w.writerow([i * n + j, "%.17g" % exact[i, j], "%.17g" % sample_mean[i, j]])
