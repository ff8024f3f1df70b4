"""Pair-level laws, likelihoods, expectations and variances of the seven models.

Every model factorizes over node pairs. For a pair (i, j) the contribution of
the pair to node i's constraint vector is a random vector ``u_ij`` (one entry
per constraint block). :func:`pair_moments` returns its mean, its covariance
``S_ij = Cov(u_ij, u_ij)`` and the cross term ``X_ij = Cov(u_ij, u_ji)``; all
node-level quantities, including the Fisher information used by the solver,
are sums of these.

The kernels accept *group* parameters: ``G`` representative parameter values
and multiplicities ``m``, standing for ``sum(m)`` nodes. With ``m = 1`` they
reduce to plain per-node computations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .exceptions import DomainError, ModelMismatchError
from .netcore import MODELS, ConstraintSet, model_spec


@dataclass(frozen=True, eq=False)
class HiddenVariables:
    """Likelihood-maximizing parameters of a model; unused vectors are ``None``."""

    model: str
    x: np.ndarray
    y: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None

    def __post_init__(self):
        spec = model_spec(self.model)
        for name in ("x", "y", "z"):
            v = getattr(self, name)
            if name in spec.params:
                if v is None:
                    raise ModelMismatchError(f"{self.model} needs parameter vector {name}")
                v = np.array(v, dtype=float)
                if v.ndim != 1:
                    raise DomainError(f"parameter {name} is not a vector")
                if not np.all(np.isfinite(v)) or (v < 0).any():
                    raise DomainError(f"parameter {name} must be finite and non-negative")
                v.setflags(write=False)
                object.__setattr__(self, name, v)
            elif v is not None:
                raise ModelMismatchError(f"{self.model} has no parameter vector {name}")
        if len({getattr(self, p).shape[0] for p in spec.params}) != 1:
            raise DomainError("parameter vectors have different lengths")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def vectors(self) -> list:
        return [getattr(self, p) for p in MODELS[self.model].params]

    def stacked(self) -> np.ndarray:
        return np.vstack(self.vectors())

    @classmethod
    def from_stacked(cls, model: str, arr) -> "HiddenVariables":
        names = MODELS[model].params
        return cls(model, **{p: np.asarray(arr[b]) for b, p in enumerate(names)})


# ---------------------------------------------------------------------------
# pair distributions


class Bernoulli(NamedTuple):
    p: float

    def pmf(self, a: int) -> float:
        return self.p if a == 1 else (1.0 - self.p if a == 0 else 0.0)


class Categorical4(NamedTuple):
    p_right: float
    p_left: float
    p_recip: float
    p_none: float

    def pmf(self, outcome: str) -> float:
        return {"right": self.p_right, "left": self.p_left,
                "recip": self.p_recip, "none": self.p_none}[outcome]


class Geometric(NamedTuple):
    q: float

    def pmf(self, w: int) -> float:
        return self.q ** w * (1.0 - self.q) if w >= 0 else 0.0


class ReciprocalTriple(NamedTuple):
    """RWCM pair law: ``a = x_i y_j``, ``b = x_j y_i``, ``c = z_i z_j``."""

    a: float
    b: float
    c: float

    def pmf(self, right: int, left: int, recip: int) -> float:
        if right and left or min(right, left, recip) < 0:
            return 0.0
        a, b, c = self.a, self.b, self.c
        z = (1 - a * b) / ((1 - a) * (1 - b) * (1 - c))
        return a ** right * b ** left * c ** recip / z


class BernoulliGeometric(NamedTuple):
    """UECM pair law: a link with probability ``p``, then ``1 + Geometric(q)`` weight."""

    p: float
    q: float

    def pmf(self, w: int) -> float:
        if w < 0:
            return 0.0
        if w == 0:
            return 1.0 - self.p
        return self.p * self.q ** (w - 1) * (1.0 - self.q)


def pair_distribution(model: str, hv: HiddenVariables, i: int, j: int):
    """Exact law of the content of the pair (i, j) under ``model``."""
    if hv.model != model:
        raise ModelMismatchError(f"hidden variables are for {hv.model}, not {model}")
    if i == j:
        raise DomainError("pair distribution needs two distinct nodes")
    x, y, z = hv.x, hv.y, hv.z
    if model == "UBCM":
        t = x[i] * x[j]
        return Bernoulli(t / (1.0 + t))
    if model == "DBCM":
        t = x[i] * y[j]
        return Bernoulli(t / (1.0 + t))
    if model == "RBCM":
        r, l, c = x[i] * y[j], x[j] * y[i], z[i] * z[j]
        d = 1.0 + r + l + c
        return Categorical4(r / d, l / d, c / d, 1.0 / d)
    if model == "UWCM":
        return Geometric(_checked(x[i] * x[j]))
    if model == "DWCM":
        return Geometric(_checked(x[i] * y[j]))
    if model == "RWCM":
        return ReciprocalTriple(
            _checked(x[i] * y[j]), _checked(x[j] * y[i]), _checked(z[i] * z[j])
        )
    if model == "UECM":
        q = _checked(y[i] * y[j])
        t = x[i] * x[j] * q
        return BernoulliGeometric(t / (1.0 - q + t), q)
    raise ModelMismatchError(f"unknown model {model!r}")


def _checked(q):
    if not q < 1.0:
        raise DomainError(f"parameter product {q} outside [0, 1)")
    return q


# ---------------------------------------------------------------------------
# group kernels


class PairMoments(NamedTuple):
    mean: np.ndarray  # (B, G, G)
    logz: np.ndarray  # (G, G), pair log-partition function
    S: Optional[np.ndarray] = None  # (B, B, G, G)
    X: Optional[np.ndarray] = None  # (B, B, G, G)


def _valid_pairs(m):
    """Mask of group pairs that correspond to at least one real node pair."""
    valid = np.ones((m.size, m.size), dtype=bool)
    np.fill_diagonal(valid, m > 1)
    return valid


def domain_ok(model: str, params, m=None) -> bool:
    """True when all parameter products of distinct node pairs lie below 1."""
    spec = model_spec(model)
    if not spec.weighted:
        return True
    params = [np.asarray(p, dtype=float) for p in params]
    m = np.ones(params[0].size) if m is None else np.asarray(m)
    valid = _valid_pairs(m)
    if model == "UWCM":
        prods = [np.outer(params[0], params[0])]
    elif model == "DWCM":
        prods = [np.outer(params[0], params[1])]
    elif model == "RWCM":
        prods = [np.outer(params[0], params[1]), np.outer(params[2], params[2])]
    else:
        prods = [np.outer(params[1], params[1])]
    return all(bool(np.all(p[valid] < 1.0)) for p in prods)


def _log1m(q):
    return np.log1p(-q)


def pair_moments(model: str, params, second: bool = True) -> PairMoments:
    """Per-pair means (and covariances) of the constraint contributions.

    ``params`` is the list of parameter vectors (x, y, z as the model needs).
    Entries ``[g, h]`` describe the pair whose first node carries parameters
    ``g`` and second node parameters ``h``.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        fn = _KERNELS[model]
        return fn([np.asarray(p, dtype=float) for p in params], second)


def _bernoulli_sym(t):
    p = t / (1.0 + t)
    var = t / (1.0 + t) ** 2
    # for huge t the quotient above underflows cleanly to 0
    var = np.where(np.isfinite(t), var, 0.0)
    p = np.where(np.isfinite(t), p, 1.0)
    return p, var


def _ubcm(params, second):
    x, = params
    t = np.outer(x, x)
    p, v = _bernoulli_sym(t)
    logz = np.log1p(t)
    if not second:
        return PairMoments(p[None], logz)
    return PairMoments(p[None], logz, v[None, None], v[None, None])


def _dbcm(params, second):
    x, y = params
    t = np.outer(x, y)  # g -> h
    p, v = _bernoulli_sym(t)
    logz = np.log1p(t) + np.log1p(t.T)
    mean = np.stack([p, p.T])
    if not second:
        return PairMoments(mean, logz)
    zero = np.zeros_like(p)
    S = np.array([[v, zero], [zero, v.T]])
    X = np.array([[zero, v], [v.T, zero]])
    return PairMoments(mean, logz, S, X)


def _rbcm(params, second):
    x, y, z = params
    r = np.outer(x, y)
    l = r.T
    c = np.outer(z, z)
    d = 1.0 + r + l + c
    P = np.stack([r / d, l / d, c / d])
    logz = np.log(d)
    if not second:
        return PairMoments(P, logz)
    S = -P[:, None] * P[None, :]
    for b in range(3):
        S[b, b] = P[b] * (1.0 - P[b])
    X = S[:, [1, 0, 2]]
    return PairMoments(P, logz, S, X)


def _geometric(q):
    omq = 1.0 - q
    return q / omq, q / omq ** 2


def _uwcm(params, second):
    x, = params
    q = np.outer(x, x)
    mean, var = _geometric(q)
    logz = -_log1m(q)
    if not second:
        return PairMoments(mean[None], logz)
    return PairMoments(mean[None], logz, var[None, None], var[None, None])


def _dwcm(params, second):
    x, y = params
    q = np.outer(x, y)
    mean, var = _geometric(q)
    logz = -_log1m(q) - _log1m(q.T)
    M = np.stack([mean, mean.T])
    if not second:
        return PairMoments(M, logz)
    zero = np.zeros_like(q)
    S = np.array([[var, zero], [zero, var.T]])
    X = np.array([[zero, var], [var.T, zero]])
    return PairMoments(M, logz, S, X)


def _rwcm(params, second):
    x, y, z = params
    a = np.outer(x, y)
    b = a.T
    c = np.outer(z, z)
    ab = a * b
    m1 = a * (1 - b) / ((1 - a) * (1 - ab))
    m2 = m1.T
    m3 = c / (1 - c)
    M = np.stack([m1, m2, m3])
    logz = _log1m(ab) - _log1m(a) - _log1m(b) - _log1m(c)
    if not second:
        return PairMoments(M, logz)
    v1 = a * (1 - b) * (1 - a * ab) / ((1 - a) ** 2 * (1 - ab) ** 2)
    v2 = v1.T
    v3 = c / (1 - c) ** 2
    cross = -m1 * m2
    zero = np.zeros_like(a)
    S = np.array([[v1, cross, zero], [cross, v2, zero], [zero, zero, v3]])
    X = S[:, [1, 0, 2]]
    return PairMoments(M, logz, S, X)


def _uecm(params, second):
    x, y = params
    q = np.outer(y, y)
    t = np.outer(x, x) * q
    omq = 1.0 - q
    denom = omq + t
    p = t / denom
    p = np.where(np.isfinite(t), p, 1.0)
    w = p / omq
    logz = np.where(q < 0.5, np.log1p(t - q), np.log(denom)) - _log1m(q)
    logz = np.where(np.isfinite(t), logz, np.log(t) - _log1m(q))
    M = np.stack([p, w])
    if not second:
        return PairMoments(M, logz)
    one_minus_p = np.where(np.isfinite(t), omq / denom, 0.0)
    va = p * one_minus_p
    vw = p * (q + one_minus_p) / omq ** 2
    cov = w * one_minus_p
    S = np.array([[va, cov], [cov, vw]])
    return PairMoments(M, logz, S, S)


_KERNELS = {
    "UBCM": _ubcm,
    "DBCM": _dbcm,
    "RBCM": _rbcm,
    "UWCM": _uwcm,
    "DWCM": _dwcm,
    "RWCM": _rwcm,
    "UECM": _uecm,
}


def _clean_diag(mat, m):
    """Zero the self-pair entries of singleton groups; they match no real pair."""
    mat = np.array(mat, dtype=float, copy=True)
    idx = np.flatnonzero(m <= 1)
    mat[..., idx, idx] = 0.0
    return mat


def _rowsum(mat, m, compensated=False):
    """Sum over partners: ``sum_h m_h mat[..., g, h] - mat[..., g, g]``."""
    mat = _clean_diag(mat, m)
    diag = np.diagonal(mat, axis1=-2, axis2=-1)
    if not compensated:
        return mat @ m - diag
    flat = mat.reshape(-1, mat.shape[-2], mat.shape[-1])
    out = np.empty(flat.shape[:2])
    for k, block in enumerate(flat):
        for g, row in enumerate(block):
            out[k, g] = math.fsum(np.append(row * m, -row[g]))
    return out.reshape(mat.shape[:-1])


def group_expected(model, params, m, compensated=False) -> np.ndarray:
    """Expected constraints per group, shape ``(B, G)``."""
    pm = pair_moments(model, params, second=False)
    return _rowsum(pm.mean, m, compensated)


def group_loglik(model, params, m, observed) -> float:
    """Log-likelihood with group-level observed constraints ``(B, G)``."""
    pm = pair_moments(model, params, second=False)
    with np.errstate(divide="ignore"):
        logs = [np.log(p) for p in params]
    linear = 0.0
    for b, lp in enumerate(logs):
        mask = observed[b] > 0
        linear += float(np.sum(m[mask] * observed[b][mask] * lp[mask]))
    weights = np.outer(m, m) - np.diag(m)
    return linear - 0.5 * float(np.sum(weights * _clean_diag(pm.logz, m)))


def group_fisher(pm: PairMoments, m) -> np.ndarray:
    """Fisher information of the group log-parameters, shape ``(B*G, B*G)``."""
    B, _, G, _ = pm.S.shape
    D = _rowsum(pm.S, m)  # (B, B, G)
    weights = np.outer(m, m) - np.diag(m)
    F = _clean_diag(pm.X, m) * weights  # (B, B, G, G)
    idx = np.arange(G)
    F[:, :, idx, idx] += D * m
    return F.transpose(0, 2, 1, 3).reshape(B * G, B * G)


# ---------------------------------------------------------------------------
# public per-node surface


def _check(model, hv, observed=None):
    if hv.model != model:
        raise ModelMismatchError(f"hidden variables are for {hv.model}, not {model}")
    if not domain_ok(model, hv.vectors()):
        raise DomainError(f"{model} hidden variables violate the parameter-product domain")
    if observed is not None:
        if observed.model != model:
            raise ModelMismatchError(f"constraints are for {observed.model}, not {model}")
        if observed.n != hv.n:
            raise ModelMismatchError("constraint and parameter lengths differ")


def log_likelihood(model: str, hv: HiddenVariables, observed: ConstraintSet) -> float:
    """Natural-log likelihood of any graph whose constraints are ``observed``."""
    _check(model, hv, observed)
    obs = observed.stacked().astype(float)
    for b, p in enumerate(hv.vectors()):
        if np.any((p == 0) & (obs[b] > 0)):
            return -np.inf
    return group_loglik(model, hv.vectors(), np.ones(hv.n), obs)


def likelihood_gradient(model: str, hv: HiddenVariables, observed: ConstraintSet) -> np.ndarray:
    """Gradient of the log-likelihood with respect to (x, y, z), concatenated.

    Components of parameters equal to zero (zero-constraint nodes) are
    reported as 0.
    """
    _check(model, hv, observed)
    P = hv.stacked()
    exp = group_expected(model, hv.vectors(), np.ones(hv.n))
    obs = observed.stacked()
    zero = P == 0
    if np.any(zero & (obs > 0)):
        raise DomainError("gradient undefined: zero parameter with positive constraint")
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(zero, 0.0, (obs - exp) / P)
    return g.ravel()


def expected_constraints(model: str, hv: HiddenVariables, compensated: bool = False) -> ConstraintSet:
    _check(model, hv)
    E = group_expected(model, hv.vectors(), np.ones(hv.n), compensated)
    return ConstraintSet(model, dict(zip(MODELS[model].blocks, E)), observed=False)


def constraint_variances(model: str, hv: HiddenVariables, compensated: bool = False) -> dict:
    """Exact canonical variance of every constraint, keyed by block name."""
    _check(model, hv)
    pm = pair_moments(model, hv.vectors(), second=True)
    B = pm.S.shape[0]
    diag = np.stack([pm.S[b, b] for b in range(B)])
    V = _rowsum(diag, np.ones(hv.n), compensated)
    return dict(zip(MODELS[model].blocks, V))


class ExpectedMatrices(NamedTuple):
    adjacency: np.ndarray  # <a_ij>
    weight: Optional[np.ndarray]  # <w_ij>, None for binary models


def expected_matrices(model: str, hv: HiddenVariables) -> ExpectedMatrices:
    """Entrywise connection probabilities and expected weights."""
    _check(model, hv)
    params = hv.vectors()
    pm = pair_moments(model, params, second=False)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        A, W = _matrices(model, params, pm)
    A = A.copy()
    np.fill_diagonal(A, 0.0)
    if W is not None:
        W = W.copy()
        np.fill_diagonal(W, 0.0)
    return ExpectedMatrices(A, W)


def _matrices(model, params, pm):
    if model in ("UBCM", "DBCM"):
        A, W = pm.mean[0], None
    elif model == "RBCM":
        A, W = pm.mean[0] + pm.mean[2], None
    elif model == "UWCM" or model == "DWCM":
        q = np.outer(params[0], params[0] if model == "UWCM" else params[1])
        A, W = q, pm.mean[0]
    elif model == "RWCM":
        x, y, z = params
        a = np.outer(x, y)
        b = a.T
        c = np.outer(z, z)
        one_way = a * (1 - b) / (1 - a * b)
        A = 1.0 - (1.0 - one_way) * (1.0 - c)
        W = pm.mean[0] + pm.mean[2]
    else:
        A, W = pm.mean[0], pm.mean[1]
    return A, W
