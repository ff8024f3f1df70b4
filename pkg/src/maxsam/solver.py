"""Likelihood maximization for the seven models.

The solver works on log-parameters ``theta = ln x`` so positivity is
automatic. Nodes sharing the same constraint tuple share one unknown. A
diagonally preconditioned ascent brings the parameters near the maximum, then
damped Newton steps on the full Fisher matrix polish the solution until the
largest relative constraint error drops below ``eps``.

Binary-type constraints equal to ``n - 1`` have no finite maximizer: their
parameter is pinned at a large cap and reported in ``boundary_flags``. The same
happens to any parameter the iteration pushes beyond the cap.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import ensembles as ens
from .exceptions import ConstraintError, DomainError, ModelMismatchError
from .netcore import MODELS, ConstraintSet, model_spec

# ln of the largest parameter value; pairs touching a capped node have
# probabilities within 1e-12 of 1 for any partner above ~1e-9.
THETA_CAP = 50.0
# above this many unknowns the Fisher matrix is not factorized
NEWTON_LIMIT = 4000
STAGE1_ITERS = 50
MAX_STEP = 10.0

# constraint blocks whose value n - 1 forces the matching parameter to infinity
_SATURATING = {
    "UBCM": ("k",),
    "DBCM": ("k_out", "k_in"),
    "RBCM": ("k_right", "k_left", "k_recip"),
    "UECM": ("k",),
}


@dataclass
class SolveReport:
    """Outcome of a solve or of a residual check."""

    iterations: int
    max_rel_error: float
    log_likelihood: float
    boundary_flags: list = field(default_factory=list)
    converged: bool = False
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "max_rel_error": self.max_rel_error,
            "log_likelihood": self.log_likelihood,
            "boundary_flags": [list(f) for f in self.boundary_flags],
            "converged": self.converged,
            "message": self.message,
        }


def _rel_error(obs, exp) -> float:
    if obs.size == 0:
        return 0.0
    return float(np.max(np.abs(obs - exp) / np.maximum(obs, 1.0)))


def _check_inputs(model, observed, eps):
    model_spec(model)
    if not isinstance(observed, ConstraintSet):
        raise ConstraintError("observed must be a ConstraintSet")
    if observed.model != model:
        raise ModelMismatchError(f"constraints are for {observed.model}, not {model}")
    if not eps > 0:
        raise ValueError("eps must be positive")


def initial_guess(model: str, observed: ConstraintSet) -> ens.HiddenVariables:
    """Weak-coupling starting point, rescaled into the model's domain."""
    H = observed.stacked().astype(float)
    n = H.shape[1]

    def scaled(v, total):
        return v / np.sqrt(total) if total > 0 else np.zeros_like(v)

    if model == "UBCM":
        P = [scaled(H[0], H[0].sum())]
    elif model == "DBCM":
        P = [scaled(H[0], H[0].sum()), scaled(H[1], H[1].sum())]
    elif model == "RBCM":
        P = [scaled(H[0], H[0].sum()), scaled(H[1], H[1].sum()), scaled(H[2], H[2].sum())]
    elif model == "UWCM":
        P = [H[0] / np.sqrt(1.0 + H[0].sum())]
    elif model == "DWCM":
        tot = 1.0 + H[0].sum()
        P = [H[0] / np.sqrt(tot), H[1] / np.sqrt(tot)]
    elif model == "RWCM":
        tot = 1.0 + H[0].sum()
        P = [H[0] / np.sqrt(tot), H[1] / np.sqrt(tot), H[2] / np.sqrt(1.0 + H[2].sum())]
    else:  # UECM
        P = [scaled(H[0], H[0].sum()), H[1] / (1.0 + H[1].sum())]
    P = _into_domain(model, P, np.ones(n))
    return ens.HiddenVariables(model, *P)


def _into_domain(model, P, m, margin=0.9):
    """Uniformly shrink the vectors entering a constrained product."""
    P = [np.array(p, dtype=float) for p in P]
    if model_spec(model).weighted:
        valid = ens._valid_pairs(np.asarray(m))

        def shrink(idx_a, idx_b, both):
            prod = np.outer(P[idx_a], P[idx_b])[valid]
            top = prod.max() if prod.size else 0.0
            if top >= 1.0:
                f = margin / top
                if both:
                    P[idx_a] *= np.sqrt(f)
                    if idx_b != idx_a:
                        P[idx_b] *= np.sqrt(f)
                else:
                    P[idx_a] *= f

        if model == "UWCM":
            shrink(0, 0, True)
        elif model == "DWCM":
            shrink(0, 1, True)
        elif model == "RWCM":
            shrink(0, 1, True)
            shrink(2, 2, True)
        else:
            shrink(1, 1, True)
    return P


def _group(H):
    """Unique constraint tuples; returns representatives, multiplicities, labels."""
    reps, inverse, counts = np.unique(H.T, axis=0, return_inverse=True, return_counts=True)
    return reps.T.copy(), counts.astype(float), inverse.ravel()


def _fisher_diag(pm, m):
    B = pm.S.shape[0]
    out = np.empty((B, m.size))
    for b in range(B):
        D = ens._rowsum(pm.S[b, b], m)
        X = np.diagonal(ens._clean_diag(pm.X[b, b], m))
        out[b] = m * D + m * (m - 1.0) * X
    return out


class _Problem:
    """Group-level objective with frozen entries held fixed."""

    def __init__(self, model, H, m):
        self.model = model
        self.H = H
        self.m = m

    def params(self, theta):
        return list(np.exp(theta))

    def evaluate(self, theta):
        params = self.params(theta)
        if not ens.domain_ok(self.model, params, self.m):
            return None
        with np.errstate(all="ignore"):
            E = ens.group_expected(self.model, params, self.m)
            lam = ens.group_loglik(self.model, params, self.m, self.H)
        if not np.all(np.isfinite(E)) or np.isnan(lam):
            return None
        return lam, E


def solve(
    model: str,
    observed: ConstraintSet,
    eps: float = 1e-6,
    max_iter: int = 10_000,
    init: Optional[ens.HiddenVariables] = None,
    force_refine: bool = False,
):
    """Maximize the likelihood of ``observed`` under ``model``.

    Parameters
    ----------
    model : str
        Model name.
    observed : ConstraintSet
        Observed constraints.
    eps : float
        Target for the largest relative error ``|obs - exp| / max(obs, 1)``.
    max_iter : int
        Cap on the total number of ascent and Newton steps.
    init : HiddenVariables, optional
        Starting point, typically a previous solution. Entries that belong to
        zero constraints are reset to 0.
    force_refine : bool
        Run Newton steps even when the ascent stage already meets ``eps``.

    Returns
    -------
    hv : HiddenVariables
    report : SolveReport
    """
    _check_inputs(model, observed, eps)
    spec = MODELS[model]
    H_full = observed.stacked().astype(float)
    B, n = H_full.shape
    H, m, labels = _group(H_full)
    G = m.size

    given = init is not None
    if init is None:
        init = initial_guess(model, observed)
    elif init.model != model or init.n != n:
        raise ModelMismatchError("initial parameters do not match the model or size")
    start = init.stacked()
    with np.errstate(divide="ignore"):
        logstart = np.log(start)
    theta = np.empty((B, G))
    default = np.log(np.maximum(initial_guess(model, observed).stacked(), 1e-300))
    for g in range(G):
        members = labels == g
        col = logstart[:, members].mean(axis=1)
        col = np.where(np.isfinite(col), col, default[:, members].mean(axis=1))
        theta[:, g] = col

    zero = H == 0
    theta[zero] = -np.inf
    frozen = zero.copy()
    flagged = np.zeros_like(zero)
    for blk in _SATURATING.get(model, ()):
        b = spec.blocks.index(blk)
        sat = H[b] >= n - 1
        if n > 1 and sat.any():
            theta[b, sat] = THETA_CAP
            frozen[b, sat] = True
            flagged[b, sat] = True
    theta = np.minimum(theta, THETA_CAP)

    prob = _Problem(model, H, m)
    state = prob.evaluate(theta)
    if state is None:
        # uniform rescale of the start into the domain
        P = _into_domain(model, prob.params(theta), m, margin=0.5)
        with np.errstate(divide="ignore"):
            theta = np.log(np.vstack(P))
        state = prob.evaluate(theta)
    message = ""
    it = 0
    newton_steps = 0
    converged = False
    if state is None:
        message = "non-finite values at the initial point"
    else:
        lam, E = state
        rel = _rel_error(H, E)
        free = ~frozen
        while True:
            if not np.any(free):
                converged = rel <= eps
                if not converged:
                    message = "no free parameters left"
                break
            use_newton = (it >= STAGE1_ITERS or rel <= eps) and free.sum() <= NEWTON_LIMIT
            if rel <= eps and (not force_refine or newton_steps > 0 or not use_newton):
                converged = True
                break
            if it >= max_iter:
                message = "iteration limit reached"
                break
            it += 1
            params = prob.params(theta)
            with np.errstate(all="ignore"):
                pm = ens.pair_moments(model, params, second=True)
            grad = m * (H - E)
            if use_newton:
                F = ens.group_fisher(pm, m)
                idx = np.flatnonzero(free.ravel())
                step = _newton_direction(F[np.ix_(idx, idx)], grad.ravel()[idx])
                d = np.zeros(B * G)
                d[idx] = step
                d = d.reshape(B, G)
                newton_steps += 1
            else:
                diag = _fisher_diag(pm, m)
                with np.errstate(all="ignore"):
                    d = np.where(free & (diag > 0), grad / diag, 0.0)
            if not np.all(np.isfinite(d)):
                message = "non-finite search direction"
                break
            big = np.max(np.abs(d)) if d.size else 0.0
            if big > MAX_STEP:
                d *= MAX_STEP / big
            slope = float(np.sum(grad[free] * d[free]))
            accepted = False
            t = 1.0
            for _ in range(60):
                trial = np.where(free, theta + t * d, theta)
                res = prob.evaluate(trial)
                if res is not None:
                    lam_t, E_t = res
                    rel_t = _rel_error(H, E_t)
                    tol = 1e-12 * max(1.0, abs(lam))
                    if lam_t >= lam + 1e-4 * t * slope or (lam_t >= lam - tol and rel_t < rel):
                        accepted = True
                        break
                t *= 0.5
            if not accepted:
                message = "line search stalled"
                converged = rel <= eps
                break
            theta, lam, E, rel = trial, lam_t, E_t, rel_t
            over = free & (theta > THETA_CAP)
            under = free & (theta < -THETA_CAP)
            if over.any() or under.any():
                theta = np.clip(theta, -np.inf, THETA_CAP)
                theta[under] = -THETA_CAP
                frozen |= over | under
                flagged |= over | under
                free = ~frozen
                res = prob.evaluate(theta)
                if res is None:
                    message = "non-finite values after freezing"
                    break
                lam, E = res
                rel = _rel_error(H, E)

    with np.errstate(over="ignore"):
        P_group = np.exp(theta)
    P_full = P_group[:, labels]
    if given and it == 0 and np.array_equal(init.stacked() == 0, P_full == 0) \
            and np.allclose(init.stacked(), P_full, rtol=1e-12, atol=0):
        # nothing to refine: hand back the caller's point without a log/exp round trip
        P_full = init.stacked()
    hv = ens.HiddenVariables.from_stacked(model, P_full)
    report = residual_report(model, hv, observed, eps=eps)
    report.iterations = it
    flags = sorted(
        (int(i), spec.params[b])
        for b in range(B)
        for i in np.flatnonzero(flagged[b, labels])
    )
    report.boundary_flags = flags
    report.converged = bool(converged and report.max_rel_error <= eps)
    if not report.converged and not message:
        message = "tolerance not met"
    report.message = message or "ok"
    return hv, report


def _newton_direction(F, g):
    """Solve ``F d = g`` with a least-squares fallback for singular systems."""
    try:
        d = np.linalg.solve(F, g)
        if np.all(np.isfinite(d)):
            return d
    except np.linalg.LinAlgError:
        pass
    scale = np.max(np.abs(np.diag(F))) if F.size else 1.0
    reg = F + 1e-10 * max(scale, 1e-300) * np.eye(F.shape[0])
    return np.linalg.lstsq(reg, g, rcond=None)[0]


def residual_report(
    model: str, hv: ens.HiddenVariables, observed: ConstraintSet, eps: float = 1e-6
) -> SolveReport:
    """Re-evaluate ``hv`` against ``observed`` without iterating."""
    _check_inputs(model, observed, eps)
    if hv.model != model:
        raise ModelMismatchError(f"hidden variables are for {hv.model}, not {model}")
    if hv.n != observed.n:
        raise ModelMismatchError("constraint and parameter lengths differ")
    if not ens.domain_ok(model, hv.vectors()):
        raise DomainError(f"{model} hidden variables violate the parameter-product domain")
    obs = observed.stacked().astype(float)
    with np.errstate(all="ignore"):
        E = ens.expected_constraints(model, hv).stacked()
        lam = ens.log_likelihood(model, hv, observed)
    if not np.all(np.isfinite(E)):
        raise DomainError("non-finite expected constraints")
    rel = _rel_error(obs, E)
    P = hv.stacked()
    names = MODELS[model].params
    with np.errstate(divide="ignore"):
        at_cap = np.log(P) >= THETA_CAP - 1e-9
    starved = (P == 0) & (obs > 0)
    flags = sorted(
        (int(i), names[b]) for b, i in zip(*np.nonzero(at_cap | starved))
    )
    return SolveReport(
        iterations=0,
        max_rel_error=rel,
        log_likelihood=float(lam),
        boundary_flags=flags,
        converged=rel <= eps,
        message="ok" if rel <= eps else "tolerance not met",
    )
