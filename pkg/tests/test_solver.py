import numpy as np
import pytest

from conftest import ALL_MODELS
from fixtures import heterogeneous_graph
from maxsam import ensembles as ens
from maxsam.ensembles import HiddenVariables
from maxsam.exceptions import ConstraintError, DomainError, ModelMismatchError
from maxsam.netcore import MODELS, ConstraintSet, compute_constraints
from maxsam.solver import initial_guess, residual_report, solve

K4 = ConstraintSet("UBCM", {"k": [1, 1, 1, 1]})


def test_symmetric_degrees():
    hv, rep = solve("UBCM", K4)
    np.testing.assert_allclose(hv.x, 2 ** -0.5, rtol=1e-5)
    A = ens.expected_matrices("UBCM", hv).adjacency
    np.testing.assert_allclose(A[~np.eye(4, dtype=bool)], 1 / 3, rtol=1e-5)
    assert rep.converged and rep.max_rel_error <= 1e-6 and rep.boundary_flags == []


def test_symmetric_strengths():
    hv, rep = solve("UWCM", ConstraintSet("UWCM", {"s": [1, 1, 1]}))
    np.testing.assert_allclose(hv.x, 3 ** -0.5, rtol=1e-5)
    W = ens.expected_matrices("UWCM", hv).weight
    np.testing.assert_allclose(W[~np.eye(3, dtype=bool)], 0.5, rtol=1e-5)
    assert rep.converged


def test_saturated_hub():
    obs = ConstraintSet("UBCM", {"k": [1, 1, 2]})
    hv, rep = solve("UBCM", obs)
    assert rep.converged
    assert (2, "x") in [tuple(f) for f in rep.boundary_flags]
    E = ens.expected_constraints("UBCM", hv)["k"]
    np.testing.assert_allclose(E, [1, 1, 2], rtol=1e-6)
    A = ens.expected_matrices("UBCM", hv).adjacency
    assert A[0, 2] > 1 - 1e-6 and A[1, 2] > 1 - 1e-6 and A[0, 1] < 1e-6


@pytest.mark.parametrize("model", ALL_MODELS)
def test_gradient_vanishes_at_solution(model):
    g = heterogeneous_graph(model, 3, n=30)
    obs = compute_constraints(g, model)
    hv, rep = solve(model, obs)
    assert rep.converged
    grad = ens.likelihood_gradient(model, hv, obs).reshape(hv.stacked().shape)
    # stationarity in log-parameters: x * dL/dx = observed - expected
    assert np.max(np.abs(hv.stacked() * grad)) <= 1e-6 * max(1, obs.stacked().max())


@pytest.mark.parametrize("model", ALL_MODELS)
def test_permutation_equivariance(model):
    g = heterogeneous_graph(model, 4, n=30)
    obs = compute_constraints(g, model)
    perm = np.random.default_rng(0).permutation(30)
    obs_p = ConstraintSet(model, {b: obs[b][perm] for b in obs.blocks})
    hv, _ = solve(model, obs)
    hp, _ = solve(model, obs_p)
    Ep = ens.expected_constraints(model, hp).stacked()
    E = ens.expected_constraints(model, hv).stacked()[:, perm]
    np.testing.assert_allclose(Ep, E, rtol=2e-6, atol=1e-9)


@pytest.mark.parametrize("model", ALL_MODELS)
def test_refinement_idempotent(model):
    obs = compute_constraints(heterogeneous_graph(model, 5, n=30), model)
    hv, rep = solve(model, obs)
    hv2, rep2 = solve(model, obs, init=hv)
    assert rep2.max_rel_error <= rep.max_rel_error
    hv3, rep3 = solve(model, obs, init=hv, force_refine=True)
    assert rep3.max_rel_error <= rep.max_rel_error


def test_deterministic():
    obs = compute_constraints(heterogeneous_graph("RWCM", 6, n=30), "RWCM")
    a, ra = solve("RWCM", obs)
    b, rb = solve("RWCM", obs)
    assert np.array_equal(a.stacked(), b.stacked()) and ra.iterations == rb.iterations


def test_equal_constraints_equal_parameters():
    obs = ConstraintSet("UBCM", {"k": [2, 2, 2, 1, 1, 3, 3]})
    hv, rep = solve("UBCM", obs)
    assert rep.converged
    assert hv.x[0] == hv.x[1] == hv.x[2] and hv.x[3] == hv.x[4] and hv.x[5] == hv.x[6]


def test_zero_constraints_fixed_at_zero():
    obs = ConstraintSet("UECM", {"k": [0, 1, 1, 2], "s": [0, 2, 3, 5]})
    hv, rep = solve("UECM", obs)
    assert hv.x[0] == 0 and hv.y[0] == 0
    assert rep.converged


def test_residual_report_cases():
    hv, _ = solve("UBCM", K4)
    assert residual_report("UBCM", hv, K4).max_rel_error <= 1e-6
    zero = HiddenVariables("UBCM", x=np.zeros(4))
    assert residual_report("UBCM", zero, K4).max_rel_error == pytest.approx(1.0)
    bumped = HiddenVariables("UBCM", x=hv.x * 1.1)
    assert residual_report("UBCM", bumped, K4).max_rel_error > residual_report("UBCM", hv, K4).max_rel_error


def test_residual_report_errors():
    with pytest.raises(ModelMismatchError):
        residual_report("UWCM", HiddenVariables("UBCM", x=np.ones(4)), K4)
    with pytest.raises(ModelMismatchError):
        residual_report("UBCM", HiddenVariables("UBCM", x=np.ones(3)), K4)
    with pytest.raises(DomainError):
        residual_report("UWCM", HiddenVariables("UWCM", x=np.ones(2)), ConstraintSet("UWCM", {"s": [1, 1]}))


def test_max_iter_exhausted():
    obs = compute_constraints(heterogeneous_graph("UWCM", 7, n=30), "UWCM")
    hv, rep = solve("UWCM", obs, max_iter=1)
    assert not rep.converged and rep.iterations <= 1
    assert rep.max_rel_error > 1e-6


def test_bad_arguments():
    with pytest.raises(ValueError):
        solve("UBCM", K4, eps=0)
    with pytest.raises(ModelMismatchError):
        solve("UWCM", K4)
    with pytest.raises(ConstraintError):
        ConstraintSet("UBCM", {"k": [1, 2, 2]})


@pytest.mark.parametrize("model", ALL_MODELS)
def test_initial_guess_in_domain(model):
    obs = compute_constraints(heterogeneous_graph(model, 8, n=30), model)
    hv = initial_guess(model, obs)
    assert ens.domain_ok(model, hv.vectors())
    for b, p in zip(MODELS[model].blocks, MODELS[model].params):
        assert np.all((getattr(hv, p) == 0) == (obs[b] == 0))


def test_report_dict_fields():
    _, rep = solve("UBCM", K4)
    d = rep.to_dict()
    for key in ("iterations", "max_rel_error", "log_likelihood", "boundary_flags", "converged"):
        assert key in d
