"""Acceptance suite: one test per criterion, summarized after the run."""
from __future__ import annotations

import json
import math
import os
import time

import numpy as np
import pytest
from scipy import stats

import oracles
from conftest import ALL_MODELS, random_hv
from fixtures import DATA, heterogeneous_graph
from maxsam import cli
from maxsam import ensembles as ens
from maxsam import microcanonical as mc
from maxsam.analysis import fluctuation_report, heterogeneity_report
from maxsam.ensembles import HiddenVariables
from maxsam.netcore import MODELS, ConstraintSet, compute_constraints
from maxsam.sampler import sample_ensemble, sample_graph
from maxsam.solver import solve


def _enumeration_setup(model, rng):
    spec = MODELS[model]
    if not spec.weighted:
        return 4, 0, random_hv(model, 4, rng)
    n = 3 if spec.directed else 4
    # products <= 0.0196 keep the mass above a cap of 6 below 1e-9
    hv = random_hv(model, n, rng, lo=0.05, hi=0.14)
    return n, 6, hv


@pytest.mark.acceptance(1, "enumeration oracle equivalence, all models, 1e-10 absolute")
def test_enumeration_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    for model in ALL_MODELS:
        for _ in range(3):
            n, cap, hv = _enumeration_setup(model, rng)
            P = hv.vectors()
            E, V, A, Wm, mass = oracles.enumerate_ensemble(model, P, n, cap)
            assert 1.0 - mass < 1e-9, (model, 1.0 - mass)
            exp = ens.expected_constraints(model, hv).stacked()
            var = ens.constraint_variances(model, hv)
            var = np.vstack([var[b] for b in MODELS[model].blocks])
            mats = ens.expected_matrices(model, hv)
            np.testing.assert_allclose(exp, E, rtol=0, atol=1e-10, err_msg=model)
            np.testing.assert_allclose(var, V, rtol=0, atol=1e-10, err_msg=model)
            np.testing.assert_allclose(mats.adjacency, A, rtol=0, atol=1e-10, err_msg=model)
            if mats.weight is not None:
                np.testing.assert_allclose(mats.weight, Wm, rtol=0, atol=1e-10, err_msg=model)
    assert time.perf_counter() - start < 60


@pytest.mark.acceptance(2, "solver fidelity on 20 heterogeneous n=50 fixtures per model")
@pytest.mark.parametrize("model", ALL_MODELS)
def test_solver_fidelity(model):
    for index in range(20):
        g = heterogeneous_graph(model, index)
        observed = compute_constraints(g, model)
        het = heterogeneity_report(g, symmetrize=True)
        assert het.k_max > het.k_c and het.naive_above_one >= 1
        assert het.naive_table.max() > 1.0
        start = time.perf_counter()
        hv, rep = solve(model, observed, eps=1e-6)
        elapsed = time.perf_counter() - start
        assert rep.converged, (model, index, rep.message)
        assert rep.max_rel_error <= 1e-6, (model, index, rep.max_rel_error)
        assert elapsed < 5.0, (model, index, elapsed)
        A = ens.expected_matrices(model, hv).adjacency
        assert np.all((A >= 0) & (A <= 1))


def _fd_gradient(model, hv, observed, rel_step=1e-5):
    P = hv.stacked()
    fd = np.zeros(P.size)
    flat = P.ravel()
    for k in range(flat.size):
        h = rel_step * flat[k]
        vals = []
        for sgn in (1.0, -1.0):
            Q = flat.copy()
            Q[k] += sgn * h
            vals.append(ens.log_likelihood(model, HiddenVariables.from_stacked(model, Q.reshape(P.shape)), observed))
        fd[k] = (vals[0] - vals[1]) / (2 * h)
    return fd


@pytest.mark.acceptance(3, "likelihood gradient vs central differences, 10 points per model")
@pytest.mark.parametrize("model", ALL_MODELS)
def test_gradient_check(model):
    rng = np.random.default_rng([3, ALL_MODELS.index(model)])
    n = 6
    for _ in range(10):
        hv = random_hv(model, n, rng)
        # observed constraints from one draw of an independent interior point
        W = sample_graph(model, random_hv(model, n, rng), rng).entries
        observed = ConstraintSet(model, dict(zip(MODELS[model].blocks, oracles.constraints_of(model, W))))
        g = ens.likelihood_gradient(model, hv, observed)
        fd = _fd_gradient(model, hv, observed)
        err = np.max(np.abs(fd - g)) / max(np.max(np.abs(g)), 1e-12)
        assert err <= 1e-6, (model, err)


@pytest.mark.acceptance(4, "sampling correctness with 1000 samples")
def test_sampling_correctness():
    start = time.perf_counter()
    count = 1000
    g = heterogeneous_graph("UBCM", 0)
    observed = compute_constraints(g, "UBCM")
    hv, _ = solve("UBCM", observed)
    ss = sample_ensemble("UBCM", hv, count, seed=42)
    p = ens.expected_matrices("UBCM", hv).adjacency
    iu = np.triu_indices(g.n, 1)
    gap = np.abs(ss.mean_binary - p)[iu]
    tol = 4 * np.sqrt(p * (1 - p) / count)[iu]
    frac = np.mean(gap <= tol)
    assert frac >= 0.999, frac

    for model in ALL_MODELS:
        g = heterogeneous_graph(model, 0)
        observed = compute_constraints(g, model)
        hv, rep = solve(model, observed)
        assert rep.converged
        ss = sample_ensemble(model, hv, count, seed=42)
        var = ens.constraint_variances(model, hv)
        for b, name in enumerate(MODELS[model].blocks):
            vals = ss.constraints[:, b].astype(float)
            sigma2 = var[name]
            mean = vals.mean(axis=0)
            bound = 4 * np.sqrt(sigma2 / count)
            obs = observed[name]
            assert np.all(np.abs(mean - obs) <= bound + 1e-9), (model, name)
            # relative standard error of the sample variance from the fourth moment
            c = vals - mean
            s2 = (c ** 2).sum(axis=0) / (count - 1)
            m4 = (c ** 4).mean(axis=0)
            live = sigma2 > 0
            se = np.sqrt(np.maximum(m4 - s2 ** 2, 0.0) / count)
            assert np.all(np.abs(s2 - sigma2)[live] <= 5 * se[live]), (model, name)
            assert np.all(s2[~live] == 0)
    assert time.perf_counter() - start < 120


@pytest.mark.acceptance(5, "fluctuation bounds and the UECM vanishing-y limit")
def test_fluctuation_bounds():
    for model in ALL_MODELS:
        for index in range(5):
            g = heterogeneous_graph(model, index)
            observed = compute_constraints(g, model)
            hv, rep = solve(model, observed)
            assert rep.converged
            fr = fluctuation_report(model, hv, observed)
            for name, blk in fr.blocks.items():
                live = ~blk.excluded
                d = blk.delta[live]
                if not MODELS[model].weighted or (model == "UECM" and name == "k"):
                    k = blk.expected[live]
                    hi = np.sqrt(np.maximum(1 / k - 1 / (g.n - 1), 0))
                    assert np.all(d >= 0) and np.all(d <= hi + 1e-12), (model, name)
                elif model in ("UWCM", "DWCM") or name == "s_recip":
                    s = blk.expected[live]
                    assert np.all(d >= np.sqrt(1 / s + 1 / (g.n - 1)) - 1e-12), (model, name)
                    assert np.all(d <= np.sqrt(1 / s + 1) + 1e-12), (model, name)
                elif model == "RWCM":
                    s = blk.expected[live]
                    assert np.all(d >= np.sqrt(1 / s + 1 / (g.n - 1)) - 1e-12), (model, name)
                assert blk.violations().size == 0, (model, name)

    g = heterogeneous_graph("UECM", 0)
    observed = compute_constraints(g, "UECM")
    hv, _ = solve("UECM", observed)
    fr = fluctuation_report("UECM", hv, observed)
    s_blk = fr.blocks["s"]
    live = ~s_blk.excluded
    assert np.mean(s_blk.delta[live] > s_blk.bound_lo[live]) >= 0.5

    small = HiddenVariables("UECM", x=hv.x, y=hv.y * 1e-3)
    fr = fluctuation_report("UECM", small, observed)
    gap = np.abs(fr.blocks["s"].delta - fr.blocks["k"].delta)
    assert np.nanmax(gap) <= 1e-2


@pytest.mark.acceptance(6, "microcanonical distillation and log10 bookkeeping")
def test_microcanonical_distillation():
    target = ConstraintSet("UBCM", {"k": [1, 1, 1, 1]})
    hv, _ = solve("UBCM", target)
    R_c = 100_000
    accepted, est = mc.filter_stream("UBCM", hv, target, R_c, seed=7)
    p = 48 / 729
    se = math.sqrt(p * (1 - p) / R_c)
    assert abs(est.acceptance_rate - p) <= 4 * se
    keys = [tuple(map(tuple, np.argwhere(np.triu(g.entries)))) for _, g in accepted]
    counts = np.array([keys.count(k) for k in sorted(set(keys))])
    assert counts.size == 3
    assert stats.chisquare(counts).pvalue > 0.01

    odd = ConstraintSet("UBCM", {"k": [1, 1, 1]}, strict=False)
    none, est = mc.filter_stream("UBCM", HiddenVariables("UBCM", x=np.ones(3)), odd, 20_000, seed=7)
    assert none == [] and est.accepted == 0 and est.acceptance_rate == 0.0


@pytest.mark.acceptance(6, "microcanonical distillation and log10 bookkeeping")
def test_canonical_fraction_arithmetic():
    # f_c = 1000 / 2^(N(N-1)/2) for N = 215; expected log10 value -6919.85
    est = mc.distillation_estimates(-1.0, 1000, 215, "UBCM")
    assert abs(est.log10_f_c - (-6919.85)) <= 0.01, est.log10_f_c


def _run(argv):
    assert cli.main(argv) == 0, argv


def _tree_bytes(root):
    out = {}
    for base, _, files in os.walk(root):
        for f in files:
            path = os.path.join(base, f)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


@pytest.mark.acceptance(7, "sample output byte-identical across --threads")
def test_cli_determinism(tmp_path):
    deg = tmp_path / "degrees.txt"
    g = heterogeneous_graph("UWCM", 1, n=30)
    deg.write_text("\n".join(str(v) for v in compute_constraints(g, "UWCM")["s"]) + "\n")
    _run(["solve", "--model", "UWCM", "--par", str(deg), "--out", str(tmp_path / "fit")])
    params = str(tmp_path / "fit" / "params.json")
    trees = []
    for i, threads in enumerate(("1", "1", "4")):
        out = tmp_path / f"run{i}"
        _run(["sample", "--params", params, "--count", "300", "--seed", "42", "--retain",
              "--threads", threads, "--out", str(out)])
        trees.append(_tree_bytes(out))
    assert len(trees[0]) > 300
    assert trees[0] == trees[1] == trees[2]


@pytest.mark.acceptance(8, "end-to-end pipelines on the Les Miserables network")
@pytest.mark.slow
def test_public_network_pipelines(tmp_path):
    start = time.perf_counter()
    edges = os.path.join(DATA, "lesmis.tsv")
    cases = {"UBCM": ["degree"], "UWCM": ["strength"], "UECM": ["degree", "strength"]}
    for model, constrained in cases.items():
        out = tmp_path / model
        extra = ["--binarize"] if model == "UBCM" else []
        _run(["solve", "--model", model, "--list", edges, "--out", str(out)] + extra)
        params = json.loads((out / "params.json").read_text())
        assert params["converged"] and params["max_rel_error"] <= 1e-6
        _run(["analyze", "--params", str(out / "params.json"), "--list", edges, "--count", "1000",
              "--seed", "42", "--out", str(out)] + extra)
        report = json.loads((out / "report.json").read_text())
        block_of = {"degree": "k", "strength": "s"}
        for stat in constrained:
            # the constraint block and the graph statistic must both sit on the identity
            for name in (block_of[stat], stat):
                frac = report["statistics"][name]["observed_within_ci"]
                assert frac >= 0.95, (model, name, frac)
        for name in report["statistics"]:
            assert (out / f"stat_{name}.csv").exists()
        assert (out / "convergence_adjacency.csv").exists()
    assert time.perf_counter() - start < 600
