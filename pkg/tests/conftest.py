"""Shared helpers and the acceptance summary printed after each run."""
from __future__ import annotations

import numpy as np
import pytest

from maxsam.ensembles import HiddenVariables
from maxsam.netcore import MODELS

ALL_MODELS = tuple(MODELS)
BINARY_MODELS = ("UBCM", "DBCM", "RBCM")
WEIGHTED_MODELS = ("UWCM", "DWCM", "RWCM", "UECM")

_RESULTS = {}


def random_hv(model: str, n: int, rng: np.random.Generator, lo: float = 0.1, hi: float = 0.9) -> HiddenVariables:
    """Random interior hidden variables.

    Binary models draw every parameter from ``[0.3, 2]``; weighted ones draw
    the product-constrained vectors from ``[lo, hi]`` so every product stays
    below 1. UECM draws ``x`` from ``[0.5, 3]``.
    """
    spec = MODELS[model]
    vals = {}
    for p in spec.params:
        if not spec.weighted or (model == "UECM" and p == "x"):
            a, b = (0.3, 2.0) if not spec.weighted else (0.5, 3.0)
            vals[p] = rng.uniform(a, b, n)
        else:
            vals[p] = rng.uniform(lo, hi, n)
    return HiddenVariables(model, **vals)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        number, title = mark.args
        ok = rep.passed
        prev = _RESULTS.get(number, (title, True))
        _RESULTS[number] = (title, prev[1] and ok)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, ok = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}")
